#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pdagrnn/errors.hpp"
#include "pdagrnn/train.hpp"
#include "reference_model.hpp"
#include "test_util.hpp"

#include <cmath>
#include <fstream>

using namespace pdagrnn;

namespace {

ModelConfig tiny(std::size_t m, Connectivity conn = Connectivity::eight) {
    ModelConfig c;
    c.m = m;
    c.connectivity = conn;
    c.bands = 2;
    c.hidden = 3;
    c.fc1 = 4;
    c.classes = 3;
    c.dropout = 0.0;
    return c;
}

Patch random_patch(std::size_t n, std::size_t bands, std::uint64_t seed) {
    Patch p;
    p.n = n;
    p.bands = bands;
    p.values.resize(n * n * bands);
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& v : p.values) v = g(rng);
    return p;
}

ModelParams random_params(const ModelConfig& c, std::uint64_t seed) {
    auto p = init_params(c, seed);
    Rng rng(seed + 1000);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& t : tensors(p))
        if (t.cols == 1)
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = u(rng);
    return p;
}

Matrix& shared_tensor(ModelParams& p, std::size_t t) {
    static Matrix dummy;
    if (t < 20) {
        auto& d = p.directions[t / 5];
        switch (t % 5) {
            case 0: return d.S;
            case 1: return d.U;
            case 2: return d.V;
            default: break;
        }
    }
    if (t == 20) return p.head.W1;
    if (t == 22) return p.head.W2;
    return dummy;
}

Vector& shared_vector(ModelParams& p, std::size_t t) {
    if (t < 20) return t % 5 == 3 ? p.directions[t / 5].a : p.directions[t / 5].b;
    return t == 21 ? p.head.c1 : p.head.c2;
}

bool is_vector(std::size_t t) { return (t < 20 && t % 5 >= 3) || t == 21 || t == 23; }

/// Forward-mode derivative of the reference loss with respect to one shared
/// entry; `vertex` >= 0 seeds only that vertex's copy of S, U or V.
double dual_derivative(const ModelParams& params, const ModelConfig& c, const Patch& patch, int target, std::size_t t, Eigen::Index i,
                       Eigen::Index j, int vertex = -1) {
    auto u = reference::unroll<reference::Dual>(params, c);
    if (t < 20) {
        auto& d = u.dirs[t / 5];
        const std::size_t field = t % 5;
        if (field == 3) d.a[i].d = 1.0;
        if (field == 4) d.b[i].d = 1.0;
        if (field < 3) {
            auto& copies = field == 0 ? d.S : field == 1 ? d.U : d.V;
            for (int v = 0; v < static_cast<int>(copies.size()); ++v)
                if (vertex < 0 || vertex == v) copies[v][i][j].d = 1.0;
        }
    } else if (t == 20) {
        u.W1[i][j].d = 1.0;
    } else if (t == 21) {
        u.c1[i].d = 1.0;
    } else if (t == 22) {
        u.W2[i][j].d = 1.0;
    } else {
        u.c2[i].d = 1.0;
    }
    return reference::run(u, patch, target).loss.d;
}

GradBuffer analytic(const ModelParams& params, const ModelConfig& c, const Patch& patch, int target, const PatchTopology& topo) {
    const auto trace = forward(params, c, patch, topo, Mode::eval);
    return backward(params, c, trace, target, topo);
}

struct Scene {
    HsiCube cube;
    LabelMap labels;
    Split split;
};

Scene small_scene(std::size_t per_class = 6) {
    SynthParams sp;
    sp.classes = 3;
    sp.bands = 2;
    sp.height = 12;
    sp.width = 12;
    sp.block_size = 4;
    sp.noise_std = 0.05;
    sp.seed = 2;
    auto [cube, labels] = synth_generate(sp);
    SplitSpec spec;
    spec.per_class = {per_class};
    spec.seed = 1;
    auto split = stratified_split(labels, spec);
    return {std::move(cube), std::move(labels), std::move(split)};
}

bool identical(const ModelParams& a, const ModelParams& b) {
    const auto ta = tensors(a);
    const auto tb = tensors(b);
    for (std::size_t i = 0; i < ta.size(); ++i)
        for (Eigen::Index j = 0; j < ta[i].size(); ++j)
            if (ta[i].data[j] != tb[i].data[j]) return false;
    return true;
}

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
    const auto ta = tensors(a);
    const auto tb = tensors(b);
    double worst = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i)
        for (Eigen::Index j = 0; j < ta[i].size(); ++j) worst = std::max(worst, std::abs(ta[i].data[j] - tb[i].data[j]));
    return worst;
}

}  // namespace

TEST_CASE("output bias gradient is probabilities minus one-hot") {
    const auto c = tiny(2);
    const auto params = random_params(c, 1);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    const auto patch = random_patch(c.patch_side(), c.bands, 2);
    const auto trace = forward(params, c, patch, topo, Mode::eval);
    const auto g = backward(params, c, trace, 2, topo);
    Vector want = trace.probabilities;
    want[1] -= 1.0;
    CHECK((g.head.c2 - want).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(g.all_finite());
    CHECK_THROWS_AS(backward(params, c, trace, 4, topo), ValidationError);
}

TEST_CASE("backward equals forward-mode derivatives of the reference network") {
    for (std::size_t m = 1; m <= 3; ++m)
        for (auto conn : {Connectivity::four, Connectivity::eight}) {
            const auto c = tiny(m, conn);
            const auto params = random_params(c, 10 + m);
            const auto topo = make_patch_topology(c.patch_side(), conn);
            const auto patch = random_patch(c.patch_side(), c.bands, 20 + m);
            const int target = static_cast<int>(m % 3) + 1;
            auto g = analytic(params, c, patch, target, topo);
            for (std::size_t t = 0; t < 24; ++t) {
                if (is_vector(t)) {
                    const Vector& gv = shared_vector(g, t);
                    for (Eigen::Index i = 0; i < gv.size(); ++i)
                        CHECK(std::abs(gv[i] - dual_derivative(params, c, patch, target, t, i, 0)) <= 1e-10);
                } else {
                    const Matrix& gm = shared_tensor(g, t);
                    for (Eigen::Index i = 0; i < gm.rows(); ++i)
                        for (Eigen::Index j = 0; j < gm.cols(); ++j)
                            CHECK(std::abs(gm(i, j) - dual_derivative(params, c, patch, target, t, i, j)) <= 1e-10);
                }
            }
        }
}

TEST_CASE("shared-weight gradient is the sum of per-vertex copy gradients") {
    for (std::size_t m : {2u, 3u}) {
        const auto c = tiny(m);
        const auto params = random_params(c, 40 + m);
        const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
        const auto patch = random_patch(c.patch_side(), c.bands, 50 + m);
        auto g = analytic(params, c, patch, 1, topo);
        const int vertices = static_cast<int>(m * m);
        for (std::size_t t = 0; t < 20; ++t) {
            if (is_vector(t)) continue;
            const Matrix& gm = shared_tensor(g, t);
            for (Eigen::Index i = 0; i < gm.rows(); ++i)
                for (Eigen::Index j = 0; j < gm.cols(); ++j) {
                    double sum = 0.0;
                    for (int v = 0; v < vertices; ++v) sum += dual_derivative(params, c, patch, 1, t, i, j, v);
                    CHECK(std::abs(gm(i, j) - sum) <= 1e-10);
                }
        }
    }
}

TEST_CASE("sink-only copies carry no recurrent message gradient") {
    // the sink never sends a message, so its S copy does not affect the loss
    const auto c = tiny(2);
    const auto params = random_params(c, 3);
    const auto patch = random_patch(c.patch_side(), c.bands, 4);
    for (std::size_t k = 0; k < 4; ++k) {
        const auto sink = reference::lattice_sink(2, static_cast<Direction>(k));
        CHECK(dual_derivative(params, c, patch, 1, k * 5, 0, 1, sink.row * 2 + sink.col) == 0.0);
    }
}

TEST_CASE("grad_check passes on small configurations") {
    GradCheckConfig base;
    const auto report = grad_check(base);
    CHECK(report.passed);
    CHECK(report.max_rel_error <= 1e-5);
    CHECK(report.tensors.size() == 24);

    GradCheckConfig one = base;
    one.model.m = 1;
    CHECK(grad_check(one).passed);

    GradCheckConfig four = base;
    four.model.connectivity = Connectivity::four;
    CHECK(grad_check(four).passed);

    GradCheckConfig minimal = base;
    minimal.model.m = 1;
    minimal.model.hidden = 1;
    minimal.model.bands = 1;
    CHECK(grad_check(minimal).passed);
}

TEST_CASE("grad_check catches a wrong backward pass") {
    GradCheckConfig cfg;
    auto broken = [](const ModelParams& p, const ModelConfig& c, const ForwardTrace& t, int target, const PatchTopology& topo) {
        auto g = backward(p, c, t, target, topo);
        g.directions[2].V *= 1.01;
        return g;
    };
    const auto report = grad_check(cfg, broken);
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_error > 1e-3);

    cfg.tolerance = 0.0;
    CHECK_FALSE(grad_check(cfg).passed);
}

TEST_CASE("finite differences agree with backward up to roundoff across seeds") {
    for (std::size_t m = 1; m <= 3; ++m)
        for (auto conn : {Connectivity::four, Connectivity::eight})
            for (std::uint64_t seed = 0; seed < 4; ++seed) {
                auto c = tiny(m, conn);
                c.bands = 4;
                c.hidden = 5;
                c.fc1 = 6;
                const auto params = random_params(c, seed * 7 + m);
                const auto topo = make_patch_topology(c.patch_side(), conn);
                const auto patch = random_patch(c.patch_side(), c.bands, seed + 99);
                const int target = static_cast<int>(seed % 3) + 1;
                const auto g = analytic(params, c, patch, target, topo);
                const auto fd = finite_diff_grad(params, c, patch, target, topo, 1e-6);
                const auto ta = tensors(g);
                const auto tf = tensors(fd);
                for (std::size_t i = 0; i < ta.size(); ++i)
                    for (Eigen::Index j = 0; j < ta[i].size(); ++j) {
                        const double a = ta[i].data[j], f = tf[i].data[j];
                        CHECK((std::abs(a - f) <= 1e-9 || mixed_relative_error(a, f) <= 1e-5));
                    }
            }
}

TEST_CASE("finite differences converge quadratically") {
    const auto c = tiny(2);
    const auto params = random_params(c, 8);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    const auto patch = random_patch(c.patch_side(), c.bands, 9);
    const auto g = analytic(params, c, patch, 3, topo);
    const double coarse = max_abs_diff(g, finite_diff_grad(params, c, patch, 3, topo, 1e-2));
    const double fine = max_abs_diff(g, finite_diff_grad(params, c, patch, 3, topo, 1e-3));
    CHECK(coarse > 0.0);
    CHECK(fine < coarse / 30.0);
}

TEST_CASE("finite differences reject bad settings") {
    auto c = tiny(2);
    const auto params = random_params(c, 1);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    const auto patch = random_patch(c.patch_side(), c.bands, 1);
    CHECK_THROWS_AS(finite_diff_grad(params, c, patch, 1, topo, 0.0), ValidationError);
    CHECK_THROWS_AS(finite_diff_grad(params, c, patch, 1, topo, -1e-6), ValidationError);
    c.dropout = 0.3;
    CHECK_THROWS_AS(finite_diff_grad(params, c, patch, 1, topo, 1e-6), ValidationError);
}

TEST_CASE("dead fc1 units stop every upstream gradient") {
    const auto c = tiny(2);
    auto params = random_params(c, 5);
    params.head.c1.setConstant(-100.0);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    const auto patch = random_patch(c.patch_side(), c.bands, 6);
    const auto g = analytic(params, c, patch, 1, topo);
    const auto fd = finite_diff_grad(params, c, patch, 1, topo, 1e-6);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(g.directions[k].S.isZero(0.0));
        CHECK(g.directions[k].U.isZero(0.0));
        CHECK(g.directions[k].b.isZero(0.0));
        CHECK(fd.directions[k].U.isZero(0.0));
    }
    CHECK(g.head.W1.isZero(0.0));
    CHECK(g.head.W2.isZero(0.0));
    CHECK_FALSE(g.head.c2.isZero(0.0));
}

TEST_CASE("sgd_step") {
    const auto c = tiny(1);
    auto params = random_params(c, 1);
    const auto start = params;
    auto grads = random_params(c, 2);
    TrainConfig tc;
    tc.learning_rate = 0.1;
    tc.momentum = 0.9;

    auto zero = OptimState::zeros_like(params);
    auto still = params;
    sgd_step(still, OptimState::zeros_like(params).velocity, zero, tc);
    CHECK(identical(still, start));

    auto state = OptimState::zeros_like(params);
    sgd_step(params, grads, state, tc);
    sgd_step(params, grads, state, tc);
    // two steps with constant g move by lr * (1 + 1.9) g
    const auto tp = tensors(params);
    const auto ts = tensors(start);
    const auto tg = tensors(grads);
    for (std::size_t i = 0; i < tp.size(); ++i)
        for (Eigen::Index j = 0; j < tp[i].size(); ++j) CHECK(tp[i].data[j] == doctest::Approx(ts[i].data[j] - 0.1 * 2.9 * tg[i].data[j]).epsilon(1e-12));

    tc.momentum = 0.0;
    auto plain = start;
    auto fresh = OptimState::zeros_like(start);
    sgd_step(plain, grads, fresh, tc);
    sgd_step(plain, grads, fresh, tc);
    const auto tq = tensors(plain);
    for (std::size_t i = 0; i < tq.size(); ++i)
        for (Eigen::Index j = 0; j < tq[i].size(); ++j) CHECK(tq[i].data[j] == doctest::Approx(ts[i].data[j] - 0.2 * tg[i].data[j]).epsilon(1e-12));
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc = TrainConfig{};
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
    tc = TrainConfig{};
    tc.momentum = 1.0;
    CHECK_THROWS_AS(tc.validate(), ValidationError);
}

TEST_CASE("one full-batch step lowers the loss") {
    const auto scene = small_scene();
    auto c = tiny(2);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    TrainConfig tc;
    tc.batch_size = 1000;
    tc.momentum = 0.0;
    tc.learning_rate = 0.05;
    tc.epochs = 2;
    tc.seed = 4;
    const auto r = fit(scene.cube, scene.labels, scene.split, c, tc, topo);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log[0].epoch == 1);
    CHECK(r.log[1].mean_loss < r.log[0].mean_loss);
}

TEST_CASE("full-batch fit equals manual gradient descent") {
    const auto scene = small_scene();
    const auto c = tiny(2);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    TrainConfig tc;
    tc.batch_size = scene.split.train.size();
    tc.momentum = 0.0;
    tc.learning_rate = 0.1;
    tc.epochs = 1;
    const auto initial = random_params(c, 77);
    const auto r = fit(scene.cube, scene.labels, scene.split, c, tc, topo, initial);

    const auto norm = fit_normalizer(scene.cube, scene.split.train);
    auto mean = ModelParams::zeros(c);
    for (const Coord p : scene.split.train) {
        const auto patch = extract_patch(scene.cube, norm, p.row, p.col, c.patch_side());
        accumulate(mean, analytic(initial, c, patch, scene.labels.at(p.row, p.col), topo), 1.0 / static_cast<double>(scene.split.train.size()));
    }
    auto manual = initial;
    accumulate(manual, mean, -0.1);
    CHECK(max_abs_diff(manual, r.params) <= 1e-12);
}

TEST_CASE("fit is deterministic and thread-count invariant") {
    const auto scene = small_scene();
    auto c = tiny(2);
    c.dropout = 0.4;
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    TrainConfig tc;
    tc.batch_size = 5;
    tc.epochs = 3;
    tc.seed = 11;
    const auto a = fit(scene.cube, scene.labels, scene.split, c, tc, topo);
    const auto b = fit(scene.cube, scene.labels, scene.split, c, tc, topo);
    CHECK(identical(a.params, b.params));
    tc.threads = 4;
    const auto d = fit(scene.cube, scene.labels, scene.split, c, tc, topo);
    CHECK(identical(a.params, d.params));
    for (std::size_t e = 0; e < a.log.size(); ++e) CHECK(a.log[e].mean_loss == d.log[e].mean_loss);
    tc.seed = 12;
    tc.threads = 1;
    CHECK_FALSE(identical(a.params, fit(scene.cube, scene.labels, scene.split, c, tc, topo).params));
}

TEST_CASE("zero epochs leave the initial parameters alone") {
    const auto scene = small_scene();
    const auto c = tiny(2);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    TrainConfig tc;
    tc.epochs = 0;
    tc.seed = 5;
    const auto r = fit(scene.cube, scene.labels, scene.split, c, tc, topo);
    CHECK(identical(r.params, init_params(c, make_stream(5, Stream::init)())));
    CHECK(r.log.empty());
}

TEST_CASE("fit rejects unusable input") {
    auto scene = small_scene();
    const auto c = tiny(2);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    TrainConfig tc;
    Split empty;
    CHECK_THROWS_AS(fit(scene.cube, scene.labels, empty, c, tc, topo), ValidationError);
    auto wide = c;
    wide.bands = 3;
    CHECK_THROWS_AS(fit(scene.cube, scene.labels, scene.split, wide, tc, topo), ValidationError);
    CHECK_THROWS_AS(fit(scene.cube, scene.labels, scene.split, c, tc, make_patch_topology(5, c.connectivity)), ValidationError);
}

TEST_CASE("loss log csv") {
    testing::TempDir dir("train");
    write_loss_log({{1, 1.25, 0.5}, {2, 0.75, 0.25}}, dir / "log.csv");
    CHECK(testing::slurp(dir / "log.csv") == "epoch,mean_loss,wall_seconds\n1,1.25,0.5\n2,0.75,0.25\n");
}

TEST_CASE("predict_pixels matches per-pixel forward") {
    const auto scene = small_scene();
    const auto c = tiny(2);
    const auto topo = make_patch_topology(c.patch_side(), c.connectivity);
    const auto params = random_params(c, 3);
    const auto norm = fit_normalizer(scene.cube, scene.split.train);
    const auto preds = predict_pixels(params, c, topo, scene.cube, norm, scene.split.test, 3);
    REQUIRE(preds.size() == scene.split.test.size());
    for (std::size_t i = 0; i < preds.size(); i += 7) {
        const Coord p = scene.split.test[i];
        const auto t = forward(params, c, extract_patch(scene.cube, norm, p.row, p.col, 3), topo, Mode::eval);
        CHECK(preds[i] == predict(t));
    }
}
