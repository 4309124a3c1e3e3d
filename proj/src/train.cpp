#include "pdagrnn/train.hpp"

#include "pdagrnn/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

namespace pdagrnn {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("train: learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train: momentum must be in [0, 1)");
    if (batch_size == 0) throw ValidationError("train: batch size must be >= 1");
    if (threads == 0) throw ValidationError("train: threads must be >= 1");
}

OptimState OptimState::zeros_like(const ModelParams& params) {
    OptimState s{params};
    for (auto& t : tensors(s.velocity)) std::fill(t.data, t.data + t.size(), 0.0);
    return s;
}

namespace {

GradBuffer zeros_like(const ModelParams& params) { return OptimState::zeros_like(params).velocity; }

void scale_by_activation_grad(Vector& grad, const Vector& output, Activation a) {
    if (a == Activation::identity) return;
    for (Eigen::Index i = 0; i < grad.size(); ++i) grad[i] *= activation_grad_from_output(a, output[i]);
}

}  // namespace

GradBuffer backward(const ModelParams& params, const ModelConfig& config, const ForwardTrace& trace, int target,
                    const PatchTopology& topology) {
    params.check_shapes(config);
    const auto H = static_cast<Eigen::Index>(config.hidden);
    const auto C = static_cast<Eigen::Index>(config.classes);
    if (trace.logits.size() != C || trace.fused.size() != 4 * H || trace.fc1_post.size() != static_cast<Eigen::Index>(config.fc1))
        throw ValidationError("backward: trace does not match the model configuration");
    if (target < 1 || target > C) throw ValidationError("backward: target class " + std::to_string(target) + " out of range");

    GradBuffer grads = zeros_like(params);
    const auto& head = params.head;

    // Softmax + cross-entropy.
    Vector d_logits = trace.probabilities;
    d_logits[target - 1] -= 1.0;

    const Vector fc1_in = trace.fc1_dropped();
    grads.head.W2.noalias() = d_logits * fc1_in.transpose();
    grads.head.c2 = d_logits;
    Vector d_fc1 = head.W2.transpose() * d_logits;
    if (trace.fc1_mask.size()) d_fc1 = d_fc1.cwiseProduct(trace.fc1_mask);
    scale_by_activation_grad(d_fc1, trace.fc1_post, config.fc);

    const Vector fused_in = trace.fused_dropped();
    grads.head.W1.noalias() = d_fc1 * fused_in.transpose();
    grads.head.c1 = d_fc1;
    Vector d_fused = head.W1.transpose() * d_fc1;
    if (trace.fused_mask.size()) d_fused = d_fused.cwiseProduct(trace.fused_mask);

    for (Direction d : kDirections) {
        const std::size_t k = direction_index(d);
        const auto& p = params.directions[k];
        const auto& t = trace.directions[k];
        const auto& dag = topology.dag(d);
        const auto count = static_cast<Eigen::Index>(dag.vertex_count());
        if (t.h.cols() != count || t.h.rows() != H) throw ValidationError("backward: trace does not match the topology");

        Matrix d_h = Matrix::Zero(H, count);
        Matrix d_g = Matrix::Zero(H, count);
        Matrix dz_h(H, count);  // gradient at the pre-activation of h
        Matrix dz_g(H, count);  // gradient at the pre-activation of g
        d_h.col(static_cast<Eigen::Index>(trace.sinks[k])) = d_fused.segment(static_cast<Eigen::Index>(k) * H, H);

        // Every successor of v is later in the order, so d_g(v) is complete when v is reached.
        for (auto it = dag.order.rbegin(); it != dag.order.rend(); ++it) {
            const auto v = static_cast<Eigen::Index>(dag.index(*it));

            Vector zg = d_g.col(v);
            scale_by_activation_grad(zg, t.g.col(v), config.recurrent);
            dz_g.col(v) = zg;
            d_h.col(v).noalias() += p.S.transpose() * zg;

            Vector zh = d_h.col(v);
            scale_by_activation_grad(zh, t.h.col(v), config.recurrent);
            dz_h.col(v) = zh;
            if (!dag.preds[v].empty()) {
                const Vector d_hat = p.V.transpose() * zh;
                for (const Coord q : dag.preds[v]) d_g.col(static_cast<Eigen::Index>(dag.index(q))) += d_hat;
            }
        }

        auto& g = grads.directions[k];
        g.U.noalias() = dz_h * t.inputs.transpose();
        g.V.noalias() = dz_h * t.h_hat.transpose();
        g.b = dz_h.rowwise().sum();
        g.S.noalias() = dz_g * t.h.transpose();
        g.a = dz_g.rowwise().sum();
    }
    return grads;
}

GradBuffer finite_diff_grad(const ModelParams& params, const ModelConfig& config, const Patch& patch, int target, const PatchTopology& topology,
                            double step) {
    if (!(step > 0.0)) throw ValidationError("finite_diff_grad: step must be > 0");
    if (config.dropout != 0.0) throw ValidationError("finite_diff_grad: dropout must be disabled (p = 0)");

    ModelParams probe = params;
    GradBuffer grads = zeros_like(params);
    auto probe_views = tensors(probe);
    auto grad_views = tensors(grads);
    auto eval_loss = [&] { return loss(forward(probe, config, patch, topology, Mode::eval), target); };

    for (std::size_t i = 0; i < probe_views.size(); ++i) {
        double* theta = probe_views[i].data;
        for (Eigen::Index j = 0; j < probe_views[i].size(); ++j) {
            const double saved = theta[j];
            theta[j] = saved + step;
            const double up = eval_loss();
            theta[j] = saved - step;
            const double down = eval_loss();
            theta[j] = saved;
            grad_views[i].data[j] = (up - down) / (2.0 * step);
        }
    }
    return grads;
}

void accumulate(GradBuffer& dst, const GradBuffer& src, double scale) {
    auto d = tensors(dst);
    const auto s = tensors(src);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i].size() != s[i].size()) throw ValidationError("accumulate: shape mismatch in " + d[i].name);
        for (Eigen::Index j = 0; j < d[i].size(); ++j) d[i].data[j] += scale * s[i].data[j];
    }
}

void sgd_step(ModelParams& params, const GradBuffer& grads, OptimState& state, const TrainConfig& config) {
    auto p = tensors(params);
    const auto g = tensors(grads);
    auto v = tensors(state.velocity);
    if (p.size() != g.size() || p.size() != v.size()) throw ValidationError("sgd_step: tensor lists differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].size() != g[i].size() || p[i].size() != v[i].size()) throw ValidationError("sgd_step: shape mismatch in " + p[i].name);
        for (Eigen::Index j = 0; j < p[i].size(); ++j) {
            v[i].data[j] = config.momentum * v[i].data[j] + g[i].data[j];
            p[i].data[j] -= config.learning_rate * v[i].data[j];
        }
    }
}

Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b) {
    auto lo = [](std::uint64_t x) { return static_cast<std::uint32_t>(x & 0xffffffffu); };
    auto hi = [](std::uint64_t x) { return static_cast<std::uint32_t>(x >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), static_cast<std::uint32_t>(stream), lo(a), hi(a), lo(b), hi(b)};
    return Rng(seq);
}

namespace {

// Runs body(i) for i in [0, count) on up to `threads` workers. Each worker
// gets a contiguous chunk, so results written by index are order-independent.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body body) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::jthread> workers;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        workers.emplace_back([begin, end, &body] {
            for (std::size_t i = begin; i < end; ++i) body(i);
        });
    }
}

int class_at(const LabelMap& labels, Coord p, std::size_t classes) {
    const int k = labels.at(p.row, p.col);
    if (k < 1 || static_cast<std::size_t>(k) > classes)
        throw ValidationError("pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) + ") has label " + std::to_string(k) +
                              " outside [1, " + std::to_string(classes) + "]");
    return k;
}

}  // namespace

FitResult fit(const HsiCube& cube, const LabelMap& labels, const Split& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const PatchTopology& topology) {
    return fit(cube, labels, split, model_config, train_config, topology, init_params(model_config, make_stream(train_config.seed, Stream::init)()));
}

FitResult fit(const HsiCube& cube, const LabelMap& labels, const Split& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const PatchTopology& topology, ModelParams initial) {
    model_config.validate();
    train_config.validate();
    check_compatible(cube, labels);
    if (cube.bands != model_config.bands) throw ValidationError("fit: cube has " + std::to_string(cube.bands) + " bands, model expects " + std::to_string(model_config.bands));
    if (topology.m() != model_config.m) throw ValidationError("fit: topology memory length does not match the model");
    if (split.train.empty()) throw ValidationError("fit: training set is empty");
    initial.check_shapes(model_config);

    FitResult result;
    result.params = std::move(initial);
    result.norm = fit_normalizer(cube, split.train);

    std::vector<Coord> order = split.train;
    for (const Coord p : order) class_at(labels, p, model_config.classes);

    OptimState state = OptimState::zeros_like(result.params);
    Rng shuffle_rng = make_stream(train_config.seed, Stream::shuffle);
    const std::size_t n = topology.n();
    const std::size_t slots = std::max<std::size_t>(1, std::min(train_config.threads, train_config.batch_size));
    std::vector<GradBuffer> slot_grads(slots, zeros_like(result.params));
    std::vector<double> slot_loss(slots, 0.0);

    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
            const std::size_t end = std::min(order.size(), start + train_config.batch_size);
            GradBuffer batch = zeros_like(result.params);
            for (std::size_t wave = start; wave < end; wave += slots) {
                const std::size_t width = std::min(slots, end - wave);
                parallel_for(width, width, [&](std::size_t s) {
                    const std::size_t index = wave + s;
                    const Coord pixel = order[index];
                    const int target = labels.at(pixel.row, pixel.col);
                    const Patch patch = extract_patch(cube, result.norm, pixel.row, pixel.col, n);
                    Rng dropout_rng = make_stream(train_config.seed, Stream::dropout, epoch, index);
                    const ForwardTrace trace = forward(result.params, model_config, patch, topology, Mode::train, &dropout_rng);
                    slot_loss[s] = loss(trace, target);
                    slot_grads[s] = backward(result.params, model_config, trace, target, topology);
                });
                for (std::size_t s = 0; s < width; ++s) {
                    loss_sum += slot_loss[s];
                    accumulate(batch, slot_grads[s]);
                }
            }
            for (auto& t : tensors(batch))
                for (Eigen::Index j = 0; j < t.size(); ++j) t.data[j] /= static_cast<double>(end - start);
            sgd_step(result.params, batch, state, train_config);
        }

        if (!result.params.all_finite()) throw NumericError("fit: parameters became non-finite in epoch " + std::to_string(epoch));
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.push_back({epoch, loss_sum / static_cast<double>(order.size()), seconds});
    }
    return result;
}

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,mean_loss,wall_seconds\n";
    out.precision(17);
    for (const auto& e : log) out << e.epoch << ',' << e.mean_loss << ',' << e.wall_seconds << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<int> predict_pixels(const ModelParams& params, const ModelConfig& config, const PatchTopology& topology, const HsiCube& cube,
                                const NormStats& norm, const std::vector<Coord>& pixels, std::size_t threads) {
    config.validate();
    params.check_shapes(config);
    if (cube.bands != config.bands)
        throw ValidationError("cube has " + std::to_string(cube.bands) + " bands, model expects " + std::to_string(config.bands));
    std::vector<int> out(pixels.size(), 0);
    parallel_for(pixels.size(), threads, [&](std::size_t i) {
        const Patch patch = extract_patch(cube, norm, pixels[i].row, pixels[i].col, topology.n());
        out[i] = predict(forward(params, config, patch, topology, Mode::eval));
    });
    return out;
}

double mixed_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const GradCheckConfig& config, const BackwardFn& backward_fn) {
    const ModelConfig& mc = config.model;
    mc.validate();
    if (mc.dropout != 0.0) throw ValidationError("grad_check: dropout must be 0");

    const PatchTopology topology = make_patch_topology(mc.patch_side(), mc.connectivity);
    ModelParams params = init_params(mc, make_stream(config.seed, Stream::init)());
    Rng rng = make_stream(config.seed, Stream::dropout);
    std::uniform_real_distribution<double> bias(-0.5, 0.5);
    for (auto& t : tensors(params))
        if (t.cols == 1)
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = bias(rng);

    Patch patch;
    patch.n = topology.n();
    patch.bands = mc.bands;
    patch.values.resize(patch.n * patch.n * patch.bands);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& v : patch.values) v = gauss(rng);
    std::uniform_int_distribution<int> pick(1, static_cast<int>(mc.classes));
    const int target = pick(rng);

    const ForwardTrace trace = forward(params, mc, patch, topology, Mode::eval);
    const GradBuffer analytic = backward_fn(params, mc, trace, target, topology);
    const GradBuffer numeric = finite_diff_grad(params, mc, patch, target, topology, config.step);

    GradCheckReport report;
    report.tolerance = config.tolerance;
    const auto a = tensors(analytic);
    const auto f = tensors(numeric);
    for (std::size_t i = 0; i < a.size(); ++i) {
        TensorCheck check{a[i].name, 0.0};
        for (Eigen::Index j = 0; j < a[i].size(); ++j) {
            const double err = mixed_relative_error(a[i].data[j], f[i].data[j]);
            check.max_rel_error = std::max(check.max_rel_error, std::isfinite(err) ? err : INFINITY);
        }
        report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
        report.tensors.push_back(std::move(check));
    }
    report.passed = report.max_rel_error <= config.tolerance;
    return report;
}

}  // namespace pdagrnn
