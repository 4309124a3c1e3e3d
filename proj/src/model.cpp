#include "pdagrnn/model.hpp"

#include "pdagrnn/errors.hpp"

#include <cmath>

namespace pdagrnn {

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "?";
}

Activation parse_activation(std::string_view text) {
    if (text == "tanh") return Activation::tanh;
    if (text == "relu") return Activation::relu;
    if (text == "sigmoid") return Activation::sigmoid;
    if (text == "identity") return Activation::identity;
    throw ValidationError("unknown activation '" + std::string(text) + "'");
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::identity: return x;
    }
    return x;
}

double activation_grad_from_output(Activation a, double y) {
    switch (a) {
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

namespace {

template <class Derived>
void apply_inplace(Activation a, Eigen::MatrixBase<Derived>& x) {
    if (a == Activation::identity) return;
    x = x.unaryExpr([a](double v) { return activate(a, v); });
}

}  // namespace

void ModelConfig::validate() const {
    if (m == 0) throw ValidationError("model: memory length m must be >= 1");
    if (bands == 0) throw ValidationError("model: bands must be >= 1");
    if (hidden == 0) throw ValidationError("model: hidden must be >= 1");
    if (fc1 == 0) throw ValidationError("model: fc1 must be >= 1");
    if (classes == 0) throw ValidationError("model: classes must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("model: dropout must be in [0, 1)");
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
    const auto H = static_cast<Eigen::Index>(c.hidden);
    const auto B = static_cast<Eigen::Index>(c.bands);
    const auto F = static_cast<Eigen::Index>(c.fc1);
    const auto C = static_cast<Eigen::Index>(c.classes);
    ModelParams p;
    for (auto& d : p.directions) {
        d.S = Matrix::Zero(H, H);
        d.U = Matrix::Zero(H, B);
        d.V = Matrix::Zero(H, H);
        d.a = Vector::Zero(H);
        d.b = Vector::Zero(H);
    }
    p.head.W1 = Matrix::Zero(F, 4 * H);
    p.head.c1 = Vector::Zero(F);
    p.head.W2 = Matrix::Zero(C, F);
    p.head.c2 = Vector::Zero(C);
    return p;
}

std::size_t ModelParams::scalar_count() const {
    std::size_t total = 0;
    for (const auto& t : tensors(*this)) total += static_cast<std::size_t>(t.size());
    return total;
}

void ModelParams::check_shapes(const ModelConfig& config) const {
    const auto want = ModelParams::zeros(config);
    const auto have_t = tensors(*this);
    const auto want_t = tensors(want);
    for (std::size_t i = 0; i < want_t.size(); ++i) {
        if (have_t[i].rows != want_t[i].rows || have_t[i].cols != want_t[i].cols)
            throw ValidationError("parameter " + want_t[i].name + " is " + std::to_string(have_t[i].rows) + "x" + std::to_string(have_t[i].cols) +
                                  ", expected " + std::to_string(want_t[i].rows) + "x" + std::to_string(want_t[i].cols));
    }
}

bool ModelParams::all_finite() const {
    for (const auto& t : tensors(*this))
        for (Eigen::Index i = 0; i < t.size(); ++i)
            if (!std::isfinite(t.data[i])) return false;
    return true;
}

std::size_t expected_param_count(const ModelConfig& c) {
    const std::size_t H = c.hidden, B = c.bands, F = c.fc1, C = c.classes;
    return 4 * (H * H + H * B + H * H + 2 * H) + F * 4 * H + F + C * F + C;
}

namespace {

constexpr std::array<std::string_view, 4> kShortNames = {"se", "sw", "ne", "nw"};

template <class View, class Params>
std::vector<View> collect(Params& p) {
    std::vector<View> out;
    out.reserve(4 * 5 + 4);
    auto add = [&](std::string name, auto& t) { out.push_back(View{std::move(name), t.data(), t.rows(), t.cols()}); };
    for (std::size_t k = 0; k < 4; ++k) {
        const std::string prefix = std::string(kShortNames[k]) + ".";
        auto& d = p.directions[k];
        add(prefix + "S", d.S);
        add(prefix + "U", d.U);
        add(prefix + "V", d.V);
        add(prefix + "a", d.a);
        add(prefix + "b", d.b);
    }
    add("head.W1", p.head.W1);
    add("head.c1", p.head.c1);
    add("head.W2", p.head.W2);
    add("head.c2", p.head.c2);
    return out;
}

}  // namespace

std::vector<TensorView> tensors(ModelParams& params) { return collect<TensorView>(params); }
std::vector<ConstTensorView> tensors(const ModelParams& params) { return collect<ConstTensorView>(params); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p = ModelParams::zeros(config);
    Rng rng(seed);
    for (auto& t : tensors(p)) {
        if (t.cols == 1) continue;  // biases stay zero
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = dist(rng);
    }
    return p;
}

Matrix window_inputs(const Patch& patch, const PatchDecomposition& decomposition, Direction d) {
    if (patch.n != decomposition.n)
        throw ValidationError("patch side " + std::to_string(patch.n) + " does not match decomposition side " + std::to_string(decomposition.n));
    const std::size_t m = decomposition.m;
    const Coord off = decomposition.offset(d);
    Matrix x(static_cast<Eigen::Index>(patch.bands), static_cast<Eigen::Index>(m * m));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t b = 0; b < patch.bands; ++b)
                x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(r * m + c)) = patch.at(off.row + r, off.col + c, b);
    return x;
}

DirectionTrace forward_direction(const DirectionParams& p, const DagTopology& dag, const Matrix& window, Activation recurrent) {
    const Eigen::Index H = p.S.rows();
    const auto count = static_cast<Eigen::Index>(dag.vertex_count());
    if (p.S.cols() != H || p.V.rows() != H || p.V.cols() != H || p.U.rows() != H || p.a.size() != H || p.b.size() != H)
        throw ValidationError("forward_direction: inconsistent direction parameter shapes");
    if (window.cols() != count || window.rows() != p.U.cols())
        throw ValidationError("forward_direction: window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) +
                              ", expected " + std::to_string(p.U.cols()) + "x" + std::to_string(count));
    if (dag.preds.size() != dag.vertex_count() || dag.order.size() != dag.vertex_count())
        throw ValidationError("forward_direction: malformed topology");

    DirectionTrace t;
    t.inputs = window;
    t.g = Matrix::Zero(H, count);
    t.h_hat = Matrix::Zero(H, count);
    t.h.resize(H, count);

    // Input projections for every vertex at once, bias folded in.
    Matrix pre = p.U * window;
    pre.colwise() += p.b;

    for (const Coord v : dag.order) {
        const auto vi = static_cast<Eigen::Index>(dag.index(v));
        for (const Coord q : dag.preds[vi]) t.h_hat.col(vi) += t.g.col(static_cast<Eigen::Index>(dag.index(q)));
        auto hv = t.h.col(vi);
        hv = pre.col(vi) + p.V * t.h_hat.col(vi);
        apply_inplace(recurrent, hv);
        auto gv = t.g.col(vi);
        gv = p.S * hv + p.a;
        apply_inplace(recurrent, gv);
    }
    return t;
}

Vector softmax(const Vector& logits) {
    const double top = logits.maxCoeff();
    Vector e = (logits.array() - top).exp().matrix();
    return e / e.sum();
}

double log_sum_exp(const Vector& logits) {
    const double top = logits.maxCoeff();
    return top + std::log((logits.array() - top).exp().sum());
}

namespace {

Vector dropout_mask(Eigen::Index size, double rate, Rng& rng) {
    Vector mask(size);
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < size; ++i) mask[i] = keep(rng) ? scale : 0.0;
    return mask;
}

}  // namespace

ForwardTrace forward(const ModelParams& params, const ModelConfig& config, const Patch& patch, const PatchTopology& topology, Mode mode,
                     Rng* rng) {
    config.validate();
    params.check_shapes(config);
    if (topology.m() != config.m) throw ValidationError("forward: topology memory length does not match the model");
    if (patch.n != topology.n()) throw ValidationError("forward: patch side does not match the topology");
    if (patch.bands != config.bands)
        throw ValidationError("forward: patch has " + std::to_string(patch.bands) + " bands, model expects " + std::to_string(config.bands));
    const bool use_dropout = mode == Mode::train && config.dropout > 0.0;
    if (use_dropout && rng == nullptr) throw ValidationError("forward: train mode with dropout needs a random generator");

    const auto H = static_cast<Eigen::Index>(config.hidden);
    ForwardTrace trace;
    trace.mode = mode;
    trace.fused.resize(4 * H);
    for (Direction d : kDirections) {
        const std::size_t k = direction_index(d);
        const auto& dag = topology.dag(d);
        trace.directions[k] = forward_direction(params.directions[k], dag, window_inputs(patch, topology.decomposition, d), config.recurrent);
        trace.sinks[k] = dag.index(dag.sink);
        trace.fused.segment(static_cast<Eigen::Index>(k) * H, H) = trace.directions[k].h.col(static_cast<Eigen::Index>(trace.sinks[k]));
    }

    const auto& head = params.head;
    if (use_dropout) trace.fused_mask = dropout_mask(trace.fused.size(), config.dropout, *rng);
    trace.fc1_pre = head.W1 * trace.fused_dropped() + head.c1;
    trace.fc1_post = trace.fc1_pre;
    apply_inplace(config.fc, trace.fc1_post);
    if (use_dropout) trace.fc1_mask = dropout_mask(trace.fc1_post.size(), config.dropout, *rng);
    trace.logits = head.W2 * trace.fc1_dropped() + head.c2;
    trace.probabilities = softmax(trace.logits);
    return trace;
}

double loss(const ForwardTrace& trace, int target) {
    if (target < 1 || target > trace.logits.size())
        throw ValidationError("loss: target class " + std::to_string(target) + " outside [1, " + std::to_string(trace.logits.size()) + "]");
    const double value = log_sum_exp(trace.logits) - trace.logits[target - 1];
    return value > 0.0 ? value : 0.0;
}

int predict(const ForwardTrace& trace) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < trace.probabilities.size(); ++i)
        if (trace.probabilities[i] > trace.probabilities[best]) best = i;
    return static_cast<int>(best) + 1;
}

}  // namespace pdagrnn
