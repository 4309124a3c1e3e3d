#pragma once

#include "pdagrnn/data.hpp"
#include "pdagrnn/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pdagrnn {

/// Partial derivatives of the loss, shape-congruent with ModelParams.
using GradBuffer = ModelParams;

struct TrainConfig {
    double learning_rate = 0.005;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
};

struct OptimState {
    ModelParams velocity;

    static OptimState zeros_like(const ModelParams& params);
};

/// Exact gradient of the cross-entropy loss for the network sampled in `trace`
/// (its dropout masks included). Recurrent gradients run over each DAG in
/// reverse topological order and accumulate into the shared S, U, V, a, b.
GradBuffer backward(const ModelParams& params, const ModelConfig& config, const ForwardTrace& trace, int target, const PatchTopology& topology);

/// Central differences in double precision. Requires config.dropout == 0.
GradBuffer finite_diff_grad(const ModelParams& params, const ModelConfig& config, const Patch& patch, int target, const PatchTopology& topology,
                            double step);

/// velocity = momentum * velocity + grads; params -= lr * velocity.
void sgd_step(ModelParams& params, const GradBuffer& grads, OptimState& state, const TrainConfig& config);

/// Adds `src` into `dst` tensor by tensor, scaled.
void accumulate(GradBuffer& dst, const GradBuffer& src, double scale = 1.0);

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
};

struct FitResult {
    ModelParams params;
    NormStats norm;
    std::vector<EpochLog> log;
};

/// Independent seeded streams derived from one training seed.
enum class Stream : std::uint64_t { init = 1, shuffle = 2, dropout = 3 };
Rng make_stream(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0);

/// Minibatch SGD over the split's training pixels. Normalization is fitted on
/// the training pixels. Results are reproducible for a given seed regardless
/// of `threads`: per-sample gradients are reduced in sample order.
FitResult fit(const HsiCube& cube, const LabelMap& labels, const Split& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const PatchTopology& topology);

/// Same as above, starting from explicit parameters instead of init_params.
FitResult fit(const HsiCube& cube, const LabelMap& labels, const Split& split, const ModelConfig& model_config, const TrainConfig& train_config,
              const PatchTopology& topology, ModelParams initial);

void write_loss_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

/// Eval-mode class predictions (1-based) for each pixel.
std::vector<int> predict_pixels(const ModelParams& params, const ModelConfig& config, const PatchTopology& topology, const HsiCube& cube,
                                const NormStats& norm, const std::vector<Coord>& pixels, std::size_t threads = 1);

/// |a - f| / max(1e-8, |a| + |f|)
double mixed_relative_error(double analytic, double numeric);

struct GradCheckConfig {
    ModelConfig model = [] {
        ModelConfig c;
        c.m = 3;
        c.hidden = 5;
        c.bands = 4;
        c.classes = 3;
        c.fc1 = 6;
        c.dropout = 0.0;
        return c;
    }();
    std::uint64_t seed = 3;
    double step = 1e-6;
    double tolerance = 1e-5;
};

struct TensorCheck {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

using BackwardFn = std::function<GradBuffer(const ModelParams&, const ModelConfig&, const ForwardTrace&, int, const PatchTopology&)>;

/// Random small model and input; compares `backward_fn` with finite_diff_grad.
GradCheckReport grad_check(const GradCheckConfig& config, const BackwardFn& backward_fn = backward);

}  // namespace pdagrnn
