#pragma once

// Pixel DAG-RNN forward pass.
//
// Per direction d, over the DAG in topological order:
//   g(v)     = G(S h(v) + a)
//   h_hat(v) = sum of g(p) over predecessors p of v   (zero for sources)
//   h(v)     = H(U x(v) + V h_hat(v) + b)
// The four sink states are concatenated (SE, SW, NE, NW), then
//   fc1 = act(W1 fused + c1),  logits = W2 fc1 + c2,  p = softmax(logits).
// G is applied per predecessor before summing; since G(S h(p) + a) depends
// only on p it is evaluated once per vertex and reused by every successor.

#include "pdagrnn/data.hpp"
#include "pdagrnn/graph.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace pdagrnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { tanh, relu, sigmoid, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view text);

double activate(Activation a, double x);
/// Derivative expressed through the activation's output y = f(x).
double activation_grad_from_output(Activation a, double y);

struct ModelConfig {
    std::size_t m = 7;  // memory length; patch side is 2m - 1
    Connectivity connectivity = Connectivity::eight;
    std::size_t bands = 0;
    std::size_t hidden = 128;
    std::size_t fc1 = 128;
    std::size_t classes = 0;
    double dropout = 0.4;
    Activation recurrent = Activation::tanh;
    Activation fc = Activation::relu;

    std::size_t patch_side() const { return 2 * m - 1; }
    void validate() const;
};

struct DirectionParams {
    Matrix S;  // H x H
    Matrix U;  // H x B
    Matrix V;  // H x H
    Vector a;  // H
    Vector b;  // H
};

struct ClassifierParams {
    Matrix W1;  // F1 x 4H
    Vector c1;  // F1
    Matrix W2;  // C x F1
    Vector c2;  // C
};

struct ModelParams {
    std::array<DirectionParams, 4> directions;
    ClassifierParams head;

    static ModelParams zeros(const ModelConfig& config);

    DirectionParams& direction(Direction d) { return directions[direction_index(d)]; }
    const DirectionParams& direction(Direction d) const { return directions[direction_index(d)]; }

    std::size_t scalar_count() const;
    /// Throws ValidationError when any tensor has the wrong shape for `config`.
    void check_shapes(const ModelConfig& config) const;
    bool all_finite() const;
};

/// 4(H^2 + HB + H^2 + 2H) + 4H F1 + F1 + C F1 + C.
std::size_t expected_param_count(const ModelConfig& config);

/// Named view of one parameter tensor; `data` is column-major rows x cols.
template <class T>
struct BasicTensorView {
    std::string name;
    T* data = nullptr;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;

    Eigen::Index size() const { return rows * cols; }
};
using TensorView = BasicTensorView<double>;
using ConstTensorView = BasicTensorView<const double>;

/// Every tensor in a fixed order: per direction (SE, SW, NE, NW) S, U, V, a, b; then W1, c1, W2, c2.
std::vector<TensorView> tensors(ModelParams& params);
std::vector<ConstTensorView> tensors(const ModelParams& params);

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

enum class Mode { train, eval };

struct DirectionTrace {
    Matrix inputs;  // B x m^2, column = vertex index row * m + col
    Matrix g;       // H x m^2, G(S h + a) per vertex
    Matrix h_hat;   // H x m^2
    Matrix h;       // H x m^2
};

struct ForwardTrace {
    Mode mode = Mode::eval;
    std::array<DirectionTrace, 4> directions;
    std::array<std::size_t, 4> sinks{};  // vertex index of each direction's sink
    Vector fused;        // 4H, before dropout
    Vector fused_mask;   // 4H, inverted-dropout scale per unit; empty in eval mode
    Vector fc1_pre;
    Vector fc1_post;
    Vector fc1_mask;     // empty in eval mode
    Vector logits;
    Vector probabilities;

    const DirectionTrace& direction(Direction d) const { return directions[direction_index(d)]; }
    Vector fused_dropped() const { return fused_mask.size() ? Vector(fused.cwiseProduct(fused_mask)) : fused; }
    Vector fc1_dropped() const { return fc1_mask.size() ? Vector(fc1_post.cwiseProduct(fc1_mask)) : fc1_post; }
};

/// Inputs of one direction's window as a B x m^2 matrix.
Matrix window_inputs(const Patch& patch, const PatchDecomposition& decomposition, Direction d);

DirectionTrace forward_direction(const DirectionParams& params, const DagTopology& dag, const Matrix& window, Activation recurrent);

using Rng = std::mt19937_64;

/// `rng` drives dropout and is required in train mode when dropout > 0.
ForwardTrace forward(const ModelParams& params, const ModelConfig& config, const Patch& patch, const PatchTopology& topology,
                     Mode mode, Rng* rng = nullptr);

Vector softmax(const Vector& logits);
double log_sum_exp(const Vector& logits);

/// Cross-entropy of a 1-based class index.
double loss(const ForwardTrace& trace, int target);

/// 1-based argmax of the probabilities; ties go to the lowest index.
int predict(const ForwardTrace& trace);

}  // namespace pdagrnn
