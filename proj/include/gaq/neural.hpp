#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gaq/matrix.hpp"
#include "gaq/rng.hpp"

namespace gaq {

enum class Activation { None, Relu };

/// Fully connected layer. w is in x out, b is 1 x out.
struct DenseParams {
    Matrix w;
    Matrix b;
};

/// Single-head graph attention layer. w is d x d', attn the 1 x 2d' scoring
/// vector, b a 1 x d' bias added after aggregation.
struct GatParams {
    Matrix w;
    Matrix attn;
    Matrix b;
    double leaky_slope = 0.2;
};

Matrix dense_forward(const DenseParams& p, const Matrix& x, Activation act);

struct GatTrace {
    Matrix z;       // h * w
    Matrix scores;  // raw attention logits, defined only where adjacency != 0
    Matrix alpha;   // attention weights; exactly 0 where adjacency == 0
    Matrix out;     // alpha * z + b
};

/// adjacency(i,j) != 0 marks j as a neighbour of i. Every row must have at
/// least one neighbour (in practice the diagonal is always set). The softmax
/// subtracts each row's maximum before exponentiating.
GatTrace gat_forward(const GatParams& p, const Matrix& h, const Matrix& adjacency);

/// The full per-region value network: a two-layer encoder, one attention
/// layer over the region graph, and a four-layer trunk with a linear head
/// that scores each action.
struct QModel {
    static constexpr int kFeatureDim = 2;
    static constexpr int kEmbedDim = 32;
    static constexpr int kActionCount = 5;

    DenseParams enc1, enc2;
    GatParams gat;
    DenseParams q1, q2, q3, q4, head;

    /// All tensors zero, correct shapes.
    static QModel zeros();
    /// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
    static QModel glorot_init(Rng& rng);

    /// Stable enumeration of the parameter tensors; gradients, optimiser
    /// state and checkpoints all follow this order.
    std::vector<Matrix*> param_tensors();
    std::vector<const Matrix*> param_tensors() const;
    static const std::vector<std::string>& param_names();
};

struct ModelTrace {
    Matrix x;
    Matrix pre1, h1;  // encoder layer 1
    Matrix pre2, h2;  // encoder layer 2
    GatTrace gat;
    Matrix pre_q[4], h_q[4];
    Matrix q;  // regions x actions
};

ModelTrace model_forward_trace(const QModel& m, const Matrix& x, const Matrix& adjacency);
Matrix model_forward(const QModel& m, const Matrix& x, const Matrix& adjacency);

/// Reverse-mode gradients for every parameter tensor, in param_tensors()
/// order, given dLoss/dQ. The trace must come from model_forward_trace on
/// the same model and inputs.
std::vector<Matrix> model_backward(const QModel& m, const Matrix& adjacency,
                                   const ModelTrace& trace, const Matrix& upstream);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    long step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    static AdamState zeros_like(const QModel& model);
};

/// One update over all model tensors; increments state.step once.
void adam_step(QModel& model, const std::vector<Matrix>& grads, AdamState& state,
               const AdamConfig& cfg);

/// Single-tensor update with bias correction; step is the 1-based count of
/// updates applied so far including this one.
void adam_update(Matrix& theta, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 const AdamConfig& cfg);

/// Checkpoints are JSON: every named tensor plus the optimiser state. Values
/// round-trip exactly (shortest-representation doubles), so save followed by
/// load reproduces the model bit for bit. Loading verifies the tensor names
/// and shapes against the fixed architecture and fails on any mismatch.
void save_checkpoint(const std::filesystem::path& path, const QModel& model,
                     const AdamState& adam);

struct Checkpoint {
    QModel model;
    AdamState adam;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gaq
