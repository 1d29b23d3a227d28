#pragma once

// Dense multilayer perceptron with reverse-mode gradients and Adam.
//
// Every network in the pipeline (TD barrier, V-OCBF barrier, dynamics
// surrogate, behaviour-cloned actor) is an MlpModel. Batches are stored
// column-wise: an input batch is an (input_dim x batch) matrix.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace vocbf::nn {

enum class Activation { ReLU };

struct MlpSpec {
  std::vector<int> layer_widths;  // input dim, hidden widths..., output dim
  Activation activation = Activation::ReLU;
  std::uint64_t seed = 0;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Throws std::invalid_argument unless widths has >= 2 entries, all >= 1.
void validate(const MlpSpec& spec);

/// Location of one scalar parameter.
struct ParamIndex {
  std::size_t layer = 0;
  bool is_bias = false;
  Eigen::Index row = 0;
  Eigen::Index col = 0;

  std::string to_string() const;
};

/// Per-layer weights (out x in) and biases. Also used for gradients and
/// Adam moments, which share the parameter layout.
struct Params {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Params zeros_like(const MlpSpec& spec);

  std::size_t size() const;
  bool all_finite() const;
  bool same_shape(const Params& other) const;

  /// Flat view in layer order: W0 row-major, b0, W1 row-major, b1, ...
  double& flat(std::size_t i);
  double flat(std::size_t i) const;
  ParamIndex index_of(std::size_t flat_index) const;
};

struct AdamState {
  Params first_moment;
  Params second_moment;
  std::int64_t step = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MlpModel {
  MlpSpec spec;
  Params params;
  AdamState adam;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)) drawn from
/// mt19937_64(spec.seed) layer by layer in row-major order; zero biases.
MlpModel mlp_init(const MlpSpec& spec);

Eigen::VectorXd forward(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Activations saved by a forward pass: activations[0] is the input batch,
/// activations.back() the network output.
struct Tape {
  std::vector<Eigen::MatrixXd> activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

Tape forward_tape(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Parameter gradients given dLoss/dOutput (output_dim x batch).
Params backward_params(const MlpModel& model, const Tape& tape, const Eigen::MatrixXd& output_grad);

/// Input gradients given dLoss/dOutput (output_dim x batch).
Eigen::MatrixXd backward_input(const MlpModel& model, const Tape& tape, const Eigen::MatrixXd& output_grad);

// Loss specifications. Targets are (output_dim x batch). The reported loss
// is the batch mean of the per-sample loss, summed over output components.

struct SquaredError {
  Eigen::MatrixXd targets;
};

/// Per-sample loss expectile_loss(target - prediction, tau).
struct ExpectileError {
  Eigen::MatrixXd targets;
  double tau = 0.5;
};

/// Caller-defined loss: given outputs, return the batch-mean loss and write
/// its gradient with respect to the outputs.
struct CustomLoss {
  std::function<double(const Eigen::MatrixXd& outputs, Eigen::MatrixXd& output_grad)> fn;
};

using LossSpec = std::variant<SquaredError, ExpectileError, CustomLoss>;

struct LossAndGrad {
  double loss = 0.0;
  Params grads;
};

LossAndGrad value_and_param_grad(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                 const LossSpec& loss);

/// Loss value only; used by the finite-difference checker.
double loss_value(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs, const LossSpec& loss);

/// |tau - 1(y < 0)| * y^2. Throws std::invalid_argument unless tau in (0, 1).
double expectile_loss(double y, double tau);

/// Applies one Adam update. Returns false and leaves the model untouched
/// (step counter included) when any gradient is non-finite.
[[nodiscard]] bool adam_step(MlpModel& model, const Params& grads, double learning_rate,
                             const AdamConfig& config = {});

/// Gradient of the scalar output with respect to the input.
Eigen::VectorXd input_grad(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);

struct ValuesAndInputGrads {
  Eigen::RowVectorXd values;  // 1 x batch
  Eigen::MatrixXd grads;      // input_dim x batch
};

ValuesAndInputGrads input_grad_batch(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// target <- (1 - rho) * target + rho * online, parameters only.
void polyak_update(MlpModel& target, const MlpModel& online, double rho);

// Checkpoints. Text format:
//   VOCBF-MLP v1
//   role <tag>
//   spec widths=<w0,w1,...> activation=relu seed=<n>
//   W<l> <rows> <cols> <row-major values>      (one line per tensor)
//   b<l> <rows> <values>
//   adam step=<n>
//   mW<l>/mb<l>/vW<l>/vb<l> lines in the same layout
// Doubles use the shortest round-trip decimal rendering.

struct Checkpoint {
  std::string role;
  MlpModel model;
};

void write_checkpoint(std::ostream& out, const MlpModel& model, const std::string& role);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const MlpModel& model, const std::string& role);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vocbf::nn
