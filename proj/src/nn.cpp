#include "vocbf/nn.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "vocbf/io.hpp"
#include "vocbf/rng.hpp"

namespace vocbf::nn {

void validate(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2) {
    throw std::invalid_argument("MlpSpec needs at least input and output widths");
  }
  for (int w : spec.layer_widths) {
    if (w < 1) throw std::invalid_argument("MlpSpec layer widths must be >= 1");
  }
}

std::string ParamIndex::to_string() const {
  std::ostringstream ss;
  if (is_bias) {
    ss << "b" << layer << "[" << row << "]";
  } else {
    ss << "W" << layer << "[" << row << "," << col << "]";
  }
  return ss.str();
}

Params Params::zeros_like(const MlpSpec& spec) {
  validate(spec);
  Params p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(spec.layer_widths[l + 1], spec.layer_widths[l]));
    p.biases.push_back(Eigen::VectorXd::Zero(spec.layer_widths[l + 1]));
  }
  return p;
}

std::size_t Params::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

bool Params::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool Params::same_shape(const Params& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols() ||
        biases[l].size() != other.biases[l].size()) {
      return false;
    }
  }
  return true;
}

ParamIndex Params::index_of(std::size_t i) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto nw = static_cast<std::size_t>(weights[l].size());
    if (i < nw) {
      auto cols = static_cast<std::size_t>(weights[l].cols());
      return {l, false, static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)};
    }
    i -= nw;
    auto nb = static_cast<std::size_t>(biases[l].size());
    if (i < nb) return {l, true, static_cast<Eigen::Index>(i), 0};
    i -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

double& Params::flat(std::size_t i) {
  ParamIndex idx = index_of(i);
  return idx.is_bias ? biases[idx.layer](idx.row) : weights[idx.layer](idx.row, idx.col);
}

double Params::flat(std::size_t i) const { return const_cast<Params*>(this)->flat(i); }

MlpModel mlp_init(const MlpSpec& spec) {
  validate(spec);
  MlpModel model;
  model.spec = spec;
  model.params = Params::zeros_like(spec);
  model.adam.first_moment = Params::zeros_like(spec);
  model.adam.second_moment = Params::zeros_like(spec);
  model.adam.step = 0;

  Rng rng(spec.seed);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double fan_in = spec.layer_widths[l];
    const double fan_out = spec.layer_widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd& w = model.params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
    }
  }
  return model;
}

namespace {

void check_input_rows(const MlpModel& model, Eigen::Index rows) {
  if (rows != model.spec.input_dim()) {
    throw std::invalid_argument("input dimension " + std::to_string(rows) + " does not match network input " +
                                std::to_string(model.spec.input_dim()));
  }
}

}  // namespace

Tape forward_tape(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_input_rows(model, inputs.rows());
  const std::size_t layers = model.spec.num_layers();
  Tape tape;
  tape.activations.reserve(layers + 1);
  tape.activations.emplace_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z(model.params.weights[l].rows(), inputs.cols());
    z.noalias() = model.params.weights[l] * tape.activations.back();
    z.colwise() += model.params.biases[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    tape.activations.push_back(std::move(z));
  }
  return tape;
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_input_rows(model, inputs.rows());
  const std::size_t layers = model.spec.num_layers();
  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z(model.params.weights[l].rows(), a.cols());
    z.noalias() = model.params.weights[l] * a;
    z.colwise() += model.params.biases[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& input) {
  return forward_batch(model, input);
}

namespace {

// Propagates output_grad back through the layers; calls on_layer(l, delta)
// with dLoss/dPreactivation of layer l. Returns dLoss/dInput.
template <typename OnLayer>
Eigen::MatrixXd backprop(const MlpModel& model, const Tape& tape, const Eigen::MatrixXd& output_grad,
                         bool need_input, OnLayer&& on_layer) {
  const std::size_t layers = model.spec.num_layers();
  if (output_grad.rows() != model.spec.output_dim() || output_grad.cols() != tape.output().cols()) {
    throw std::invalid_argument("output gradient shape mismatch");
  }
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = layers; l-- > 0;) {
    on_layer(l, delta);
    if (l == 0 && !need_input) break;
    Eigen::MatrixXd prev(model.params.weights[l].cols(), delta.cols());
    prev.noalias() = model.params.weights[l].transpose() * delta;
    if (l > 0) {
      // ReLU derivative, taken as 0 at 0.
      prev = (tape.activations[l].array() > 0.0).select(prev, 0.0);
    }
    delta = std::move(prev);
  }
  return need_input ? delta : Eigen::MatrixXd();
}

}  // namespace

Params backward_params(const MlpModel& model, const Tape& tape, const Eigen::MatrixXd& output_grad) {
  Params grads;
  grads.weights.resize(model.spec.num_layers());
  grads.biases.resize(model.spec.num_layers());
  backprop(model, tape, output_grad, false, [&](std::size_t l, const Eigen::MatrixXd& delta) {
    grads.weights[l].noalias() = delta * tape.activations[l].transpose();
    grads.biases[l] = delta.rowwise().sum();
  });
  return grads;
}

Eigen::MatrixXd backward_input(const MlpModel& model, const Tape& tape, const Eigen::MatrixXd& output_grad) {
  return backprop(model, tape, output_grad, true, [](std::size_t, const Eigen::MatrixXd&) {});
}

double expectile_loss(double y, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("expectile level must lie in (0, 1)");
  const double weight = y < 0.0 ? 1.0 - tau : tau;
  return weight * y * y;
}

namespace {

void check_targets(const Eigen::MatrixXd& targets, const MlpModel& model, Eigen::Index batch) {
  if (targets.rows() != model.spec.output_dim() || targets.cols() != batch) {
    throw std::invalid_argument("target shape does not match network output");
  }
  if (!targets.allFinite()) throw std::invalid_argument("non-finite target");
}

// Batch-mean loss and its gradient with respect to outputs.
double evaluate_loss(const MlpModel& model, const Eigen::MatrixXd& outputs, const LossSpec& loss,
                     Eigen::MatrixXd* output_grad) {
  const double inv_n = 1.0 / static_cast<double>(outputs.cols());
  return std::visit(
      [&](const auto& spec) -> double {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, SquaredError>) {
          check_targets(spec.targets, model, outputs.cols());
          Eigen::MatrixXd diff = outputs - spec.targets;
          if (output_grad) *output_grad = (2.0 * inv_n) * diff;
          return diff.squaredNorm() * inv_n;
        } else if constexpr (std::is_same_v<T, ExpectileError>) {
          check_targets(spec.targets, model, outputs.cols());
          if (!(spec.tau > 0.0 && spec.tau < 1.0)) {
            throw std::invalid_argument("expectile level must lie in (0, 1)");
          }
          // residual y = target - prediction; d/dprediction of w*y^2 is -2*w*y.
          Eigen::MatrixXd resid = spec.targets - outputs;
          Eigen::MatrixXd weight = (resid.array() < 0.0).select(1.0 - spec.tau, Eigen::MatrixXd::Constant(
                                                                                    resid.rows(), resid.cols(), spec.tau));
          if (output_grad) *output_grad = (-2.0 * inv_n) * weight.cwiseProduct(resid);
          return (weight.array() * resid.array().square()).sum() * inv_n;
        } else {
          Eigen::MatrixXd scratch;
          Eigen::MatrixXd& g = output_grad ? *output_grad : scratch;
          g.resize(outputs.rows(), outputs.cols());
          double value = spec.fn(outputs, g);
          if (g.rows() != outputs.rows() || g.cols() != outputs.cols()) {
            throw std::invalid_argument("custom loss returned a gradient of the wrong shape");
          }
          return value;
        }
      },
      loss);
}

}  // namespace

LossAndGrad value_and_param_grad(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                 const LossSpec& loss) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty batch");
  Tape tape = forward_tape(model, inputs);
  Eigen::MatrixXd output_grad;
  LossAndGrad out;
  out.loss = evaluate_loss(model, tape.output(), loss, &output_grad);
  out.grads = backward_params(model, tape, output_grad);
  return out;
}

double loss_value(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs, const LossSpec& loss) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty batch");
  return evaluate_loss(model, forward_batch(model, inputs), loss, nullptr);
}

bool adam_step(MlpModel& model, const Params& grads, double learning_rate, const AdamConfig& config) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!grads.same_shape(model.params)) throw std::invalid_argument("gradient shape mismatch");
  if (!grads.all_finite()) return false;

  AdamState& st = model.adam;
  st.step += 1;
  const double t = static_cast<double>(st.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    param.array() -= learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps);
  };
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    update(model.params.weights[l], st.first_moment.weights[l], st.second_moment.weights[l], grads.weights[l]);
    update(model.params.biases[l], st.first_moment.biases[l], st.second_moment.biases[l], grads.biases[l]);
  }
  if (!model.params.all_finite()) throw TrainingError("Adam update produced non-finite parameters");
  return true;
}

ValuesAndInputGrads input_grad_batch(const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (model.spec.output_dim() != 1) throw std::invalid_argument("input_grad requires a scalar-output network");
  Tape tape = forward_tape(model, inputs);
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, inputs.cols());
  ValuesAndInputGrads out;
  out.values = tape.output().row(0);
  out.grads = backward_input(model, tape, ones);
  return out;
}

Eigen::VectorXd input_grad(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& input) {
  return input_grad_batch(model, input).grads.col(0);
}

void polyak_update(MlpModel& target, const MlpModel& online, double rho) {
  if (!(target.spec == online.spec)) throw std::invalid_argument("polyak_update: spec mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("polyak_update: rho must lie in [0, 1]");
  for (std::size_t l = 0; l < target.params.weights.size(); ++l) {
    target.params.weights[l] = (1.0 - rho) * target.params.weights[l] + rho * online.params.weights[l];
    target.params.biases[l] = (1.0 - rho) * target.params.biases[l] + rho * online.params.biases[l];
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kMagic = "VOCBF-MLP v1";

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ' ' << format_double(m(r, c));
  }
  out << '\n';
}

void write_vector(std::ostream& out, const std::string& name, const Eigen::VectorXd& v) {
  out << name << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
  out << '\n';
}

void write_params(std::ostream& out, const std::string& prefix, const Params& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    write_tensor(out, prefix + "W" + std::to_string(l), p.weights[l]);
    write_vector(out, prefix + "b" + std::to_string(l), p.biases[l]);
  }
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!trim(line).empty()) return line;
    }
    throw ParseError(std::string("unexpected end of checkpoint, expected ") + what, line_no_ + 1);
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  for (auto tok : split(trim(line), ' ')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

void read_tensor(LineReader& reader, const std::string& name, Eigen::MatrixXd& m) {
  std::string line = reader.next(name.c_str());
  auto tok = tokens(line);
  const std::size_t ln = reader.line();
  if (tok.size() < 3 || tok[0] != name) throw ParseError("expected tensor " + name, ln);
  const auto rows = parse_int(tok[1], ln);
  const auto cols = parse_int(tok[2], ln);
  if (rows != m.rows() || cols != m.cols()) throw ParseError("tensor " + name + " has the wrong shape", ln);
  if (tok.size() != static_cast<std::size_t>(3 + rows * cols)) {
    throw ParseError("tensor " + name + " has the wrong number of values", ln);
  }
  std::size_t k = 3;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = parse_double(tok[k++], ln);
  }
}

void read_vector(LineReader& reader, const std::string& name, Eigen::VectorXd& v) {
  std::string line = reader.next(name.c_str());
  auto tok = tokens(line);
  const std::size_t ln = reader.line();
  if (tok.size() < 2 || tok[0] != name) throw ParseError("expected vector " + name, ln);
  const auto n = parse_int(tok[1], ln);
  if (n != v.size() || tok.size() != static_cast<std::size_t>(2 + n)) {
    throw ParseError("vector " + name + " has the wrong size", ln);
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = parse_double(tok[2 + i], ln);
}

void read_params(LineReader& reader, const std::string& prefix, Params& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    read_tensor(reader, prefix + "W" + std::to_string(l), p.weights[l]);
    read_vector(reader, prefix + "b" + std::to_string(l), p.biases[l]);
  }
}

std::string_view value_of(std::string_view token, std::string_view key, std::size_t line) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=') {
    throw ParseError("expected '" + std::string(key) + "=...'", line);
  }
  return token.substr(key.size() + 1);
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpModel& model, const std::string& role) {
  out << kMagic << '\n';
  out << "role " << role << '\n';
  out << "spec widths=";
  for (std::size_t i = 0; i < model.spec.layer_widths.size(); ++i) {
    if (i) out << ',';
    out << model.spec.layer_widths[i];
  }
  out << " activation=relu seed=" << model.spec.seed << '\n';
  write_params(out, "", model.params);
  out << "adam step=" << model.adam.step << '\n';
  write_params(out, "m", model.adam.first_moment);
  write_params(out, "v", model.adam.second_moment);
}

Checkpoint read_checkpoint(std::istream& in) {
  LineReader reader(in);
  if (trim(reader.next("header")) != kMagic) throw ParseError("not a VOCBF-MLP v1 checkpoint", reader.line());

  Checkpoint ck;
  {
    const std::string line = reader.next("role");
    auto tok = tokens(line);
    if (tok.size() != 2 || tok[0] != "role") throw ParseError("expected 'role <tag>'", reader.line());
    ck.role = std::string(tok[1]);
  }
  {
    const std::string line = reader.next("spec");
    auto tok = tokens(line);
    const std::size_t ln = reader.line();
    if (tok.size() != 4 || tok[0] != "spec") throw ParseError("malformed spec line", ln);
    MlpSpec spec;
    for (auto w : split(value_of(tok[1], "widths", ln), ',')) {
      spec.layer_widths.push_back(static_cast<int>(parse_int(w, ln)));
    }
    if (value_of(tok[2], "activation", ln) != "relu") throw ParseError("unknown activation", ln);
    auto seed_text = value_of(tok[3], "seed", ln);
    std::uint64_t seed = 0;
    auto res = std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), seed);
    if (res.ec != std::errc() || res.ptr != seed_text.data() + seed_text.size()) throw ParseError("bad seed", ln);
    spec.seed = seed;
    try {
      validate(spec);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), ln);
    }
    ck.model.spec = spec;
    ck.model.params = Params::zeros_like(spec);
    ck.model.adam.first_moment = Params::zeros_like(spec);
    ck.model.adam.second_moment = Params::zeros_like(spec);
  }
  read_params(reader, "", ck.model.params);
  {
    const std::string line = reader.next("adam");
    auto tok = tokens(line);
    if (tok.size() != 2 || tok[0] != "adam") throw ParseError("expected 'adam step=<n>'", reader.line());
    ck.model.adam.step = parse_int(value_of(tok[1], "step", reader.line()), reader.line());
  }
  read_params(reader, "m", ck.model.adam.first_moment);
  read_params(reader, "v", ck.model.adam.second_moment);
  return ck;
}

void save_checkpoint(const std::string& path, const MlpModel& model, const std::string& role) {
  std::ostringstream ss;
  write_checkpoint(ss, model, role);
  write_file(path, ss.str());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace vocbf::nn
