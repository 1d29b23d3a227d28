#include "vocbf/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "vocbf/agv.hpp"
#include "vocbf/io.hpp"
#include "vocbf/rng.hpp"

namespace vocbf::dyn {

namespace {

constexpr const char* kMagic = "VOCBF-DYN";
constexpr std::uint64_t kSamplingStream = 1;
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kFNetStream = 10;
constexpr std::uint64_t kGNetStream = 11;

void check_shapes(const DynamicsSurrogate& dyn, Eigen::Index state_rows, Eigen::Index control_rows, Eigen::Index cols_x,
                  Eigen::Index cols_u) {
  if (state_rows != dyn.state_dim || control_rows != dyn.control_dim || cols_x != cols_u) {
    throw std::invalid_argument("dynamics surrogate: dimension mismatch");
  }
}

// (f + G u) per column; g is stored column-major as n*m rows.
Eigen::MatrixXd drift_plus_input(const FgBatch& fg, const Eigen::Ref<const Eigen::MatrixXd>& controls, int n, int m) {
  Eigen::MatrixXd out = fg.f;
  for (int c = 0; c < m; ++c) {
    out.array() += fg.g.middleRows(static_cast<Eigen::Index>(c) * n, n).array().rowwise() * controls.row(c).array();
  }
  return out;
}

void wrap_rows(Eigen::MatrixXd& residual, const std::vector<int>& angle_dims) {
  for (int d : angle_dims) {
    for (Eigen::Index j = 0; j < residual.cols(); ++j) residual(d, j) = agv::wrap_angle(residual(d, j));
  }
}

void check_box(const std::vector<double>& lo, const std::vector<double>& hi, int n) {
  if (lo.empty() && hi.empty()) return;
  if (lo.size() != static_cast<std::size_t>(n) || hi.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("dynamics: state box must have one bound per state dimension");
  }
  for (int d = 0; d < n; ++d) {
    if (std::isnan(lo[d]) || std::isnan(hi[d]) || !(lo[d] < hi[d])) {
      throw std::invalid_argument("dynamics: state box needs lo < hi");
    }
  }
}

std::string format_bounds(const std::vector<double>& b) {
  if (b.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i) s += ',';
    s += format_double(b[i]);
  }
  return s;
}

std::vector<double> parse_bounds(const std::string& text) {
  std::vector<double> out;
  if (text == "none") return out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, 1));
  return out;
}

}  // namespace

DynamicsSurrogate make_surrogate(int state_dim, int control_dim, double dt, FeatureMap features,
                                 const std::vector<int>& hidden, std::uint64_t seed, bool zero_heads) {
  if (state_dim < 1 || control_dim < 1) throw std::invalid_argument("dynamics surrogate: dims must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("dynamics surrogate: dt must be positive");
  DynamicsSurrogate dyn;
  dyn.features = features;
  dyn.dt = dt;
  dyn.state_dim = state_dim;
  dyn.control_dim = control_dim;

  std::vector<int> widths{feature_dim(features, state_dim)};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  std::vector<int> f_widths = widths;
  f_widths.push_back(state_dim);
  std::vector<int> g_widths = widths;
  g_widths.push_back(state_dim * control_dim);
  dyn.f_net = nn::mlp_init({f_widths, nn::Activation::ReLU, derive_seed(seed, kFNetStream)});
  dyn.g_net = nn::mlp_init({g_widths, nn::Activation::ReLU, derive_seed(seed, kGNetStream)});
  if (zero_heads) {
    dyn.f_net.params.weights.back().setZero();
    dyn.g_net.params.weights.back().setZero();
  }
  return dyn;
}

FgBatch eval_fg_batch(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::MatrixXd>& states) {
  if (states.rows() != dyn.state_dim) throw std::invalid_argument("eval_fg: state dimension mismatch");
  const Eigen::MatrixXd feats = encode(dyn.features, states);
  return {nn::forward_batch(dyn.f_net, feats), nn::forward_batch(dyn.g_net, feats)};
}

void eval_fg(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::VectorXd& f,
             Eigen::MatrixXd& g) {
  FgBatch fg = eval_fg_batch(dyn, x);
  f = fg.f.col(0);
  g = Eigen::Map<const Eigen::MatrixXd>(fg.g.data(), dyn.state_dim, dyn.control_dim);
}

Eigen::MatrixXd predict_next_batch(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::MatrixXd>& states,
                                   const Eigen::Ref<const Eigen::MatrixXd>& controls) {
  check_shapes(dyn, states.rows(), controls.rows(), states.cols(), controls.cols());
  Eigen::MatrixXd next =
      states + dyn.dt * drift_plus_input(eval_fg_batch(dyn, states), controls, dyn.state_dim, dyn.control_dim);
  project_to_box(dyn, next);
  return next;
}

void project_to_box(const DynamicsSurrogate& dyn, Eigen::Ref<Eigen::MatrixXd> states) {
  if (dyn.state_lo.empty()) return;
  for (int d = 0; d < dyn.state_dim; ++d) {
    states.row(d) = states.row(d).cwiseMax(dyn.state_lo[d]).cwiseMin(dyn.state_hi[d]);
  }
}

Eigen::VectorXd predict_next(const DynamicsSurrogate& dyn, const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& u) {
  return predict_next_batch(dyn, x, u).col(0);
}

void DynamicsTrainConfig::validate() const {
  if (hidden.empty()) throw std::invalid_argument("dynamics: need at least one hidden layer");
  if (!(lr > 0.0)) throw std::invalid_argument("dynamics: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("dynamics: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("dynamics: epochs must be >= 0");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("dynamics: test_fraction in (0, 1)");
  if (!state_lo.empty() || !state_hi.empty()) check_box(state_lo, state_hi, static_cast<int>(state_lo.size()));
}

Eigen::VectorXd one_step_rmse(const DynamicsSurrogate& dyn, const data::TransitionSet& data,
                              const std::vector<int>& angle_dims) {
  data.validate();
  Eigen::MatrixXd residual =
      data::gather_all(data, data::Field::NextState) -
      predict_next_batch(dyn, data::gather_all(data, data::Field::State), data::gather_all(data, data::Field::Control));
  wrap_rows(residual, angle_dims);
  return (residual.array().square().rowwise().sum() / static_cast<double>(residual.cols())).sqrt();
}

DynamicsTrainResult train_dynamics(const data::TransitionSet& data, const DynamicsTrainConfig& cfg) {
  data.validate();
  cfg.validate();
  for (int d : cfg.angle_dims) {
    if (d < 0 || d >= data.state_dim) throw std::invalid_argument("dynamics: angle dimension out of range");
  }
  auto [train, test] = data::split(data, cfg.test_fraction, derive_seed(cfg.seed, kSplitStream));

  DynamicsTrainResult out;
  check_box(cfg.state_lo, cfg.state_hi, data.state_dim);
  // Zero heads: random output layers leave state-dependent error that sparse regions never unlearn.
  out.model = make_surrogate(data.state_dim, data.control_dim, data.metadata.dt, cfg.features, cfg.hidden, cfg.seed,
                             true);
  out.model.state_lo = cfg.state_lo;
  out.model.state_hi = cfg.state_hi;
  out.train_transitions = train.size();
  out.test_transitions = test.size();
  DynamicsSurrogate& dyn = out.model;
  const int n = dyn.state_dim;
  const int m = dyn.control_dim;

  const Eigen::MatrixXd x_all = data::gather_all(train, data::Field::State);
  const Eigen::MatrixXd u_all = data::gather_all(train, data::Field::Control);
  const Eigen::MatrixXd xn_all = data::gather_all(train, data::Field::NextState);
  const Eigen::MatrixXd feat_all = encode(cfg.features, x_all);

  Rng rng(derive_seed(cfg.seed, kSamplingStream));
  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const auto bs = static_cast<Eigen::Index>(cfg.batch_size);
  Eigen::MatrixXd feats(feat_all.rows(), bs), x(n, bs), u(m, bs), xn(n, bs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const auto idx = data::sample_minibatch_indices(train, cfg.batch_size, rng);
      for (Eigen::Index j = 0; j < bs; ++j) {
        const auto k = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]);
        feats.col(j) = feat_all.col(k);
        x.col(j) = x_all.col(k);
        u.col(j) = u_all.col(k);
        xn.col(j) = xn_all.col(k);
      }
      const nn::Tape f_tape = nn::forward_tape(dyn.f_net, feats);
      const nn::Tape g_tape = nn::forward_tape(dyn.g_net, feats);
      const FgBatch fg{f_tape.output(), g_tape.output()};
      const Eigen::MatrixXd raw = x + dyn.dt * drift_plus_input(fg, u, n, m);
      Eigen::MatrixXd pred = raw;
      project_to_box(dyn, pred);
      Eigen::MatrixXd residual = xn - pred;
      wrap_rows(residual, cfg.angle_dims);
      const double loss = residual.squaredNorm() / static_cast<double>(bs);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite dynamics loss at epoch " + std::to_string(epoch));
      }
      sum += loss;

      // d loss / d prediction = -2 r / B; the prediction is linear in f and g.
      // Where the box clamps, the prediction does not depend on f or g.
      const Eigen::MatrixXd d_pred =
          ((-2.0 / static_cast<double>(bs)) * residual).cwiseProduct((raw.array() == pred.array()).cast<double>().matrix());
      const Eigen::MatrixXd d_f = dyn.dt * d_pred;
      Eigen::MatrixXd d_g(static_cast<Eigen::Index>(n) * m, bs);
      for (int c = 0; c < m; ++c) {
        d_g.middleRows(static_cast<Eigen::Index>(c) * n, n) = d_f.array().rowwise() * u.row(c).array();
      }
      if (!nn::adam_step(dyn.f_net, nn::backward_params(dyn.f_net, f_tape, d_f), cfg.lr) ||
          !nn::adam_step(dyn.g_net, nn::backward_params(dyn.g_net, g_tape, d_g), cfg.lr)) {
        throw TrainingError("non-finite dynamics gradient at epoch " + std::to_string(epoch));
      }
    }
    out.epoch_loss.push_back(sum / static_cast<double>(per_epoch));
  }
  out.heldout_rmse = one_step_rmse(dyn, test, cfg.angle_dims);
  return out;
}

void write_surrogate(std::ostream& out, const DynamicsSurrogate& dyn) {
  out << kMagic << " v2 dt=" << format_double(dyn.dt) << " state_dim=" << dyn.state_dim
      << " control_dim=" << dyn.control_dim << " features=" << feature_map_name(dyn.features)
      << " lo=" << format_bounds(dyn.state_lo) << " hi=" << format_bounds(dyn.state_hi) << '\n';
  nn::write_checkpoint(out, dyn.f_net, "dynamics_f");
  nn::write_checkpoint(out, dyn.g_net, "dynamics_g");
}

DynamicsSurrogate read_surrogate(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("empty dynamics checkpoint", 1);
  std::istringstream hs(header);
  std::string magic, version, dt, n, m, features, lo, hi;
  hs >> magic >> version >> dt >> n >> m >> features >> lo >> hi;
  if (magic != kMagic) throw ParseError("not a VOCBF-DYN checkpoint", 1);
  if (version != "v2") throw ParseError("unsupported dynamics checkpoint version '" + version + "'", 1);
  auto value = [](const std::string& tok, const std::string& key) {
    if (tok.rfind(key + "=", 0) != 0) throw ParseError("expected " + key + "=<value>", 1);
    return tok.substr(key.size() + 1);
  };
  DynamicsSurrogate dyn;
  dyn.dt = parse_double(value(dt, "dt"), 1);
  dyn.state_dim = static_cast<int>(parse_int(value(n, "state_dim"), 1));
  dyn.control_dim = static_cast<int>(parse_int(value(m, "control_dim"), 1));
  try {
    dyn.features = parse_feature_map(value(features, "features"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }
  dyn.state_lo = parse_bounds(value(lo, "lo"));
  dyn.state_hi = parse_bounds(value(hi, "hi"));
  try {
    check_box(dyn.state_lo, dyn.state_hi, dyn.state_dim);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }
  nn::Checkpoint f = nn::read_checkpoint(in);
  nn::Checkpoint g = nn::read_checkpoint(in);
  if (f.role != "dynamics_f" || g.role != "dynamics_g") throw ParseError("unexpected dynamics network roles", 0);
  const int fd = feature_dim(dyn.features, dyn.state_dim);
  if (f.model.spec.input_dim() != fd || g.model.spec.input_dim() != fd || f.model.spec.output_dim() != dyn.state_dim ||
      g.model.spec.output_dim() != dyn.state_dim * dyn.control_dim) {
    throw ParseError("dynamics network shapes do not match the header", 0);
  }
  dyn.f_net = std::move(f.model);
  dyn.g_net = std::move(g.model);
  return dyn;
}

void save_surrogate(const std::string& path, const DynamicsSurrogate& dyn) {
  std::ostringstream ss;
  write_surrogate(ss, dyn);
  write_file(path, ss.str());
}

DynamicsSurrogate load_surrogate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dynamics checkpoint " + path);
  return read_surrogate(in);
}

}  // namespace vocbf::dyn
