#include "vocbf/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

#include "vocbf/io.hpp"

namespace vocbf {

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Order here is the order of the resolved config.
constexpr KeyDefault kDefaults[] = {
    {"run.seed", "0"},
    {"run.threads", "1"},
    {"run.dataset", ""},

    {"env.v", "0.6"},
    {"env.dt", "0.01"},
    {"env.u_bound", "1"},
    {"env.obstacle_x", "0"},
    {"env.obstacle_y", "0"},
    {"env.obstacle_radius", "0.2"},
    {"env.goal_x", "0.7"},
    {"env.goal_y", "0.7"},
    {"env.reward_scale", "0.1"},
    {"env.reward_eps", "0.1"},
    {"env.horizon", "500"},
    {"env.n_transitions", "75000"},

    {"barrier.gamma", "0.99"},
    {"barrier.tau", "0.99"},
    {"barrier.lr", "3e-05"},
    {"barrier.batch_size", "256"},
    {"barrier.epochs", "100"},
    {"barrier.polyak_rho", "0.005"},
    {"barrier.use_target_net", "true"},
    {"barrier.theta_on_psi", "false"},
    {"barrier.hidden", "256,256"},

    {"cbvf_mb.n_action_samples", "16"},
    {"cbvf_mb.action_source", "uniform"},

    {"dynamics.hidden", "64,64,64"},
    {"dynamics.lr", "3e-05"},
    {"dynamics.batch_size", "64"},
    {"dynamics.epochs", "1200"},
    {"dynamics.test_fraction", "0.1"},

    {"bc.hidden", "128,128"},
    {"bc.lr", "3e-05"},
    {"bc.batch_size", "256"},
    {"bc.epochs", "100"},

    {"policy.reference", "goto_goal"},
    {"policy.gain", "2"},
    {"policy.alpha", "1"},

    {"eval.seeds", "11,13,17,19,23"},
    {"eval.episodes", "500"},
    {"eval.dynamics", "learned"},
    {"eval.ssv_samples", "10000"},
    {"eval.ssv_seed", "7"},
    {"eval.taus", "0.5,0.7,0.8,0.9,0.99"},
    {"eval.sigmas", "0,0.05,0.1,0.2"},
    {"eval.chunk_size", "64"},
    {"eval.emit_plots_data", "false"},
};

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

std::vector<std::string_view> list_items(const std::string& text) {
  std::vector<std::string_view> out;
  for (auto item : split(text, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& kd : kDefaults) values_[kd.key] = kd.value;
}

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& kd : kDefaults) k.emplace_back(kd.key);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
  set(std::string(trim(std::string_view(assignment).substr(0, eq))),
      std::string(trim(std::string_view(assignment).substr(eq + 1))));
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(body.substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside any [section]");
    const std::string key = section + "." + std::string(trim(body.substr(0, eq)));
    if (!values_.count(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    values_[key] = std::string(trim(body.substr(eq + 1)));
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return parse_double(get(key));
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + get(key) + "'");
  }
}

long long RunConfig::get_int(const std::string& key) const {
  try {
    return parse_int(get(key));
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + get(key) + "'");
  }
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const std::string& text = get(key);
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + text + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  try {
    for (auto item : list_items(get(key))) out.push_back(parse_double(item));
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected a comma-separated list of numbers");
  }
  return out;
}

std::vector<int> RunConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  try {
    for (auto item : list_items(get(key))) out.push_back(static_cast<int>(parse_int(item)));
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected a comma-separated list of integers");
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_uints(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (auto item : list_items(get(key))) {
    std::uint64_t v = 0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
      throw ConfigError("config key '" + key + "': expected a comma-separated list of unsigned integers");
    }
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& key : known_keys()) {
    const std::string s = section_of(key);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(s.size() + 1) << " = " << values_.at(key) << '\n';
  }
  return out.str();
}

std::vector<std::string> RunConfig::resolved_lines() const {
  std::vector<std::string> out;
  for (const auto& key : known_keys()) out.push_back(key + "=" + values_.at(key));
  return out;
}

namespace {

template <class F>
auto validated(const char* what, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

agv::AgvConfig RunConfig::env() const {
  agv::AgvConfig c;
  c.v = get_double("env.v");
  c.dt = get_double("env.dt");
  c.u_bound = get_double("env.u_bound");
  c.obstacle_center = {get_double("env.obstacle_x"), get_double("env.obstacle_y")};
  c.obstacle_radius = get_double("env.obstacle_radius");
  c.goal = {get_double("env.goal_x"), get_double("env.goal_y")};
  c.reward_scale = get_double("env.reward_scale");
  c.reward_eps = get_double("env.reward_eps");
  c.horizon = static_cast<int>(get_int("env.horizon"));
  if (get_int("env.n_transitions") < 1) throw ConfigError("config key 'env.n_transitions' must be >= 1");
  return validated("[env]", [&] {
    agv::validate(c);
    return c;
  });
}

barrier::BarrierTrainConfig RunConfig::barrier() const {
  barrier::BarrierTrainConfig c;
  c.gamma = get_double("barrier.gamma");
  c.tau = get_double("barrier.tau");
  c.lr = get_double("barrier.lr");
  const long long bs = get_int("barrier.batch_size");
  if (bs < 1) throw ConfigError("config key 'barrier.batch_size' must be >= 1");
  c.batch_size = static_cast<std::size_t>(bs);
  c.epochs = static_cast<int>(get_int("barrier.epochs"));
  c.target_polyak_rho = get_double("barrier.polyak_rho");
  c.use_target_net = get_bool("barrier.use_target_net");
  c.theta_on_psi = get_bool("barrier.theta_on_psi");
  std::vector<int> widths{feature_dim(c.features, agv::kStateDim)};
  for (int h : get_ints("barrier.hidden")) widths.push_back(h);
  widths.push_back(1);
  c.seed = get_uint("run.seed");
  c.barrier_spec = {widths, nn::Activation::ReLU, derive_seed(c.seed, 100)};
  return validated("[barrier]", [&] {
    c.validate();
    return c;
  });
}

barrier::ModelBasedConfig RunConfig::model_based() const {
  barrier::ModelBasedConfig c;
  const long long k = get_int("cbvf_mb.n_action_samples");
  if (k < 1) throw ConfigError("config key 'cbvf_mb.n_action_samples' must be >= 1");
  c.n_action_samples = static_cast<int>(k);
  const std::string& src = get("cbvf_mb.action_source");
  if (src == "uniform") {
    c.source = barrier::ActionSource::UniformBox;
  } else if (src == "logged") {
    c.source = barrier::ActionSource::Logged;
    if (c.n_action_samples != 1) throw ConfigError("config key 'cbvf_mb.action_source': logged needs n_action_samples = 1");
  } else {
    throw ConfigError("config key 'cbvf_mb.action_source': expected uniform or logged");
  }
  const double u = get_double("env.u_bound");
  c.u_lo = -u;
  c.u_hi = u;
  return c;
}

dyn::DynamicsTrainConfig RunConfig::dynamics() const {
  dyn::DynamicsTrainConfig c;
  c.hidden = get_ints("dynamics.hidden");
  c.lr = get_double("dynamics.lr");
  const long long bs = get_int("dynamics.batch_size");
  if (bs < 1) throw ConfigError("config key 'dynamics.batch_size' must be >= 1");
  c.batch_size = static_cast<std::size_t>(bs);
  c.epochs = static_cast<int>(get_int("dynamics.epochs"));
  c.test_fraction = get_double("dynamics.test_fraction");
  c.seed = derive_seed(get_uint("run.seed"), 200);
  // The simulator clamps positions; heading is unbounded.
  const double bound = env().position_bound;
  const double inf = std::numeric_limits<double>::infinity();
  c.state_lo = {-bound, -bound, -inf};
  c.state_hi = {bound, bound, inf};
  return validated("[dynamics]", [&] {
    c.validate();
    return c;
  });
}

policy::BcTrainConfig RunConfig::bc() const {
  policy::BcTrainConfig c;
  c.hidden = get_ints("bc.hidden");
  c.lr = get_double("bc.lr");
  const long long bs = get_int("bc.batch_size");
  if (bs < 1) throw ConfigError("config key 'bc.batch_size' must be >= 1");
  c.batch_size = static_cast<std::size_t>(bs);
  c.epochs = static_cast<int>(get_int("bc.epochs"));
  c.u_lo = -get_double("env.u_bound");
  c.u_hi = get_double("env.u_bound");
  c.seed = derive_seed(get_uint("run.seed"), 300);
  return validated("[bc]", [&] {
    c.validate();
    return c;
  });
}

policy::GoToGoal RunConfig::goto_goal() const {
  policy::GoToGoal g;
  g.gain = get_double("policy.gain");
  if (!(g.gain > 0.0)) throw ConfigError("config key 'policy.gain' must be positive");
  g.goal = {get_double("env.goal_x"), get_double("env.goal_y")};
  return g;
}

eval::SuiteConfig RunConfig::suite() const {
  eval::SuiteConfig s;
  s.seeds = get_uints("eval.seeds");
  if (s.seeds.empty()) throw ConfigError("config key 'eval.seeds' must list at least one seed");
  const long long n = get_int("eval.episodes");
  if (n < 1) throw ConfigError("config key 'eval.episodes' must be >= 1");
  s.episodes = static_cast<std::size_t>(n);
  const long long threads = get_int("run.threads");
  if (threads < 1) throw ConfigError("config key 'run.threads' must be >= 1");
  s.threads = static_cast<int>(threads);
  const long long chunk = get_int("eval.chunk_size");
  if (chunk < 1) throw ConfigError("config key 'eval.chunk_size' must be >= 1");
  s.chunk_size = static_cast<int>(chunk);
  return s;
}

}  // namespace vocbf
