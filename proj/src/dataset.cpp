#include "vocbf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "vocbf/io.hpp"

namespace vocbf::data {

void TransitionSet::validate() const {
  if (transitions.empty()) throw std::invalid_argument("transition set is empty");
  if (state_dim < 1 || control_dim < 1) throw std::invalid_argument("transition set has invalid dimensions");
  for (const auto& t : transitions) {
    if (t.x.size() != static_cast<std::size_t>(state_dim) || t.x_next.size() != static_cast<std::size_t>(state_dim) ||
        t.u.size() != static_cast<std::size_t>(control_dim)) {
      throw std::invalid_argument("transition dimensions inconsistent with the set");
    }
  }
}

std::vector<std::int64_t> TransitionSet::episode_ids() const {
  std::vector<std::int64_t> ids;
  std::unordered_set<std::int64_t> seen;
  for (const auto& t : transitions) {
    if (seen.insert(t.episode_id).second) ids.push_back(t.episode_id);
  }
  return ids;
}

void annotate_safety(TransitionSet& set, const SafetyFn& ell) {
  for (auto& t : set.transitions) {
    t.ell_x = ell(t.x);
    t.ell_x_next = ell(t.x_next);
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kMagic = "# VOCBF-DATASET v1";

std::string column_header(int n, int m) {
  std::string h = "episode,step";
  for (int i = 1; i <= n; ++i) h += ",x" + std::to_string(i);
  for (int i = 1; i <= m; ++i) h += ",u" + std::to_string(i);
  for (int i = 1; i <= n; ++i) h += ",xp" + std::to_string(i);
  return h;
}

}  // namespace

void write_csv(std::ostream& out, const TransitionSet& set) {
  set.validate();
  out << kMagic << " env=" << set.metadata.env << " dt=" << format_double(set.metadata.dt)
      << " seed=" << set.metadata.seed << " state_dim=" << set.state_dim << " control_dim=" << set.control_dim
      << '\n';
  out << column_header(set.state_dim, set.control_dim) << '\n';
  std::string row;
  for (const auto& t : set.transitions) {
    row.clear();
    row += std::to_string(t.episode_id);
    row += ',';
    row += std::to_string(t.step_id);
    for (double v : t.x) (row += ',') += format_double(v);
    for (double v : t.u) (row += ',') += format_double(v);
    for (double v : t.x_next) (row += ',') += format_double(v);
    row += '\n';
    out << row;
  }
}

TransitionSet read_csv(std::istream& in, const SafetyFn& ell) {
  TransitionSet set;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  ++line_no;
  {
    std::string_view header = trim(line);
    std::string_view magic = kMagic;
    if (header.substr(0, magic.size()) != magic) {
      if (header.substr(0, 16) == "# VOCBF-DATASET ") throw ParseError("unsupported dataset version", line_no);
      throw ParseError("missing '# VOCBF-DATASET v1' header", line_no);
    }
    bool have_dt = false, have_seed = false, have_n = false, have_m = false;
    for (auto tok : vocbf::split(trim(header.substr(magic.size())), ' ')) {
      if (tok.empty()) continue;
      auto eq = tok.find('=');
      if (eq == std::string_view::npos) throw ParseError("malformed header field '" + std::string(tok) + "'", line_no);
      auto key = tok.substr(0, eq);
      auto val = tok.substr(eq + 1);
      if (key == "env") {
        set.metadata.env = std::string(val);
      } else if (key == "dt") {
        set.metadata.dt = parse_double(val, line_no);
        have_dt = true;
      } else if (key == "seed") {
        std::uint64_t seed = 0;
        auto res = std::from_chars(val.data(), val.data() + val.size(), seed);
        if (res.ec != std::errc() || res.ptr != val.data() + val.size()) throw ParseError("bad seed", line_no);
        set.metadata.seed = seed;
        have_seed = true;
      } else if (key == "state_dim") {
        set.state_dim = static_cast<int>(parse_int(val, line_no));
        have_n = true;
      } else if (key == "control_dim") {
        set.control_dim = static_cast<int>(parse_int(val, line_no));
        have_m = true;
      } else {
        throw ParseError("unknown header field '" + std::string(key) + "'", line_no);
      }
    }
    if (!(have_dt && have_seed && have_n && have_m)) {
      throw ParseError("header must declare dt, seed, state_dim and control_dim", line_no);
    }
    if (set.state_dim < 1 || set.control_dim < 1) throw ParseError("invalid dimensions in header", line_no);
  }

  if (!std::getline(in, line)) throw ParseError("missing column header", line_no + 1);
  ++line_no;
  if (trim(line) != column_header(set.state_dim, set.control_dim)) {
    throw ParseError("column header does not match declared dimensions", line_no);
  }

  const std::size_t n = static_cast<std::size_t>(set.state_dim);
  const std::size_t m = static_cast<std::size_t>(set.control_dim);
  const std::size_t width = 2 + 2 * n + m;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = vocbf::split(trim(line), ',');
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    Transition t;
    t.episode_id = parse_int(fields[0], line_no);
    t.step_id = parse_int(fields[1], line_no);
    std::size_t k = 2;
    t.x.resize(n);
    t.u.resize(m);
    t.x_next.resize(n);
    for (auto& v : t.x) v = parse_double(fields[k++], line_no);
    for (auto& v : t.u) v = parse_double(fields[k++], line_no);
    for (auto& v : t.x_next) v = parse_double(fields[k++], line_no);
    set.transitions.push_back(std::move(t));
  }
  if (set.transitions.empty()) throw ParseError("dataset has no transitions", line_no);
  if (ell) annotate_safety(set, ell);
  return set;
}

void save(const TransitionSet& set, const std::string& path) {
  std::ostringstream ss;
  write_csv(ss, set);
  write_file(path, ss.str());
}

TransitionSet load(const std::string& path, const SafetyFn& ell) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path);
  return read_csv(in, ell);
}

// ---------------------------------------------------------------------------
// Splitting and sampling

std::pair<TransitionSet, TransitionSet> split(const TransitionSet& set, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0, 1)");
  std::vector<std::int64_t> ids = set.episode_ids();
  if (ids.size() < 2) throw std::invalid_argument("split needs at least 2 episodes");

  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);

  Rng rng(seed);
  std::vector<std::int64_t> order = ids;
  // Fisher-Yates with an explicit draw so the result does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::unordered_set<std::int64_t> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));

  TransitionSet train, test;
  for (TransitionSet* s : {&train, &test}) {
    s->state_dim = set.state_dim;
    s->control_dim = set.control_dim;
    s->metadata = set.metadata;
  }
  for (const auto& t : set.transitions) {
    (test_ids.count(t.episode_id) ? test : train).transitions.push_back(t);
  }
  return {std::move(train), std::move(test)};
}

std::vector<std::size_t> sample_minibatch_indices(const TransitionSet& set, std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (set.empty()) throw std::invalid_argument("cannot sample from an empty set");
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<Transition> sample_minibatch(const TransitionSet& set, std::size_t batch_size, Rng& rng) {
  std::vector<Transition> out;
  for (std::size_t i : sample_minibatch_indices(set, batch_size, rng)) out.push_back(set.transitions[i]);
  return out;
}

Eigen::MatrixXd gather(const TransitionSet& set, const std::vector<std::size_t>& indices, Field field) {
  const int dim = field == Field::Control ? set.control_dim : set.state_dim;
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t c = 0; c < indices.size(); ++c) {
    const Transition& t = set.transitions[indices[c]];
    const std::vector<double>& v = field == Field::State ? t.x : field == Field::Control ? t.u : t.x_next;
    for (int r = 0; r < dim; ++r) out(r, static_cast<Eigen::Index>(c)) = v[static_cast<std::size_t>(r)];
  }
  return out;
}

Eigen::MatrixXd gather_all(const TransitionSet& set, Field field) {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return gather(set, idx, field);
}

Normalization Normalization::fit(const TransitionSet& set) {
  set.validate();
  const auto n = static_cast<std::size_t>(set.state_dim);
  Normalization norm;
  norm.enabled = true;
  norm.offset.assign(n, 0.0);
  norm.scale.assign(n, 0.0);
  for (const auto& t : set.transitions) {
    for (std::size_t i = 0; i < n; ++i) norm.offset[i] += t.x[i];
  }
  for (auto& o : norm.offset) o /= static_cast<double>(set.size());
  for (const auto& t : set.transitions) {
    for (std::size_t i = 0; i < n; ++i) norm.scale[i] += (t.x[i] - norm.offset[i]) * (t.x[i] - norm.offset[i]);
  }
  for (auto& s : norm.scale) s = std::max(std::sqrt(s / static_cast<double>(set.size())), 1e-12);
  return norm;
}

std::vector<double> Normalization::apply(const std::vector<double>& x) const {
  if (!enabled) return x;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - offset[i]) / scale[i];
  return out;
}

}  // namespace vocbf::data
