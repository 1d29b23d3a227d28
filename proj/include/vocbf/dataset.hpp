#pragma once

// Offline transition storage: CSV serialization, episode-level splitting
// and minibatch sampling.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vocbf/rng.hpp"

namespace vocbf::data {

struct Transition {
  std::vector<double> x;
  std::vector<double> u;
  std::vector<double> x_next;
  std::int64_t episode_id = 0;
  std::int64_t step_id = 0;
  double ell_x = 0.0;       // cached safety value of x
  double ell_x_next = 0.0;  // cached safety value of x_next

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Metadata {
  std::string env = "agv_dubins";
  double dt = 0.01;
  std::uint64_t seed = 0;

  friend bool operator==(const Metadata&, const Metadata&) = default;
};

using SafetyFn = std::function<double(const std::vector<double>& state)>;

struct TransitionSet {
  std::vector<Transition> transitions;
  int state_dim = 0;
  int control_dim = 0;
  Metadata metadata;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }

  /// Throws std::invalid_argument if empty or dimensionally inconsistent.
  void validate() const;

  /// Distinct episode ids in first-appearance order.
  std::vector<std::int64_t> episode_ids() const;

  friend bool operator==(const TransitionSet&, const TransitionSet&) = default;
};

/// Recomputes the cached safety values.
void annotate_safety(TransitionSet& set, const SafetyFn& ell);

// CSV format:
//   # VOCBF-DATASET v1 env=<name> dt=<dt> seed=<seed> state_dim=<n> control_dim=<m>
//   episode,step,x1..xn,u1..um,xp1..xpn
//   <one row per transition, shortest round-trip doubles>
// Safety caches are not stored; load() recomputes them with `ell`.

void write_csv(std::ostream& out, const TransitionSet& set);
TransitionSet read_csv(std::istream& in, const SafetyFn& ell);
void save(const TransitionSet& set, const std::string& path);
TransitionSet load(const std::string& path, const SafetyFn& ell);

/// Splits by episode (never by transition). Deterministic per seed.
/// Throws std::invalid_argument for fewer than 2 episodes or a fraction
/// outside (0, 1).
std::pair<TransitionSet, TransitionSet> split(const TransitionSet& set, double test_fraction, std::uint64_t seed);

/// Uniform indices with replacement.
std::vector<std::size_t> sample_minibatch_indices(const TransitionSet& set, std::size_t batch_size, Rng& rng);
std::vector<Transition> sample_minibatch(const TransitionSet& set, std::size_t batch_size, Rng& rng);

enum class Field { State, Control, NextState };

/// Gathers one field of the selected transitions into a (dim x batch) matrix.
Eigen::MatrixXd gather(const TransitionSet& set, const std::vector<std::size_t>& indices, Field field);
Eigen::MatrixXd gather_all(const TransitionSet& set, Field field);

/// Optional per-coordinate affine normalization (x - offset) / scale.
/// Identity by default; the AGV pipeline leaves it off.
struct Normalization {
  std::vector<double> offset;
  std::vector<double> scale;
  bool enabled = false;

  static Normalization fit(const TransitionSet& set);
  std::vector<double> apply(const std::vector<double>& x) const;
};

}  // namespace vocbf::data
