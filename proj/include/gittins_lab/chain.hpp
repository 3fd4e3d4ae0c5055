#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gittins_lab {

using StateId = std::size_t;
using Rng = std::mt19937_64;

/// Absolute tolerance on probability row sums.
inline constexpr double kProbabilityTolerance = 1e-12;

struct Transition {
  StateId next;
  double prob;

  friend bool operator==(const Transition&, const Transition&) = default;
};

using TransitionRow = std::vector<Transition>;

/// Finite-support distribution over reals. Duplicate values are merged and
/// zero-probability atoms dropped; otherwise the input order is kept.
class DiscreteDistribution {
 public:
  struct Atom {
    double value;
    double prob;

    friend bool operator==(const Atom&, const Atom&) = default;
  };

  explicit DiscreteDistribution(std::vector<Atom> atoms);

  static DiscreteDistribution point_mass(double value) { return DiscreteDistribution({{value, 1.0}}); }

  std::span<const Atom> atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  double mean() const noexcept;
  double min() const noexcept;
  double max() const noexcept;
  /// E[max(v - threshold, 0)]
  double expected_excess(double threshold) const noexcept;
  /// P[v <= x]
  double cdf(double x) const noexcept;

  friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

 private:
  std::vector<Atom> atoms_;
};

/// Outcome of validation, attached to a validated chain.
struct ChainReport {
  bool reaches_terminal = false;
  std::vector<StateId> free_states;
};

/// Markov chain with rewards over a finite, labelled state set. Terminal
/// states have no explicit row, zero reward, and are absorbing.
class MarkovChainModel {
 public:
  MarkovChainModel(std::vector<std::string> labels, std::vector<bool> terminal,
                   std::vector<TransitionRow> rows, std::vector<double> rewards,
                   double discount = 1.0, StateId initial = 0);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(StateId s) const { return labels_.at(s); }
  std::span<const std::string> labels() const noexcept { return labels_; }
  std::optional<StateId> find(const std::string& label) const;

  bool is_terminal(StateId s) const { return terminal_.at(s); }
  std::vector<StateId> terminal_states() const;
  std::vector<StateId> nonterminal_states() const;
  std::span<const Transition> row(StateId s) const { return rows_.at(s); }
  double reward(StateId s) const { return rewards_.at(s); }
  double discount() const noexcept { return discount_; }
  StateId initial() const noexcept { return initial_; }

  /// Probability of stepping from s directly into a terminal state.
  double termination_probability(StateId s) const;

  MarkovChainModel with_initial(StateId s) const;

  bool validated() const noexcept { return report_.has_value(); }
  const ChainReport& report() const;

  /// Non-terminal states ordered so that every successor precedes its
  /// predecessors, or nullopt if the transition graph has a cycle.
  const std::optional<std::vector<StateId>>& backward_order() const noexcept { return backward_order_; }

  friend bool operator==(const MarkovChainModel& a, const MarkovChainModel& b) {
    return a.labels_ == b.labels_ && a.terminal_ == b.terminal_ && a.rows_ == b.rows_ &&
           a.rewards_ == b.rewards_ && a.discount_ == b.discount_ && a.initial_ == b.initial_;
  }

 private:
  friend MarkovChainModel validate_chain(MarkovChainModel model);

  std::vector<std::string> labels_;
  std::vector<bool> terminal_;
  std::vector<TransitionRow> rows_;
  std::vector<double> rewards_;
  double discount_;
  StateId initial_;
  std::optional<ChainReport> report_;
  std::optional<std::vector<StateId>> backward_order_;
};

struct MdpAction {
  std::string label;
  double reward = 0.0;
  TransitionRow row;

  friend bool operator==(const MdpAction&, const MdpAction&) = default;
};

/// Per-state action sets over a finite state space. Each action carries its
/// own reward and transition row.
class BoxMdpModel {
 public:
  BoxMdpModel(std::vector<std::string> labels, std::vector<bool> terminal,
              std::vector<std::vector<MdpAction>> actions, double discount = 1.0,
              StateId initial = 0);

  /// Wraps a chain as an MDP with the single action `action_label` per state.
  static BoxMdpModel from_chain(const MarkovChainModel& chain, const std::string& action_label = "go");

  /// Lossless inverse of from_chain; requires exactly one action per state.
  MarkovChainModel to_chain() const;

  BoxMdpModel with_action(StateId s, MdpAction action) const;

  std::size_t size() const noexcept { return labels_.size(); }
  const std::string& label(StateId s) const { return labels_.at(s); }
  std::span<const std::string> labels() const noexcept { return labels_; }
  std::optional<StateId> find(const std::string& label) const;
  bool is_terminal(StateId s) const { return terminal_.at(s); }
  std::vector<StateId> nonterminal_states() const;
  std::span<const MdpAction> actions(StateId s) const { return actions_.at(s); }
  double discount() const noexcept { return discount_; }
  StateId initial() const noexcept { return initial_; }

  BoxMdpModel with_initial(StateId s) const;

  bool validated() const noexcept { return validated_; }
  const std::optional<std::vector<StateId>>& backward_order() const noexcept { return backward_order_; }

  friend bool operator==(const BoxMdpModel& a, const BoxMdpModel& b) {
    return a.labels_ == b.labels_ && a.terminal_ == b.terminal_ && a.actions_ == b.actions_ &&
           a.discount_ == b.discount_ && a.initial_ == b.initial_;
  }

 private:
  friend BoxMdpModel validate_mdp(BoxMdpModel model);

  std::vector<std::string> labels_;
  std::vector<bool> terminal_;
  std::vector<std::vector<MdpAction>> actions_;
  double discount_;
  StateId initial_;
  bool validated_ = false;
  std::optional<std::vector<StateId>> backward_order_;
};

/// Checks termination reachability (undiscounted) and free states, and
/// returns the model marked as validated.
MarkovChainModel validate_chain(MarkovChainModel model);

/// MDP analogue of validate_chain: under discount 1 every policy must
/// terminate with probability one and no state-action may be free.
BoxMdpModel validate_mdp(BoxMdpModel model);

// Builders. Every builder returns a validated model.

MarkovChainModel build_pandora_box(double cost, const DiscreteDistribution& dist);

/// A box that is already open with the given value.
MarkovChainModel build_open_box(double value);

/// Box with optional inspection: `open` pays the cost and reveals the value,
/// `take` collects the mean without opening. Opened boxes can only `take`.
BoxMdpModel build_optional_box(double cost, const DiscreteDistribution& dist);

struct StageTwo {
  double cost;
  DiscreteDistribution dist;
};

MarkovChainModel build_two_stage_box(double stage1_cost, const std::map<std::string, double>& label_dist,
                                     const std::map<std::string, StageTwo>& per_label);

enum class BetaBoundary {
  /// Boundary states keep their posterior mean forever (self-loop).
  freeze,
  /// Boundary states collect their reward once, then terminate.
  terminate,
};

struct BetaBanditChain {
  MarkovChainModel chain;
  /// Bound on the value lost by truncating the lattice.
  double truncation_error_bound;
};

BetaBanditChain build_beta_bandit_chain(double a0, double b0, int depth, double discount,
                                        BetaBoundary boundary = BetaBoundary::freeze);

/// Service time requirements for the job chain builders.
struct KnownSize {
  int size;
};
struct UnknownSize {
  /// Distribution over positive integer service times.
  DiscreteDistribution size_dist;
};
struct StagedSize {
  std::vector<DiscreteDistribution> stage_dists;
};
struct GeometricSize {
  /// Per-unit completion probability.
  double q;
};

MarkovChainModel build_job_chain(const KnownSize& kind);
MarkovChainModel build_job_chain(const UnknownSize& kind);
MarkovChainModel build_job_chain(const StagedSize& kind);
MarkovChainModel build_job_chain(const GeometricSize& kind);

struct StepResult {
  StateId next;
  double reward;
};

StepResult step(const MarkovChainModel& model, StateId state, Rng& rng);

/// Samples an index from a transition row.
StateId sample_row(std::span<const Transition> row, Rng& rng);

/// Seed for replication `index` derived from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Shortest round-trip decimal text for a double.
std::string format_number(double value);

}  // namespace gittins_lab
