#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gittins_lab/chain.hpp"
#include "gittins_lab/gittins.hpp"

namespace gittins_lab {

/// One chain per edge; `vertices` numbers the graph's vertices.
struct ForestConstraint {
  int vertices = 0;
  std::vector<std::pair<int, int>> edges;
};

/// Independent arms played one step at a time. Plain chains are stored as
/// single-action MDPs. Without a forest constraint the process ends once
/// k arms are terminal; with one, arms finish by selecting their edge and
/// the process ends when no edge can be added without closing a cycle.
class McsInstance {
 public:
  McsInstance(std::vector<BoxMdpModel> arms, int k = 1, std::optional<ForestConstraint> forest = std::nullopt);

  static McsInstance from_chains(const std::vector<MarkovChainModel>& chains, int k = 1,
                                 std::optional<ForestConstraint> forest = std::nullopt);

  std::size_t size() const noexcept { return arms_.size(); }
  const BoxMdpModel& arm(std::size_t i) const { return arms_.at(i); }
  std::span<const BoxMdpModel> arms() const noexcept { return arms_; }
  int k() const noexcept { return k_; }
  const std::optional<ForestConstraint>& forest() const noexcept { return forest_; }
  double discount() const noexcept { return arms_.front().discount(); }

  /// True when every arm has exactly one action per state.
  bool is_chain_instance() const;
  MarkovChainModel chain(std::size_t i) const { return arms_.at(i).to_chain(); }

 private:
  std::vector<BoxMdpModel> arms_;
  int k_;
  std::optional<ForestConstraint> forest_;
};

struct McsState {
  std::vector<StateId> states;

  friend bool operator==(const McsState&, const McsState&) = default;
};

McsState initial_state(const McsInstance& inst);
std::size_t finished_count(const McsInstance& inst, const McsState& state);
/// Arms that may be played, in increasing id.
std::vector<std::size_t> eligible_arms(const McsInstance& inst, const McsState& state);
bool is_terminal(const McsInstance& inst, const McsState& state);

/// Arm and action index chosen at a product state.
struct Choice {
  std::size_t arm = 0;
  std::size_t action = 0;

  friend bool operator==(const Choice&, const Choice&) = default;
};

using Policy = std::function<Choice(const McsState&)>;

std::vector<GittinsTable> index_tables(const McsInstance& inst);

/// Eligible arm of largest index; ties go to the lowest id.
std::size_t gittins_action(const McsInstance& inst, const McsState& state, const std::vector<GittinsTable>& tables);

/// Eligible arms whose index is within tolerance of the largest.
std::vector<std::size_t> index_argmax(const McsInstance& inst, const McsState& state,
                                      const std::vector<GittinsTable>& tables);

struct LookaheadDecision {
  bool stop = false;
  /// Box to open, or when stopping the open box to keep.
  std::size_t arm = 0;
};

/// Pandora view of one arm at its current state.
struct PandoraArm {
  bool open = false;
  double value = 0.0;  // revealed value when open
  double cost = 0.0;
  std::optional<DiscreteDistribution> dist;
};

PandoraArm pandora_view(const MarkovChainModel& chain, StateId s);

/// Expected improvement of a closed box over `baseline`.
double expected_improvement(const PandoraArm& box, double baseline);

LookaheadDecision lookahead_action(const McsInstance& inst, const McsState& state);

enum class PolicyKind { gittins, lookahead, random };

std::optional<PolicyKind> parse_policy(const std::string& name);

struct SimulationSummary {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> values;
};

/// Worker threads: GITTINS_LAB_THREADS when set, else hardware concurrency.
unsigned worker_threads();

/// Replication r uses seed derive_seed(seed, r); results are ordered by r.
SimulationSummary simulate(const McsInstance& inst, PolicyKind policy, std::uint64_t seed, std::size_t reps);

struct SurrogateSample {
  std::size_t chain = 0;
  double value = 0.0;
};

SurrogateSample surrogate_sample(const MarkovChainModel& chain, StateId s, const GittinsTable& table, Rng& rng,
                                 std::size_t chain_id = 0);

/// Exact law of the running-minimum index from s.
DiscreteDistribution surrogate_distribution(const MarkovChainModel& chain, StateId s, const GittinsTable& table);

struct FormulaValue {
  double value = 0.0;
  double std_error = 0.0;
};

inline constexpr std::size_t kExactProductCap = 1000000;

/// Optimal value from surrogate values: expected best k-sum (or best
/// spanning forest under the constraint), by enumeration.
FormulaValue value_formula_exact(const McsInstance& inst, std::size_t cap = kExactProductCap);
FormulaValue value_formula_monte_carlo(const McsInstance& inst, std::size_t reps, std::uint64_t seed);

struct ForestRun {
  std::vector<std::size_t> edges;
  double value = 0.0;
};

/// One run of the index policy under the forest constraint.
ForestRun greedy_forest(const McsInstance& inst, const std::vector<GittinsTable>& tables, Rng& rng);

}  // namespace gittins_lab
