#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gittins_lab/chain.hpp"
#include "gittins_lab/local_mdp.hpp"

namespace gittins_lab {

/// Index of a state with no finite threshold. Unreachable for validated
/// models, which contain no free states.
inline constexpr double kInfiniteIndex = std::numeric_limits<double>::infinity();

enum class IndexMethod { analytic, bisection, elimination };

std::string_view to_string(IndexMethod method);

struct GittinsTable {
  /// One entry per state; terminal states hold NaN.
  std::vector<double> index;
  std::vector<IndexMethod> method;

  double at(StateId s) const { return index.at(s); }
};

/// Root g of E[max(v - g, 0)] = cost, solved on the linear piece that
/// contains it.
double pandora_index(double cost, const DiscreteDistribution& dist);

double index_bisection(const BoxMdpModel& model, StateId s, double tol = 1e-12);
double index_bisection(const MarkovChainModel& model, StateId s, double tol = 1e-12);

/// Largest-index-first elimination over all non-terminal states.
GittinsTable index_all_states(const MarkovChainModel& model);

/// Per-state bisection; slower but independent of index_all_states.
GittinsTable index_table_bisection(const MarkovChainModel& model, double tol = 1e-12);

/// Index of a job of unknown size with `attained` units of service done:
/// minus the least expected service per completion over all deadlines.
double job_index_unknown(const DiscreteDistribution& size_dist, int attained);

struct WhittleVerdict {
  StateId state = 0;
  bool holds = true;
  /// When the condition fails: two alphas whose optimal first actions are
  /// distinct non-stop actions, with those actions.
  std::optional<std::pair<double, double>> witness;
  std::optional<std::pair<std::string, std::string>> witness_actions;
};

struct MdpIndexResult {
  double index = 0.0;
  WhittleVerdict verdict;
  /// Lexicographically smallest non-stop action optimal at alpha = index.
  std::string co_optimal_action;
  std::vector<ActionRegion> regions;
};

MdpIndexResult mdp_index_and_whittle(const BoxMdpModel& model, StateId s, double tol = 1e-12);

}  // namespace gittins_lab
