#pragma once

#include <cstdint>
#include <vector>

#include "gittins_lab/selection.hpp"

namespace gittins_lab {

inline constexpr std::size_t kProductCap = 5000000;

struct OracleSolution {
  /// Optimal value at the initial product state.
  double value = 0.0;
  /// Reachable non-terminal product states with their values and the
  /// Bellman-optimal choices (tolerance 1e-9).
  std::vector<McsState> states;
  std::vector<double> values;
  std::vector<std::vector<Choice>> argmax;
};

/// Value iteration over the product states reachable from the start.
OracleSolution exact_value(const McsInstance& inst, std::size_t cap = kProductCap);

/// Expected total reward of a deterministic stationary policy.
double exact_policy_value(const McsInstance& inst, const Policy& policy, std::size_t cap = kProductCap);

/// The index policy as a Policy object.
Policy gittins_policy(const McsInstance& inst, std::vector<GittinsTable> tables);

/// Index heuristic for MDP arms: the arm of largest MDP index (lowest id on
/// ties), played with the non-stop action co-optimal at that index. Equals
/// gittins_policy on chain instances.
Policy mdp_gittins_policy(const McsInstance& inst);

/// One-step lookahead as a Policy object (stop keeps the best open box).
Policy lookahead_policy(const McsInstance& inst);

}  // namespace gittins_lab
