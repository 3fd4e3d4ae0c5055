#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gittins_lab/chain.hpp"

namespace gittins_lab {

inline constexpr const char* kStopAction = "stop";

struct LocalSolveResult {
  double value = 0.0;
  /// Best value when the first action is not stop.
  double go_value = 0.0;
  /// Discounted probability of eventually stopping, minimized and maximized
  /// over optimal policies. These are the left and right derivatives of the
  /// value in alpha; they coincide away from kinks.
  double stop_prob_left = 0.0;
  double stop_prob_right = 0.0;
  /// "stop" first when stopping is optimal, then action labels in model order.
  std::vector<std::string> optimal_actions;

  bool stop_optimal() const { return !optimal_actions.empty() && optimal_actions.front() == kStopAction; }
};

LocalSolveResult solve_local(const BoxMdpModel& model, StateId s, double alpha);
LocalSolveResult solve_local(const MarkovChainModel& model, StateId s, double alpha);

/// Local values of every state at a fixed alpha (terminal states hold 0).
std::vector<double> local_values(const BoxMdpModel& model, double alpha);

/// A policy line alpha -> intercept + slope * alpha.
struct EnvelopeLine {
  double intercept;
  double slope;

  double at(double alpha) const { return intercept + slope * alpha; }
};

/// Exact upper envelope alpha -> V(s; alpha).
struct LocalValueProfile {
  StateId state = 0;
  std::vector<double> breakpoints;
  /// slopes[i] applies left of breakpoints[i]; slopes.back() applies right of
  /// the last breakpoint, so slopes.size() == breakpoints.size() + 1.
  std::vector<double> slopes;
  std::vector<double> values;
  double gittins_threshold = 0.0;
  /// Envelope lines left to right; lines[i] is active on segment i.
  std::vector<EnvelopeLine> lines;

  double evaluate(double alpha) const;
  /// Slope of the segment containing alpha (right derivative at breakpoints).
  double slope_at(double alpha) const;
};

LocalValueProfile value_profile(const BoxMdpModel& model, StateId s);
LocalValueProfile value_profile(const MarkovChainModel& model, StateId s);

/// CSV with header "alpha,value,slope": one row per breakpoint plus one
/// row on each unbounded end.
std::string profile_csv(const LocalValueProfile& profile);

/// An interval of alpha with a constant optimal first-action set. Point
/// regions have lo == hi; unbounded ends are +-infinity.
struct ActionRegion {
  double lo;
  double hi;
  std::vector<std::string> actions;

  bool is_point() const { return lo == hi; }
  /// A point inside the region.
  double representative() const;
};

std::vector<ActionRegion> local_action_regions(const BoxMdpModel& model, StateId s);

/// Relative tolerance for declaring two values equal.
inline constexpr double kTieTolerance = 1e-9;

inline bool nearly_equal(double a, double b) {
  double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= std::max(kTieTolerance * scale, 1e-12);
}

}  // namespace gittins_lab
