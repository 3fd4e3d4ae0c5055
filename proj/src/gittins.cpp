#include "gittins_lab/gittins.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

std::string_view to_string(IndexMethod method) {
  switch (method) {
    case IndexMethod::analytic: return "analytic";
    case IndexMethod::bisection: return "bisection";
    case IndexMethod::elimination: return "elimination";
  }
  return "unknown";
}

double pandora_index(double cost, const DiscreteDistribution& dist) {
  if (!(cost > 0.0) || !std::isfinite(cost)) {
    throw Error(ErrorCode::NonPositiveCost, "cost must be a positive finite number");
  }
  std::vector<DiscreteDistribution::Atom> atoms(dist.atoms().begin(), dist.atoms().end());
  std::sort(atoms.begin(), atoms.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    mass += atoms[k].prob;
    weighted += atoms[k].prob * atoms[k].value;
    const double g = (weighted - cost) / mass;
    if (k + 1 == atoms.size() || g >= atoms[k + 1].value) return g;
  }
  return atoms.back().value - cost;  // unreachable
}

namespace {

double go_value_at(const BoxMdpModel& model, StateId s, double alpha) {
  const auto v = local_values(model, alpha);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : model.actions(s)) {
    double q = a.reward;
    for (const auto& t : a.row) q += model.discount() * t.prob * v[t.next];
    best = std::max(best, q);
  }
  return best;
}

}  // namespace

double index_bisection(const BoxMdpModel& model, StateId s, double tol) {
  if (!model.validated()) throw Error(ErrorCode::UnvalidatedModel, "model must be validated before solving");
  if (s >= model.size() || model.is_terminal(s)) throw Error(ErrorCode::InvalidModel, "state must be non-terminal");
  double r = -std::numeric_limits<double>::infinity();
  for (const auto& a : model.actions(s)) r = std::max(r, a.reward);
  const double half = std::max(1.0, std::abs(r));

  // Stop is optimal at alpha iff go_value <= alpha.
  auto stops = [&](double alpha) { return go_value_at(model, s, alpha) <= alpha; };
  double lo = r - half;
  double hi = r + half;
  double width = half;
  for (int j = 0; stops(lo); ++j) {
    width *= 2.0;
    lo = r - width;
    if (j > 1000000 || !std::isfinite(lo)) throw Error(ErrorCode::BracketFailure, "lower bracket diverged");
  }
  width = half;
  for (int j = 0; !stops(hi); ++j) {
    width *= 2.0;
    hi = r + width;
    if (j > 1000000 || !std::isfinite(hi)) {
      throw Error(ErrorCode::BracketFailure, "upper bracket diverged; the state behaves like a free state");
    }
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (stops(mid) ? hi : lo) = mid;
  }
  // The go value is affine just left of the root; intersect that piece
  // with the diagonal to recover the root exactly.
  const auto left = solve_local(model, s, lo);
  if (left.stop_prob_right < 1.0) {
    const double root = (left.value - left.stop_prob_right * lo) / (1.0 - left.stop_prob_right);
    if (root >= lo && root <= hi + tol && std::abs(go_value_at(model, s, root) - root) <= 1e-12 * (1.0 + std::abs(root))) {
      return root;
    }
  }
  return 0.5 * (lo + hi);
}

double index_bisection(const MarkovChainModel& model, StateId s, double tol) {
  return index_bisection(BoxMdpModel::from_chain(model), s, tol);
}

GittinsTable index_all_states(const MarkovChainModel& model) {
  if (!model.validated()) throw Error(ErrorCode::UnvalidatedModel, "model must be validated before solving");
  const std::size_t n = model.size();
  const double gamma = model.discount();
  GittinsTable table;
  table.index.assign(n, std::numeric_limits<double>::quiet_NaN());
  table.method.assign(n, IndexMethod::elimination);

  // C: continuation set, in insertion order; inv = (I - gamma P_CC)^{-1}.
  std::vector<StateId> c;
  std::vector<long> pos(n, -1);
  Eigen::MatrixXd inv(0, 0);
  std::vector<StateId> remaining = model.nonterminal_states();

  auto p_between = [&](StateId from, StateId to) {
    double p = 0.0;
    for (const auto& t : model.row(from)) {
      if (t.next == to) p += t.prob;
    }
    return p;
  };

  while (!remaining.empty()) {
    const auto k = static_cast<Eigen::Index>(c.size());
    // a(y): reward collected from y while inside C; b(y): discounted
    // probability of leaving C to a non-terminal state outside C.
    Eigen::VectorXd rc(k), out(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      rc(i) = model.reward(c[i]);
      double o = 0.0;
      for (const auto& t : model.row(c[i])) {
        if (!model.is_terminal(t.next) && pos[t.next] < 0) o += t.prob;
      }
      out(i) = gamma * o;
    }
    Eigen::VectorXd a = inv * rc;
    Eigen::VectorXd b = inv * out;

    double best_ratio = -std::numeric_limits<double>::infinity();
    std::size_t best_at = 0;
    for (std::size_t idx = 0; idx < remaining.size(); ++idx) {
      const StateId x = remaining[idx];
      double ax = model.reward(x);
      double bx = 0.0;
      for (const auto& t : model.row(x)) {
        if (model.is_terminal(t.next)) continue;
        if (pos[t.next] >= 0) {
          ax += gamma * t.prob * a(pos[t.next]);
          bx += gamma * t.prob * b(pos[t.next]);
        } else {
          bx += gamma * t.prob;
        }
      }
      const double slack = 1.0 - bx;
      double ratio;
      if (slack <= 1e-13) {
        ratio = ax < 0.0 ? -std::numeric_limits<double>::infinity() : kInfiniteIndex;
      } else {
        ratio = ax / slack;
      }
      if (idx == 0 || ratio > best_ratio) {
        best_ratio = ratio;
        best_at = idx;
      }
    }
    const StateId z = remaining[best_at];
    table.index[z] = best_ratio;
    remaining.erase(remaining.begin() + static_cast<long>(best_at));

    // Grow the inverse by one row and column (block inversion).
    Eigen::VectorXd u(k), v(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      u(i) = -gamma * p_between(c[i], z);
      v(i) = -gamma * p_between(z, c[i]);
    }
    const double d = 1.0 - gamma * p_between(z, z);
    Eigen::VectorXd mu = inv * u;
    Eigen::RowVectorXd vm = v.transpose() * inv;
    const double schur = d - v.dot(mu);
    Eigen::MatrixXd grown(k + 1, k + 1);
    grown.topLeftCorner(k, k) = inv + (mu * vm) / schur;
    grown.topRightCorner(k, 1) = -mu / schur;
    grown.bottomLeftCorner(1, k) = -vm / schur;
    grown(k, k) = 1.0 / schur;
    inv = std::move(grown);
    pos[z] = static_cast<long>(c.size());
    c.push_back(z);
  }
  return table;
}

GittinsTable index_table_bisection(const MarkovChainModel& model, double tol) {
  const auto mdp = BoxMdpModel::from_chain(model);
  GittinsTable table;
  table.index.assign(model.size(), std::numeric_limits<double>::quiet_NaN());
  table.method.assign(model.size(), IndexMethod::bisection);
  for (StateId s : model.nonterminal_states()) table.index[s] = index_bisection(mdp, s, tol);
  return table;
}

double job_index_unknown(const DiscreteDistribution& size_dist, int attained) {
  if (attained < 0) throw Error(ErrorCode::InvalidModel, "attained service must be nonnegative");
  std::map<double, double> mass;
  for (const auto& a : size_dist.atoms()) {
    if (a.value <= 0.0) throw Error(ErrorCode::ZeroSize, "service times must be positive");
    mass[a.value] += a.prob;
  }
  const double s = attained;
  double tail = 0.0;
  for (const auto& [t, p] : mass) {
    if (t > s) tail += p;
  }
  if (tail <= 0.0) throw Error(ErrorCode::ExhaustedSupport, "no service time exceeds the attained service");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [deadline, unused] : mass) {
    if (deadline <= s) continue;
    double work = 0.0;
    double done = 0.0;
    for (const auto& [t, p] : mass) {
      if (t <= s) continue;
      work += p * (std::min(t, deadline) - s);
      if (t <= deadline) done += p;
    }
    best = std::min(best, work / done);
  }
  return -best;
}

MdpIndexResult mdp_index_and_whittle(const BoxMdpModel& model, StateId s, double tol) {
  MdpIndexResult out;
  out.index = index_bisection(model, s, tol);
  out.regions = local_action_regions(model, s);
  out.verdict.state = s;

  auto has = [](const ActionRegion& r, const std::string& a) {
    return std::find(r.actions.begin(), r.actions.end(), a) != r.actions.end();
  };
  // Holds iff one non-stop action is optimal wherever stop is not.
  const ActionRegion* first = nullptr;
  for (const auto& r : out.regions) {
    if (!has(r, kStopAction)) {
      first = &r;
      break;
    }
  }
  if (first) {
    std::vector<std::string> candidates(first->actions.begin(), first->actions.end());
    bool holds = false;
    for (const auto& a : candidates) {
      bool ok = std::all_of(out.regions.begin(), out.regions.end(),
                            [&](const ActionRegion& r) { return has(r, kStopAction) || has(r, a); });
      if (ok) {
        holds = true;
        break;
      }
    }
    out.verdict.holds = holds;
    if (!holds) {
      const auto& a1 = candidates.front();
      for (const auto& r : out.regions) {
        if (!has(r, kStopAction) && !has(r, a1)) {
          out.verdict.witness = std::make_pair(first->representative(), r.representative());
          out.verdict.witness_actions = std::make_pair(a1, r.actions.front());
          break;
        }
      }
    }
  }

  // The index is where stop first becomes optimal for good.
  for (auto it = out.regions.rbegin(); it != out.regions.rend(); ++it) {
    std::vector<std::string> others;
    for (const auto& a : it->actions) {
      if (a != kStopAction) others.push_back(a);
    }
    if (has(*it, kStopAction) && !others.empty()) {
      out.co_optimal_action = *std::min_element(others.begin(), others.end());
      break;
    }
  }
  if (out.co_optimal_action.empty()) {
    auto r = solve_local(model, s, out.index);
    for (const auto& a : r.optimal_actions) {
      if (a != kStopAction && (out.co_optimal_action.empty() || a < out.co_optimal_action)) out.co_optimal_action = a;
    }
  }
  return out;
}

}  // namespace gittins_lab
