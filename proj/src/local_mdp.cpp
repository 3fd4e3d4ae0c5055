#include "gittins_lab/local_mdp.hpp"

#include <Eigen/Dense>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Optimal stopping problem over a BoxMdpModel: at each non-terminal state
// either stop (if allowed) for a fixed payoff, or play one of the allowed
// actions. Rewards can be zeroed and the objective negated (sign = -1) to
// minimize.
struct StoppingProblem {
  const BoxMdpModel* model;
  std::vector<std::optional<double>> stop_payoff;
  std::vector<std::vector<std::size_t>> allowed;
  bool zero_rewards = false;
  double sign = 1.0;
};

double action_reward(const StoppingProblem& p, const MdpAction& a) { return p.zero_rewards ? 0.0 : p.sign * a.reward; }

// Values of the signed problem (maximization), terminal states 0.
std::vector<double> solve_acyclic(const StoppingProblem& p, const std::vector<StateId>& order) {
  const auto& m = *p.model;
  std::vector<double> w(m.size(), 0.0);
  for (StateId x : order) {
    double best = p.stop_payoff[x] ? p.sign * *p.stop_payoff[x] : -kInf;
    for (std::size_t ai : p.allowed[x]) {
      const auto& a = m.actions(x)[ai];
      double self = 0.0;
      double rest = action_reward(p, a);
      for (const auto& t : a.row) {
        if (t.next == x) {
          self += t.prob;
        } else {
          rest += m.discount() * t.prob * w[t.next];
        }
      }
      const double denom = 1.0 - m.discount() * self;
      if (denom <= 0.0) continue;
      best = std::max(best, rest / denom);
    }
    w[x] = best;
  }
  return w;
}

// Policy iteration; a policy entry of -1 means stop.
std::vector<double> solve_cyclic(const StoppingProblem& p) {
  const auto& m = *p.model;
  const std::size_t n = m.size();
  const double gamma = m.discount();
  std::vector<long> policy(n, -1);
  for (StateId x = 0; x < n; ++x) {
    if (m.is_terminal(x)) continue;
    if (!p.stop_payoff[x]) policy[x] = static_cast<long>(p.allowed[x].front());
  }
  std::vector<double> w(n, 0.0);
  for (int iter = 0; iter < 10000; ++iter) {
    // Evaluate.
    std::vector<long> pos(n, -1);
    std::vector<StateId> go;
    for (StateId x = 0; x < n; ++x) {
      if (m.is_terminal(x)) continue;
      if (policy[x] < 0) {
        w[x] = p.sign * *p.stop_payoff[x];
      } else {
        pos[x] = static_cast<long>(go.size());
        go.push_back(x);
      }
    }
    if (!go.empty()) {
      const auto k = static_cast<Eigen::Index>(go.size());
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(k, k);
      Eigen::VectorXd b(k);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto& act = m.actions(go[i])[policy[go[i]]];
        b(i) = action_reward(p, act);
        for (const auto& t : act.row) {
          if (m.is_terminal(t.next)) continue;
          if (pos[t.next] >= 0) {
            a(i, pos[t.next]) -= gamma * t.prob;
          } else {
            b(i) += gamma * t.prob * w[t.next];
          }
        }
      }
      Eigen::VectorXd sol = a.fullPivLu().solve(b);
      for (Eigen::Index i = 0; i < k; ++i) w[go[i]] = sol(i);
    }
    // Improve, keeping the current choice unless beaten by a margin.
    bool changed = false;
    for (StateId x = 0; x < n; ++x) {
      if (m.is_terminal(x)) continue;
      auto q_of = [&](long choice) {
        if (choice < 0) return p.sign * *p.stop_payoff[x];
        const auto& act = m.actions(x)[choice];
        double q = action_reward(p, act);
        for (const auto& t : act.row) q += gamma * t.prob * w[t.next];
        return q;
      };
      const double current = q_of(policy[x]);
      long best = policy[x];
      double best_q = current;
      if (p.stop_payoff[x]) {
        double q = q_of(-1);
        if (q > best_q) {
          best_q = q;
          best = -1;
        }
      }
      for (std::size_t ai : p.allowed[x]) {
        double q = q_of(static_cast<long>(ai));
        if (q > best_q) {
          best_q = q;
          best = static_cast<long>(ai);
        }
      }
      if (best != policy[x] && best_q > current + 1e-12 * (1.0 + std::abs(current))) {
        policy[x] = best;
        changed = true;
      }
    }
    if (!changed) return w;
  }
  return w;
}

std::vector<double> solve_problem(const StoppingProblem& p) {
  const auto& order = p.model->backward_order();
  std::vector<double> w = order ? solve_acyclic(p, *order) : solve_cyclic(p);
  if (p.sign != 1.0) {
    for (double& v : w) v *= p.sign;
  }
  for (StateId x = 0; x < w.size(); ++x) {
    if (p.model->is_terminal(x)) w[x] = 0.0;
  }
  return w;
}

void require_solvable(const BoxMdpModel& model, StateId s) {
  if (!model.validated()) throw Error(ErrorCode::UnvalidatedModel, "model must be validated before solving");
  if (s >= model.size() || model.is_terminal(s)) {
    throw Error(ErrorCode::InvalidModel, "local MDP needs a non-terminal state");
  }
}

double q_value(const BoxMdpModel& m, const MdpAction& a, const std::vector<double>& v) {
  double q = a.reward;
  for (const auto& t : a.row) q += m.discount() * t.prob * v[t.next];
  return q;
}

StoppingProblem full_problem(const BoxMdpModel& model, double alpha) {
  StoppingProblem p{&model, std::vector<std::optional<double>>(model.size()),
                    std::vector<std::vector<std::size_t>>(model.size())};
  for (StateId x = 0; x < model.size(); ++x) {
    if (model.is_terminal(x)) continue;
    p.stop_payoff[x] = alpha;
    p.allowed[x].resize(model.actions(x).size());
    std::iota(p.allowed[x].begin(), p.allowed[x].end(), std::size_t{0});
  }
  return p;
}

}  // namespace

std::vector<double> local_values(const BoxMdpModel& model, double alpha) {
  if (!model.validated()) throw Error(ErrorCode::UnvalidatedModel, "model must be validated before solving");
  return solve_problem(full_problem(model, alpha));
}

LocalSolveResult solve_local(const BoxMdpModel& model, StateId s, double alpha) {
  require_solvable(model, s);
  const auto v = solve_problem(full_problem(model, alpha));

  LocalSolveResult out;
  out.value = v[s];
  out.go_value = -kInf;
  for (const auto& a : model.actions(s)) out.go_value = std::max(out.go_value, q_value(model, a, v));
  if (nearly_equal(out.value, alpha)) out.optimal_actions.emplace_back(kStopAction);
  for (const auto& a : model.actions(s)) {
    if (nearly_equal(q_value(model, a, v), out.value)) out.optimal_actions.push_back(a.label);
  }

  // Restrict every state to its optimal options and extremize the
  // discounted probability of stopping.
  StoppingProblem p{&model, std::vector<std::optional<double>>(model.size()),
                    std::vector<std::vector<std::size_t>>(model.size()), true, 1.0};
  for (StateId x = 0; x < model.size(); ++x) {
    if (model.is_terminal(x)) continue;
    if (nearly_equal(v[x], alpha)) p.stop_payoff[x] = 1.0;
    const auto acts = model.actions(x);
    for (std::size_t ai = 0; ai < acts.size(); ++ai) {
      if (nearly_equal(q_value(model, acts[ai], v), v[x])) p.allowed[x].push_back(ai);
    }
    if (!p.stop_payoff[x] && p.allowed[x].empty()) {
      // Guard against a tolerance miss: keep the best action.
      std::size_t best = 0;
      for (std::size_t ai = 1; ai < acts.size(); ++ai) {
        if (q_value(model, acts[ai], v) > q_value(model, acts[best], v)) best = ai;
      }
      p.allowed[x].push_back(best);
    }
  }
  out.stop_prob_right = std::clamp(solve_problem(p)[s], 0.0, 1.0);
  p.sign = -1.0;
  out.stop_prob_left = std::clamp(solve_problem(p)[s], 0.0, 1.0);
  return out;
}

LocalSolveResult solve_local(const MarkovChainModel& model, StateId s, double alpha) {
  return solve_local(BoxMdpModel::from_chain(model), s, alpha);
}

// ---------------------------------------------------------------------------
// Envelope

double LocalValueProfile::evaluate(double alpha) const {
  double v = -kInf;
  for (const auto& l : lines) v = std::max(v, l.at(alpha));
  return v;
}

double LocalValueProfile::slope_at(double alpha) const {
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (alpha < breakpoints[i]) return slopes[i];
  }
  return slopes.back();
}

namespace {

struct Refiner {
  const BoxMdpModel& model;
  StateId s;
  std::vector<EnvelopeLine> lines;
  int budget = 100000;

  std::pair<EnvelopeLine, EnvelopeLine> lines_at(double alpha) const {
    auto r = solve_local(model, s, alpha);
    return {EnvelopeLine{r.value - alpha * r.stop_prob_left, r.stop_prob_left},
            EnvelopeLine{r.value - alpha * r.stop_prob_right, r.stop_prob_right}};
  }

  // Appends the envelope lines strictly between l1 and l2.
  void refine(const EnvelopeLine& l1, const EnvelopeLine& l2) {
    if (l2.slope - l1.slope <= 1e-14 || --budget < 0) return;
    const double x = (l1.intercept - l2.intercept) / (l2.slope - l1.slope);
    const double v = solve_local(model, s, x).value;
    const double on_line = std::max(l1.at(x), l2.at(x));
    if (v <= on_line || nearly_equal(v, on_line)) return;
    auto [left, right] = lines_at(x);
    refine(l1, left);
    lines.push_back(left);
    if (right.slope > left.slope + 1e-14) lines.push_back(right);
    refine(lines.back(), l2);
  }
};

}  // namespace

LocalValueProfile value_profile(const BoxMdpModel& model, StateId s) {
  require_solvable(model, s);
  double scale = 1.0;
  for (StateId x = 0; x < model.size(); ++x) {
    for (const auto& a : model.actions(x)) scale = std::max(scale, std::abs(a.reward));
  }
  double lo = -scale;
  double hi = scale;
  int guard = 0;
  while (solve_local(model, s, lo).stop_prob_right > 0.0) {
    lo *= 2.0;
    if (++guard > 1000) throw Error(ErrorCode::BracketFailure, "no never-stop region found");
  }
  while (solve_local(model, s, hi).stop_prob_left < 1.0 - 1e-12) {
    hi *= 2.0;
    if (++guard > 1000) throw Error(ErrorCode::BracketFailure, "no always-stop region found");
  }
  Refiner r{model, s, {}};
  const EnvelopeLine first = r.lines_at(lo).second;
  const EnvelopeLine last{0.0, 1.0};
  r.lines.push_back(first);
  r.refine(first, last);
  r.lines.push_back(last);

  LocalValueProfile out;
  out.state = s;
  out.lines = std::move(r.lines);
  for (std::size_t i = 0; i + 1 < out.lines.size(); ++i) {
    const auto& a = out.lines[i];
    const auto& b = out.lines[i + 1];
    const double x = (a.intercept - b.intercept) / (b.slope - a.slope);
    out.breakpoints.push_back(x);
    out.values.push_back(std::max(a.at(x), b.at(x)));
    out.slopes.push_back(a.slope);
  }
  out.slopes.push_back(out.lines.back().slope);
  out.gittins_threshold = out.breakpoints.back();
  return out;
}

LocalValueProfile value_profile(const MarkovChainModel& model, StateId s) {
  return value_profile(BoxMdpModel::from_chain(model), s);
}

std::string profile_csv(const LocalValueProfile& profile) {
  std::string out = "alpha,value,slope\n";
  char buf[128];
  auto row = [&](double alpha) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", alpha, profile.evaluate(alpha), profile.slope_at(alpha));
    out += buf;
  };
  const auto& bp = profile.breakpoints;
  const double pad = std::max(1.0, bp.back() - bp.front());
  row(bp.front() - pad);
  for (double x : bp) row(x);
  row(bp.back() + pad);
  return out;
}

// ---------------------------------------------------------------------------
// Action regions

double ActionRegion::representative() const {
  if (is_point()) return lo;
  if (std::isinf(lo) && std::isinf(hi)) return 0.0;
  if (std::isinf(lo)) return hi - std::max(1.0, std::abs(hi));
  if (std::isinf(hi)) return lo + std::max(1.0, std::abs(lo));
  return 0.5 * (lo + hi);
}

std::vector<ActionRegion> local_action_regions(const BoxMdpModel& model, StateId s) {
  require_solvable(model, s);
  const auto acts = model.actions(s);
  const double gamma = model.discount();

  // Envelope of every successor; terminal successors are identically 0.
  std::map<StateId, LocalValueProfile> succ;
  for (const auto& a : acts) {
    for (const auto& t : a.row) {
      if (succ.count(t.next)) continue;
      if (model.is_terminal(t.next)) {
        LocalValueProfile zero;
        zero.lines = {{0.0, 0.0}};
        succ.emplace(t.next, std::move(zero));
      } else {
        succ.emplace(t.next, value_profile(model, t.next));
      }
    }
  }
  auto q_exact = [&](const MdpAction& a, double alpha) {
    double q = a.reward;
    for (const auto& t : a.row) q += gamma * t.prob * succ.at(t.next).evaluate(alpha);
    return q;
  };
  auto optimal_set = [&](double alpha) {
    std::vector<double> q(acts.size());
    double best = alpha;
    for (std::size_t i = 0; i < acts.size(); ++i) best = std::max(best, q[i] = q_exact(acts[i], alpha));
    std::vector<std::string> set;
    if (nearly_equal(alpha, best)) set.emplace_back(kStopAction);
    for (std::size_t i = 0; i < acts.size(); ++i) {
      if (nearly_equal(q[i], best)) set.push_back(acts[i].label);
    }
    return set;
  };

  std::vector<double> cuts;
  for (const auto& [x, prof] : succ) cuts.insert(cuts.end(), prof.breakpoints.begin(), prof.breakpoints.end());
  std::sort(cuts.begin(), cuts.end());

  // Inside each cell between successor breakpoints every Q is affine; add
  // the pairwise crossings of stop and the actions.
  std::vector<double> points = cuts;
  std::vector<double> bounds{-kInf};
  bounds.insert(bounds.end(), cuts.begin(), cuts.end());
  bounds.push_back(kInf);
  for (std::size_t c = 0; c + 1 < bounds.size(); ++c) {
    const double lo = bounds[c];
    const double hi = bounds[c + 1];
    if (!(hi > lo)) continue;
    const double mid = ActionRegion{lo, hi, {}}.representative();
    std::vector<EnvelopeLine> f{{0.0, 1.0}};
    for (const auto& a : acts) {
      EnvelopeLine q{a.reward, 0.0};
      for (const auto& t : a.row) {
        const auto& lines = succ.at(t.next).lines;
        const auto* best = &lines.front();
        for (const auto& l : lines) {
          if (l.at(mid) > best->at(mid)) best = &l;
        }
        q.intercept += gamma * t.prob * best->intercept;
        q.slope += gamma * t.prob * best->slope;
      }
      f.push_back(q);
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (std::size_t j = i + 1; j < f.size(); ++j) {
        const double ds = f[j].slope - f[i].slope;
        if (std::abs(ds) < 1e-14) continue;
        const double x = (f[i].intercept - f[j].intercept) / ds;
        if (x > lo && x < hi) points.push_back(x);
      }
    }
  }
  std::sort(points.begin(), points.end());
  std::vector<double> uniq;
  for (double x : points) {
    if (uniq.empty() || !nearly_equal(uniq.back(), x)) uniq.push_back(x);
  }

  std::vector<ActionRegion> items;
  double left = -kInf;
  for (double x : uniq) {
    ActionRegion cell{left, x, {}};
    cell.actions = optimal_set(cell.representative());
    items.push_back(std::move(cell));
    items.push_back(ActionRegion{x, x, optimal_set(x)});
    left = x;
  }
  ActionRegion tail{left, kInf, {}};
  tail.actions = optimal_set(tail.representative());
  items.push_back(std::move(tail));

  std::vector<ActionRegion> merged;
  for (auto& r : items) {
    if (!merged.empty() && merged.back().actions == r.actions) {
      merged.back().hi = r.hi;
    } else {
      merged.push_back(std::move(r));
    }
  }
  return merged;
}

}  // namespace gittins_lab
