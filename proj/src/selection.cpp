#include "gittins_lab/selection.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <exception>
#include <mutex>
#include <thread>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool index_tie(double a, double b) {
  if (a == b) return true;
  if (std::isinf(a) || std::isinf(b)) return false;
  return nearly_equal(a, b);
}

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(int n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

McsInstance::McsInstance(std::vector<BoxMdpModel> arms, int k, std::optional<ForestConstraint> forest)
    : arms_(std::move(arms)), k_(k), forest_(std::move(forest)) {
  if (arms_.empty()) throw Error(ErrorCode::InvalidModel, "instance has no arms");
  for (const auto& a : arms_) {
    if (!a.validated()) throw Error(ErrorCode::UnvalidatedModel, "every arm must be validated");
    if (a.discount() != arms_.front().discount()) {
      throw Error(ErrorCode::InvalidModel, "all arms must share one discount factor");
    }
  }
  if (forest_) {
    if (forest_->edges.size() != arms_.size()) {
      throw Error(ErrorCode::InfeasibleConstraint, "forest mode needs exactly one edge per arm");
    }
    for (const auto& [u, v] : forest_->edges) {
      if (u < 0 || v < 0 || u >= forest_->vertices || v >= forest_->vertices || u == v) {
        throw Error(ErrorCode::InfeasibleConstraint, "edge endpoints must be distinct vertices of the graph");
      }
    }
  } else if (k_ < 1 || static_cast<std::size_t>(k_) > arms_.size()) {
    throw Error(ErrorCode::InvalidModel, "k must lie between 1 and the number of arms");
  }
}

McsInstance McsInstance::from_chains(const std::vector<MarkovChainModel>& chains, int k,
                                     std::optional<ForestConstraint> forest) {
  std::vector<BoxMdpModel> arms;
  arms.reserve(chains.size());
  for (const auto& c : chains) {
    if (!c.validated()) throw Error(ErrorCode::UnvalidatedModel, "every chain must be validated");
    arms.push_back(BoxMdpModel::from_chain(c));
  }
  return McsInstance(std::move(arms), k, std::move(forest));
}

bool McsInstance::is_chain_instance() const {
  for (const auto& a : arms_) {
    for (StateId s = 0; s < a.size(); ++s) {
      if (!a.is_terminal(s) && a.actions(s).size() != 1) return false;
    }
  }
  return true;
}

McsState initial_state(const McsInstance& inst) {
  McsState st;
  for (const auto& a : inst.arms()) st.states.push_back(a.initial());
  return st;
}

std::size_t finished_count(const McsInstance& inst, const McsState& state) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < inst.size(); ++i) n += inst.arm(i).is_terminal(state.states[i]);
  return n;
}

std::vector<std::size_t> eligible_arms(const McsInstance& inst, const McsState& state) {
  std::vector<std::size_t> out;
  if (!inst.forest()) {
    if (finished_count(inst, state) >= static_cast<std::size_t>(inst.k())) return out;
    for (std::size_t i = 0; i < inst.size(); ++i) {
      if (!inst.arm(i).is_terminal(state.states[i])) out.push_back(i);
    }
    return out;
  }
  const auto& f = *inst.forest();
  DisjointSets sets(f.vertices);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (inst.arm(i).is_terminal(state.states[i])) sets.unite(f.edges[i].first, f.edges[i].second);
  }
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (inst.arm(i).is_terminal(state.states[i])) continue;
    if (sets.find(f.edges[i].first) != sets.find(f.edges[i].second)) out.push_back(i);
  }
  return out;
}

bool is_terminal(const McsInstance& inst, const McsState& state) { return eligible_arms(inst, state).empty(); }

std::vector<GittinsTable> index_tables(const McsInstance& inst) {
  if (!inst.is_chain_instance()) {
    throw Error(ErrorCode::InvalidModel, "index tables need single-action arms");
  }
  std::vector<GittinsTable> out;
  for (std::size_t i = 0; i < inst.size(); ++i) out.push_back(index_all_states(inst.chain(i)));
  return out;
}

std::size_t gittins_action(const McsInstance& inst, const McsState& state, const std::vector<GittinsTable>& tables) {
  const auto elig = eligible_arms(inst, state);
  if (elig.empty()) throw Error(ErrorCode::NoEligibleAction, "no arm may be played in this state");
  std::size_t best = elig.front();
  for (std::size_t i : elig) {
    if (tables[i].at(state.states[i]) > tables[best].at(state.states[best])) best = i;
  }
  return best;
}

std::vector<std::size_t> index_argmax(const McsInstance& inst, const McsState& state,
                                      const std::vector<GittinsTable>& tables) {
  const auto elig = eligible_arms(inst, state);
  std::vector<std::size_t> out;
  if (elig.empty()) return out;
  const std::size_t best = gittins_action(inst, state, tables);
  const double top = tables[best].at(state.states[best]);
  for (std::size_t i : elig) {
    if (index_tie(tables[i].at(state.states[i]), top)) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-step lookahead

PandoraArm pandora_view(const MarkovChainModel& chain, StateId s) {
  auto deterministic_to_terminal = [&](StateId x) {
    const auto row = chain.row(x);
    return !chain.is_terminal(x) && row.size() == 1 && chain.is_terminal(row[0].next);
  };
  PandoraArm arm;
  if (deterministic_to_terminal(s)) {
    arm.open = true;
    arm.value = chain.reward(s);
    return arm;
  }
  if (chain.is_terminal(s) || chain.reward(s) >= 0.0) {
    throw Error(ErrorCode::NotPandoraShaped, "state '" + chain.label(s) + "' is neither a closed nor an open box");
  }
  std::vector<DiscreteDistribution::Atom> atoms;
  for (const auto& t : chain.row(s)) {
    if (!deterministic_to_terminal(t.next)) {
      throw Error(ErrorCode::NotPandoraShaped, "state '" + chain.label(s) + "' does not reveal a value in one step");
    }
    atoms.push_back({chain.reward(t.next), t.prob});
  }
  arm.cost = -chain.reward(s);
  arm.dist = DiscreteDistribution(atoms);
  return arm;
}

double expected_improvement(const PandoraArm& box, double baseline) {
  if (box.open || !box.dist) throw Error(ErrorCode::NotPandoraShaped, "expected improvement needs a closed box");
  if (baseline == kNegInf) return box.dist->mean() - box.cost;
  return box.dist->expected_excess(baseline) - box.cost;
}

LookaheadDecision lookahead_action(const McsInstance& inst, const McsState& state) {
  if (inst.k() != 1 || inst.forest() || !inst.is_chain_instance()) {
    throw Error(ErrorCode::NotPandoraShaped, "lookahead needs a plain single-finish chain instance");
  }
  double best_open = kNegInf;
  std::size_t best_open_arm = 0;
  bool any_open = false;
  std::vector<std::pair<std::size_t, PandoraArm>> closed;
  for (std::size_t i : eligible_arms(inst, state)) {
    auto view = pandora_view(inst.chain(i), state.states[i]);
    if (view.open) {
      if (!any_open || view.value > best_open) {
        best_open = view.value;
        best_open_arm = i;
      }
      any_open = true;
    } else {
      closed.emplace_back(i, std::move(view));
    }
  }
  if (closed.empty()) {
    if (!any_open) throw Error(ErrorCode::NoEligibleAction, "no arm may be played in this state");
    return {true, best_open_arm};
  }
  double best_ei = kNegInf;
  std::size_t best_arm = closed.front().first;
  for (const auto& [i, view] : closed) {
    const double ei = expected_improvement(view, best_open);
    if (ei > best_ei) {
      best_ei = ei;
      best_arm = i;
    }
  }
  if (any_open && best_ei < 0.0) return {true, best_open_arm};
  return {false, best_arm};
}

std::optional<PolicyKind> parse_policy(const std::string& name) {
  if (name == "gittins") return PolicyKind::gittins;
  if (name == "lookahead") return PolicyKind::lookahead;
  if (name == "random") return PolicyKind::random;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Simulation

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GITTINS_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(v));
  }
  return n;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned threads = std::min<std::size_t>(worker_threads(), std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

double run_once(const McsInstance& inst, PolicyKind policy, const std::vector<GittinsTable>& tables,
                std::vector<MarkovChainModel>& chains, Rng& chain_rng, Rng& policy_rng) {
  McsState state = initial_state(inst);
  double total = 0.0;
  double weight = 1.0;
  for (;;) {
    const auto elig = eligible_arms(inst, state);
    if (elig.empty()) break;
    std::size_t arm = 0;
    switch (policy) {
      case PolicyKind::gittins: arm = gittins_action(inst, state, tables); break;
      case PolicyKind::lookahead: arm = lookahead_action(inst, state).arm; break;
      case PolicyKind::random:
        arm = elig[std::uniform_int_distribution<std::size_t>(0, elig.size() - 1)(policy_rng)];
        break;
    }
    auto r = step(chains[arm], state.states[arm], chain_rng);
    total += weight * r.reward;
    weight *= inst.discount();
    state.states[arm] = r.next;
  }
  return total;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double std_error_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (v.size() - 1) / v.size());
}

}  // namespace

SimulationSummary simulate(const McsInstance& inst, PolicyKind policy, std::uint64_t seed, std::size_t reps) {
  if (!inst.is_chain_instance()) throw Error(ErrorCode::InvalidModel, "simulation needs single-action arms");
  if (reps == 0) throw Error(ErrorCode::InvalidModel, "at least one replication is required");
  std::vector<GittinsTable> tables;
  if (policy == PolicyKind::gittins) tables = index_tables(inst);
  std::vector<MarkovChainModel> chains;
  for (std::size_t i = 0; i < inst.size(); ++i) chains.push_back(inst.chain(i));
  if (policy == PolicyKind::lookahead) lookahead_action(inst, initial_state(inst));  // shape check up front

  SimulationSummary out;
  out.values.resize(reps);
  parallel_for(reps, [&](std::size_t r) {
    Rng chain_rng(derive_seed(seed, r));
    Rng policy_rng(derive_seed(~seed, r));
    auto local = chains;
    out.values[r] = run_once(inst, policy, tables, local, chain_rng, policy_rng);
  });
  out.mean = mean_of(out.values);
  out.std_error = std_error_of(out.values, out.mean);
  return out;
}

// ---------------------------------------------------------------------------
// Surrogate values

namespace {

void require_undiscounted(const MarkovChainModel& chain) {
  if (chain.discount() != 1.0) {
    throw Error(ErrorCode::DiscountedChainUnsupported, "surrogate values are defined for undiscounted chains");
  }
}

}  // namespace

SurrogateSample surrogate_sample(const MarkovChainModel& chain, StateId s, const GittinsTable& table, Rng& rng,
                                 std::size_t chain_id) {
  require_undiscounted(chain);
  if (chain.is_terminal(s)) throw Error(ErrorCode::SteppedTerminal, "surrogate value needs a non-terminal state");
  double low = table.at(s);
  StateId x = s;
  while (!chain.is_terminal(x)) {
    low = std::min(low, table.at(x));
    x = step(chain, x, rng).next;
  }
  return {chain_id, low};
}

DiscreteDistribution surrogate_distribution(const MarkovChainModel& chain, StateId s, const GittinsTable& table) {
  require_undiscounted(chain);
  if (chain.is_terminal(s)) throw Error(ErrorCode::SteppedTerminal, "surrogate value needs a non-terminal state");
  const std::size_t n = chain.size();
  const double top = table.at(s);

  // Distinct index levels not above G(s), merged when they tie.
  std::vector<double> levels;
  for (StateId x : chain.nonterminal_states()) {
    if (table.at(x) <= top || index_tie(table.at(x), top)) levels.push_back(std::min(table.at(x), top));
  }
  std::sort(levels.begin(), levels.end());
  std::vector<double> uniq;
  for (double g : levels) {
    if (uniq.empty() || !index_tie(uniq.back(), g)) uniq.push_back(g);
  }

  // F(level) = P(hit a state with index <= level before termination).
  std::vector<DiscreteDistribution::Atom> atoms;
  double prev = 0.0;
  for (std::size_t j = 0; j < uniq.size(); ++j) {
    const double level = uniq[j];
    auto hit = [&](StateId x) { return table.at(x) <= level || index_tie(table.at(x), level); };
    double f;
    if (hit(s)) {
      f = 1.0;
    } else {
      std::vector<long> pos(n, -1);
      std::vector<StateId> rest;
      for (StateId x : chain.nonterminal_states()) {
        if (!hit(x)) {
          pos[x] = static_cast<long>(rest.size());
          rest.push_back(x);
        }
      }
      const auto k = static_cast<Eigen::Index>(rest.size());
      Eigen::MatrixXd a = Eigen::MatrixXd::Identity(k, k);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < k; ++i) {
        for (const auto& t : chain.row(rest[i])) {
          if (chain.is_terminal(t.next)) continue;
          if (pos[t.next] >= 0) {
            a(i, pos[t.next]) -= t.prob;
          } else {
            b(i) += t.prob;
          }
        }
      }
      Eigen::VectorXd h = a.fullPivLu().solve(b);
      f = std::clamp(h(pos[s]), 0.0, 1.0);
    }
    const double mass = f - prev;
    if (mass > 1e-15) atoms.push_back({level, mass});
    prev = std::max(prev, f);
    if (f >= 1.0) break;
  }
  double total = 0.0;
  for (const auto& a : atoms) total += a.prob;
  for (auto& a : atoms) a.prob /= total;
  return DiscreteDistribution(atoms);
}

// ---------------------------------------------------------------------------
// Value formula

namespace {

// Best total over a realization: top-k sum, or maximum-weight spanning
// forest when constrained.
double best_selection(const McsInstance& inst, std::vector<double> gammas) {
  if (inst.forest()) {
    const auto& f = *inst.forest();
    std::vector<std::size_t> order(gammas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return gammas[a] > gammas[b]; });
    DisjointSets sets(f.vertices);
    double total = 0.0;
    for (std::size_t i : order) {
      if (sets.unite(f.edges[i].first, f.edges[i].second)) total += gammas[i];
    }
    return total;
  }
  std::sort(gammas.begin(), gammas.end(), std::greater<>());
  return std::accumulate(gammas.begin(), gammas.begin() + inst.k(), 0.0);
}

void require_formula_instance(const McsInstance& inst) {
  if (!inst.is_chain_instance()) throw Error(ErrorCode::InvalidModel, "the value formula needs single-action arms");
  if (inst.discount() != 1.0) {
    throw Error(ErrorCode::DiscountedChainUnsupported, "the value formula holds for undiscounted instances");
  }
  for (const auto& a : inst.arms()) {
    if (a.is_terminal(a.initial())) throw Error(ErrorCode::InvalidModel, "arms must start in non-terminal states");
  }
}

}  // namespace

FormulaValue value_formula_exact(const McsInstance& inst, std::size_t cap) {
  require_formula_instance(inst);
  const auto tables = index_tables(inst);
  std::vector<DiscreteDistribution> laws;
  double product = 1.0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    laws.push_back(surrogate_distribution(inst.chain(i), inst.arm(i).initial(), tables[i]));
    product *= static_cast<double>(laws.back().size());
  }
  if (product > static_cast<double>(cap)) {
    throw Error(ErrorCode::ExactModeTooLarge, "surrogate product support exceeds the cap; use Monte Carlo");
  }
  std::vector<std::size_t> digit(laws.size(), 0);
  std::vector<double> gammas(laws.size());
  double value = 0.0;
  for (;;) {
    double p = 1.0;
    for (std::size_t i = 0; i < laws.size(); ++i) {
      const auto& atom = laws[i].atoms()[digit[i]];
      gammas[i] = atom.value;
      p *= atom.prob;
    }
    value += p * best_selection(inst, gammas);
    std::size_t i = 0;
    while (i < laws.size() && ++digit[i] == laws[i].size()) digit[i++] = 0;
    if (i == laws.size()) break;
  }
  return {value, 0.0};
}

FormulaValue value_formula_monte_carlo(const McsInstance& inst, std::size_t reps, std::uint64_t seed) {
  require_formula_instance(inst);
  if (reps == 0) throw Error(ErrorCode::InvalidModel, "at least one replication is required");
  const auto tables = index_tables(inst);
  std::vector<MarkovChainModel> chains;
  for (std::size_t i = 0; i < inst.size(); ++i) chains.push_back(inst.chain(i));
  std::vector<double> values(reps);
  parallel_for(reps, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<double> gammas;
    for (std::size_t i = 0; i < chains.size(); ++i) {
      gammas.push_back(surrogate_sample(chains[i], chains[i].initial(), tables[i], rng, i).value);
    }
    values[r] = best_selection(inst, gammas);
  });
  const double m = mean_of(values);
  return {m, std_error_of(values, m)};
}

ForestRun greedy_forest(const McsInstance& inst, const std::vector<GittinsTable>& tables, Rng& rng) {
  if (!inst.forest()) throw Error(ErrorCode::InfeasibleConstraint, "instance has no forest constraint");
  if (!inst.is_chain_instance()) throw Error(ErrorCode::InvalidModel, "greedy forest needs single-action arms");
  std::vector<MarkovChainModel> chains;
  for (std::size_t i = 0; i < inst.size(); ++i) chains.push_back(inst.chain(i));
  McsState state = initial_state(inst);
  ForestRun run;
  double weight = 1.0;
  while (!is_terminal(inst, state)) {
    const std::size_t arm = gittins_action(inst, state, tables);
    auto r = step(chains[arm], state.states[arm], rng);
    run.value += weight * r.reward;
    weight *= inst.discount();
    state.states[arm] = r.next;
    if (chains[arm].is_terminal(r.next)) run.edges.push_back(arm);
  }
  return run;
}

}  // namespace gittins_lab
