#include "gittins_lab/oracle.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

struct Edge {
  Choice choice;
  double reward;
  std::vector<std::pair<std::size_t, double>> next;
};

struct ProductGraph {
  std::vector<McsState> states;
  std::vector<char> terminal;
  std::vector<std::vector<Edge>> edges;
  // Successors before predecessors whenever the graph is acyclic.
  std::vector<std::size_t> postorder;
};

// Explores the product states reachable from the start. With a policy,
// only the policy's choice is expanded.
ProductGraph explore(const McsInstance& inst, const Policy* policy, std::size_t cap) {
  const std::size_t n = inst.size();
  std::vector<std::uint64_t> stride(n);
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < n; ++i) {
    stride[i] = total;
    const std::uint64_t m = inst.arm(i).size();
    if (total > std::numeric_limits<std::uint64_t>::max() / m) {
      throw Error(ErrorCode::ProductTooLarge, "product state space cannot be indexed");
    }
    total *= m;
  }
  auto key_of = [&](const McsState& s) {
    std::uint64_t k = 0;
    for (std::size_t i = 0; i < n; ++i) k += stride[i] * s.states[i];
    return k;
  };

  ProductGraph g;
  std::unordered_map<std::uint64_t, std::size_t> index;
  auto intern = [&](const McsState& s) {
    auto [it, fresh] = index.emplace(key_of(s), g.states.size());
    if (fresh) {
      if (g.states.size() >= cap) {
        throw Error(ErrorCode::ProductTooLarge,
                    "more than " + std::to_string(cap) + " reachable product states");
      }
      g.states.push_back(s);
      g.terminal.push_back(is_terminal(inst, s));
      g.edges.emplace_back();
    }
    return std::make_pair(it->second, fresh);
  };

  auto expand = [&](std::size_t u) {
    const McsState s = g.states[u];
    std::vector<Choice> choices;
    if (policy) {
      choices.push_back((*policy)(s));
    } else {
      for (std::size_t arm : eligible_arms(inst, s)) {
        for (std::size_t a = 0; a < inst.arm(arm).actions(s.states[arm]).size(); ++a) choices.push_back({arm, a});
      }
    }
    std::vector<Edge> out;
    for (const auto& c : choices) {
      const auto& action = inst.arm(c.arm).actions(s.states[c.arm])[c.action];
      Edge e{c, action.reward, {}};
      for (const auto& t : action.row) {
        McsState nxt = s;
        nxt.states[c.arm] = t.next;
        e.next.emplace_back(intern(nxt).first, t.prob);
      }
      out.push_back(std::move(e));
    }
    g.edges[u] = std::move(out);
  };

  // Iterative depth-first search recording post-order.
  intern(initial_state(inst));
  std::vector<char> state(1, 0);  // 0 new, 1 open, 2 closed
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // node, next successor slot
  std::vector<std::vector<std::size_t>> succ;
  auto open = [&](std::size_t u) {
    state.resize(g.states.size(), 0);
    state[u] = 1;
    if (!g.terminal[u]) expand(u);
    state.resize(g.states.size(), 0);
    succ.resize(g.states.size());
    for (const auto& e : g.edges[u]) {
      for (const auto& [v, p] : e.next) succ[u].push_back(v);
    }
    stack.emplace_back(u, 0);
  };
  open(0);
  while (!stack.empty()) {
    const std::size_t u = stack.back().first;
    if (stack.back().second < succ[u].size()) {
      const std::size_t v = succ[u][stack.back().second++];
      if (state[v] == 0) open(v);
    } else {
      state[u] = 2;
      g.postorder.push_back(u);
      stack.pop_back();
    }
  }
  return g;
}

double edge_value(const Edge& e, const std::vector<double>& v, double gamma) {
  double q = e.reward;
  for (const auto& [w, p] : e.next) q += gamma * p * v[w];
  return q;
}

// Gauss-Seidel sweeps in post-order; self-loops are solved in closed form.
std::vector<double> iterate(const ProductGraph& g, double gamma) {
  std::vector<double> v(g.states.size(), 0.0);
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double change = 0.0;
    for (std::size_t u : g.postorder) {
      if (g.terminal[u]) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& e : g.edges[u]) {
        double self = 0.0;
        double rest = e.reward;
        for (const auto& [w, p] : e.next) {
          if (w == u) {
            self += p;
          } else {
            rest += gamma * p * v[w];
          }
        }
        const double denom = 1.0 - gamma * self;
        if (denom > 0.0) best = std::max(best, rest / denom);
      }
      change = std::max(change, std::abs(best - v[u]) / (1.0 + std::abs(best)));
      v[u] = best;
    }
    if (change <= 1e-15 || (sweep > 0 && change <= 1e-14)) break;
  }
  return v;
}

}  // namespace

OracleSolution exact_value(const McsInstance& inst, std::size_t cap) {
  const auto g = explore(inst, nullptr, cap);
  const auto v = iterate(g, inst.discount());
  OracleSolution out;
  out.value = v[0];
  for (std::size_t u = 0; u < g.states.size(); ++u) {
    if (g.terminal[u]) continue;
    std::vector<Choice> best;
    for (const auto& e : g.edges[u]) {
      if (nearly_equal(edge_value(e, v, inst.discount()), v[u])) best.push_back(e.choice);
    }
    out.states.push_back(g.states[u]);
    out.values.push_back(v[u]);
    out.argmax.push_back(std::move(best));
  }
  return out;
}

double exact_policy_value(const McsInstance& inst, const Policy& policy, std::size_t cap) {
  const auto g = explore(inst, &policy, cap);
  return iterate(g, inst.discount())[0];
}

Policy gittins_policy(const McsInstance& inst, std::vector<GittinsTable> tables) {
  return [&inst, tables = std::move(tables)](const McsState& s) {
    return Choice{gittins_action(inst, s, tables), 0};
  };
}

Policy mdp_gittins_policy(const McsInstance& inst) {
  std::vector<std::vector<Choice>> best(inst.size());
  std::vector<std::vector<double>> index(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& arm = inst.arm(i);
    index[i].assign(arm.size(), std::numeric_limits<double>::quiet_NaN());
    best[i].assign(arm.size(), Choice{i, 0});
    for (StateId s : arm.nonterminal_states()) {
      const auto r = mdp_index_and_whittle(arm, s);
      index[i][s] = r.index;
      const auto acts = arm.actions(s);
      for (std::size_t a = 0; a < acts.size(); ++a) {
        if (acts[a].label == r.co_optimal_action) best[i][s].action = a;
      }
    }
  }
  return [&inst, best = std::move(best), index = std::move(index)](const McsState& st) {
    const auto elig = eligible_arms(inst, st);
    if (elig.empty()) throw Error(ErrorCode::NoEligibleAction, "no arm may be played in this state");
    std::size_t pick = elig.front();
    for (std::size_t i : elig) {
      if (index[i][st.states[i]] > index[pick][st.states[pick]]) pick = i;
    }
    return best[pick][st.states[pick]];
  };
}

Policy lookahead_policy(const McsInstance& inst) {
  return [&inst](const McsState& s) { return Choice{lookahead_action(inst, s).arm, 0}; };
}

}  // namespace gittins_lab
