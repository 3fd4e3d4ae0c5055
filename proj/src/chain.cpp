#include "gittins_lab/chain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <numeric>
#include <set>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

TransitionRow normalize_row(TransitionRow row, std::size_t num_states, const std::string& where) {
  double sum = 0.0;
  for (const auto& t : row) {
    if (t.next >= num_states) {
      throw Error(ErrorCode::InvalidModel, where + ": transition to unknown state " + std::to_string(t.next));
    }
    if (!(t.prob >= 0.0) || !std::isfinite(t.prob)) {
      throw Error(ErrorCode::NonStochasticRow, where + ": negative or non-finite probability");
    }
    sum += t.prob;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw Error(ErrorCode::NonStochasticRow, where + ": row sums to " + format_number(sum));
  }
  TransitionRow out;
  out.reserve(row.size());
  for (const auto& t : row) {
    if (t.prob > 0.0) out.push_back({t.next, t.prob / sum});
  }
  return out;
}

void check_discount(double discount) {
  if (discount > 1.0) {
    throw Error(ErrorCode::UnsupportedDiscount, "inflation (discount > 1) is not supported");
  }
  if (!(discount > 0.0)) {
    throw Error(ErrorCode::InvalidModel, "discount must lie in (0, 1]");
  }
}

// Successor lists ignoring self-loops; used for ordering.
std::optional<std::vector<StateId>> backward_order_of(const std::vector<bool>& terminal,
                                                      const std::vector<std::vector<StateId>>& succ) {
  const std::size_t n = terminal.size();
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> mark(n, 0);
  std::vector<StateId> order;
  order.reserve(n);
  for (StateId root = 0; root < n; ++root) {
    if (terminal[root] || mark[root] != 0) continue;
    std::vector<std::pair<StateId, std::size_t>> stack{{root, 0}};
    mark[root] = 1;
    while (!stack.empty()) {
      auto& [s, next_child] = stack.back();
      if (next_child < succ[s].size()) {
        StateId c = succ[s][next_child++];
        if (terminal[c] || c == s) continue;
        if (mark[c] == 1) return std::nullopt;
        if (mark[c] == 0) {
          mark[c] = 1;
          stack.emplace_back(c, 0);
        }
      } else {
        mark[s] = 2;
        order.push_back(s);
        stack.pop_back();
      }
    }
  }
  return order;
}

// States from which no policy can avoid staying among non-terminal states
// forever: the greatest set C such that every s in C has an action whose
// successors all lie in C.
std::vector<StateId> trapping_states(const std::vector<bool>& terminal,
                                     const std::vector<std::vector<TransitionRow>>& rows_per_action) {
  const std::size_t n = terminal.size();
  std::vector<bool> in_c(n);
  for (StateId s = 0; s < n; ++s) in_c[s] = !terminal[s];
  bool changed = true;
  while (changed) {
    changed = false;
    for (StateId s = 0; s < n; ++s) {
      if (!in_c[s]) continue;
      bool can_stay = false;
      for (const auto& row : rows_per_action[s]) {
        bool all_inside = std::all_of(row.begin(), row.end(), [&](const Transition& t) { return in_c[t.next]; });
        if (all_inside) {
          can_stay = true;
          break;
        }
      }
      if (!can_stay) {
        in_c[s] = false;
        changed = true;
      }
    }
  }
  std::vector<StateId> out;
  for (StateId s = 0; s < n; ++s) {
    if (in_c[s]) out.push_back(s);
  }
  return out;
}

// States that cannot reach a terminal state at all (single-action view).
std::vector<StateId> unreaching_states(const std::vector<bool>& terminal, const std::vector<TransitionRow>& rows) {
  const std::size_t n = terminal.size();
  std::vector<std::vector<StateId>> pred(n);
  for (StateId s = 0; s < n; ++s) {
    for (const auto& t : rows[s]) pred[t.next].push_back(s);
  }
  std::vector<bool> reach(n, false);
  std::deque<StateId> queue;
  for (StateId s = 0; s < n; ++s) {
    if (terminal[s]) {
      reach[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    StateId s = queue.front();
    queue.pop_front();
    for (StateId p : pred[s]) {
      if (!reach[p]) {
        reach[p] = true;
        queue.push_back(p);
      }
    }
  }
  std::vector<StateId> out;
  for (StateId s = 0; s < n; ++s) {
    if (!reach[s]) out.push_back(s);
  }
  return out;
}

std::string join_labels(const std::vector<StateId>& states, std::span<const std::string> labels) {
  std::string out;
  for (std::size_t i = 0; i < states.size() && i < 8; ++i) {
    if (i) out += ", ";
    out += labels[states[i]];
  }
  if (states.size() > 8) out += ", ...";
  return out;
}

void check_positive_cost(double cost) {
  if (!(cost > 0.0) || !std::isfinite(cost)) {
    throw Error(ErrorCode::NonPositiveCost, "cost must be a positive finite number, got " + format_number(cost));
  }
}

int integer_size(double v) {
  if (v != std::floor(v) || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidModel, "service times must be integers, got " + format_number(v));
  }
  if (v <= 0.0) throw Error(ErrorCode::ZeroSize, "service times must be positive");
  return static_cast<int>(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// DiscreteDistribution

DiscreteDistribution::DiscreteDistribution(std::vector<Atom> atoms) {
  if (atoms.empty()) throw Error(ErrorCode::EmptyDistribution, "distribution has no atoms");
  double sum = 0.0;
  for (const auto& a : atoms) {
    if (!(a.prob >= 0.0) || !std::isfinite(a.prob) || !std::isfinite(a.value)) {
      throw Error(ErrorCode::NonStochasticRow, "distribution has a negative or non-finite entry");
    }
    sum += a.prob;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    throw Error(ErrorCode::NonStochasticRow, "distribution sums to " + format_number(sum));
  }
  for (const auto& a : atoms) {
    if (a.prob <= 0.0) continue;
    auto it = std::find_if(atoms_.begin(), atoms_.end(), [&](const Atom& b) { return b.value == a.value; });
    if (it != atoms_.end()) {
      it->prob += a.prob / sum;
    } else {
      atoms_.push_back({a.value, a.prob / sum});
    }
  }
}

double DiscreteDistribution::mean() const noexcept {
  double m = 0.0;
  for (const auto& a : atoms_) m += a.prob * a.value;
  return m;
}

double DiscreteDistribution::min() const noexcept {
  return std::min_element(atoms_.begin(), atoms_.end(), [](auto& x, auto& y) { return x.value < y.value; })->value;
}

double DiscreteDistribution::max() const noexcept {
  return std::max_element(atoms_.begin(), atoms_.end(), [](auto& x, auto& y) { return x.value < y.value; })->value;
}

double DiscreteDistribution::expected_excess(double threshold) const noexcept {
  double e = 0.0;
  for (const auto& a : atoms_) e += a.prob * std::max(a.value - threshold, 0.0);
  return e;
}

double DiscreteDistribution::cdf(double x) const noexcept {
  double p = 0.0;
  for (const auto& a : atoms_) {
    if (a.value <= x) p += a.prob;
  }
  return p;
}

// ---------------------------------------------------------------------------
// MarkovChainModel

MarkovChainModel::MarkovChainModel(std::vector<std::string> labels, std::vector<bool> terminal,
                                   std::vector<TransitionRow> rows, std::vector<double> rewards, double discount,
                                   StateId initial)
    : labels_(std::move(labels)),
      terminal_(std::move(terminal)),
      rows_(std::move(rows)),
      rewards_(std::move(rewards)),
      discount_(discount),
      initial_(initial) {
  const std::size_t n = labels_.size();
  if (n == 0) throw Error(ErrorCode::InvalidModel, "chain has no states");
  if (terminal_.size() != n || rows_.size() != n || rewards_.size() != n) {
    throw Error(ErrorCode::InvalidModel, "state, terminal, row and reward counts differ");
  }
  if (initial_ >= n) throw Error(ErrorCode::InvalidModel, "initial state out of range");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw Error(ErrorCode::InvalidModel, "duplicate state label '" + l + "'");
  }
  check_discount(discount_);
  for (StateId s = 0; s < n; ++s) {
    if (terminal_[s]) {
      if (rewards_[s] != 0.0) {
        throw Error(ErrorCode::InvalidModel, "terminal state '" + labels_[s] + "' must have reward 0");
      }
      rows_[s].clear();
      continue;
    }
    if (!std::isfinite(rewards_[s])) {
      throw Error(ErrorCode::InvalidModel, "state '" + labels_[s] + "' has a non-finite reward");
    }
    rows_[s] = normalize_row(std::move(rows_[s]), n, "state '" + labels_[s] + "'");
  }
}

std::optional<StateId> MarkovChainModel::find(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<StateId>(it - labels_.begin());
}

std::vector<StateId> MarkovChainModel::terminal_states() const {
  std::vector<StateId> out;
  for (StateId s = 0; s < size(); ++s) {
    if (terminal_[s]) out.push_back(s);
  }
  return out;
}

std::vector<StateId> MarkovChainModel::nonterminal_states() const {
  std::vector<StateId> out;
  for (StateId s = 0; s < size(); ++s) {
    if (!terminal_[s]) out.push_back(s);
  }
  return out;
}

double MarkovChainModel::termination_probability(StateId s) const {
  double q = 0.0;
  for (const auto& t : rows_.at(s)) {
    if (terminal_[t.next]) q += t.prob;
  }
  return q;
}

MarkovChainModel MarkovChainModel::with_initial(StateId s) const {
  if (s >= size()) throw Error(ErrorCode::InvalidModel, "initial state out of range");
  MarkovChainModel copy = *this;
  copy.initial_ = s;
  return copy;
}

const ChainReport& MarkovChainModel::report() const {
  if (!report_) throw Error(ErrorCode::UnvalidatedModel, "chain has not been validated");
  return *report_;
}

MarkovChainModel validate_chain(MarkovChainModel model) {
  const std::size_t n = model.size();
  auto unreaching = unreaching_states(model.terminal_, model.rows_);
  ChainReport report;
  report.reaches_terminal = unreaching.empty();
  if (model.discount_ == 1.0) {
    if (!unreaching.empty()) {
      throw Error(ErrorCode::NoTerminationPath,
                  "states cannot reach a terminal state: " + join_labels(unreaching, model.labels_));
    }
    for (StateId s = 0; s < n; ++s) {
      if (model.terminal_[s]) continue;
      if (model.rewards_[s] >= 0.0 && model.termination_probability(s) == 0.0) report.free_states.push_back(s);
    }
    if (!report.free_states.empty()) {
      throw Error(ErrorCode::FreeStatePresent,
                  "free states (reward >= 0, no direct termination): " + join_labels(report.free_states, model.labels_));
    }
  }
  std::vector<std::vector<StateId>> succ(n);
  for (StateId s = 0; s < n; ++s) {
    for (const auto& t : model.rows_[s]) succ[s].push_back(t.next);
  }
  model.backward_order_ = backward_order_of(model.terminal_, succ);
  model.report_ = std::move(report);
  return model;
}

// ---------------------------------------------------------------------------
// BoxMdpModel

BoxMdpModel::BoxMdpModel(std::vector<std::string> labels, std::vector<bool> terminal,
                         std::vector<std::vector<MdpAction>> actions, double discount, StateId initial)
    : labels_(std::move(labels)),
      terminal_(std::move(terminal)),
      actions_(std::move(actions)),
      discount_(discount),
      initial_(initial) {
  const std::size_t n = labels_.size();
  if (n == 0) throw Error(ErrorCode::InvalidModel, "MDP has no states");
  if (terminal_.size() != n || actions_.size() != n) {
    throw Error(ErrorCode::InvalidModel, "state, terminal and action counts differ");
  }
  if (initial_ >= n) throw Error(ErrorCode::InvalidModel, "initial state out of range");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw Error(ErrorCode::InvalidModel, "duplicate state label '" + l + "'");
  }
  check_discount(discount_);
  for (StateId s = 0; s < n; ++s) {
    if (terminal_[s]) {
      actions_[s].clear();
      continue;
    }
    if (actions_[s].empty()) {
      throw Error(ErrorCode::InvalidModel, "state '" + labels_[s] + "' has no actions");
    }
    std::set<std::string> names;
    for (auto& a : actions_[s]) {
      if (a.label == "stop" || !names.insert(a.label).second) {
        throw Error(ErrorCode::InvalidModel, "state '" + labels_[s] + "' has a reserved or repeated action label");
      }
      if (!std::isfinite(a.reward)) throw Error(ErrorCode::InvalidModel, "non-finite action reward");
      a.row = normalize_row(std::move(a.row), n, "state '" + labels_[s] + "' action '" + a.label + "'");
    }
  }
}

BoxMdpModel BoxMdpModel::from_chain(const MarkovChainModel& chain, const std::string& action_label) {
  std::vector<std::vector<MdpAction>> actions(chain.size());
  std::vector<bool> terminal(chain.size());
  for (StateId s = 0; s < chain.size(); ++s) {
    terminal[s] = chain.is_terminal(s);
    if (!terminal[s]) {
      auto row = chain.row(s);
      actions[s].push_back({action_label, chain.reward(s), TransitionRow(row.begin(), row.end())});
    }
  }
  BoxMdpModel out(std::vector<std::string>(chain.labels().begin(), chain.labels().end()), std::move(terminal),
                  std::move(actions), chain.discount(), chain.initial());
  return chain.validated() ? validate_mdp(std::move(out)) : out;
}

MarkovChainModel BoxMdpModel::to_chain() const {
  std::vector<TransitionRow> rows(size());
  std::vector<double> rewards(size(), 0.0);
  for (StateId s = 0; s < size(); ++s) {
    if (terminal_[s]) continue;
    if (actions_[s].size() != 1) {
      throw Error(ErrorCode::InvalidModel, "state '" + labels_[s] + "' has more than one action");
    }
    rows[s] = actions_[s][0].row;
    rewards[s] = actions_[s][0].reward;
  }
  MarkovChainModel chain(labels_, terminal_, std::move(rows), std::move(rewards), discount_, initial_);
  return validated_ ? validate_chain(std::move(chain)) : chain;
}

BoxMdpModel BoxMdpModel::with_action(StateId s, MdpAction action) const {
  if (s >= size() || terminal_[s]) throw Error(ErrorCode::InvalidModel, "cannot add an action to this state");
  auto actions = actions_;
  actions[s].push_back(std::move(action));
  BoxMdpModel out(labels_, terminal_, std::move(actions), discount_, initial_);
  return validated_ ? validate_mdp(std::move(out)) : out;
}

std::optional<StateId> BoxMdpModel::find(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<StateId>(it - labels_.begin());
}

std::vector<StateId> BoxMdpModel::nonterminal_states() const {
  std::vector<StateId> out;
  for (StateId s = 0; s < size(); ++s) {
    if (!terminal_[s]) out.push_back(s);
  }
  return out;
}

BoxMdpModel BoxMdpModel::with_initial(StateId s) const {
  if (s >= size()) throw Error(ErrorCode::InvalidModel, "initial state out of range");
  BoxMdpModel copy = *this;
  copy.initial_ = s;
  return copy;
}

BoxMdpModel validate_mdp(BoxMdpModel model) {
  const std::size_t n = model.size();
  std::vector<std::vector<TransitionRow>> rows(n);
  std::vector<std::vector<StateId>> succ(n);
  for (StateId s = 0; s < n; ++s) {
    for (const auto& a : model.actions_[s]) {
      rows[s].push_back(a.row);
      for (const auto& t : a.row) succ[s].push_back(t.next);
    }
  }
  if (model.discount_ == 1.0) {
    auto trapped = trapping_states(model.terminal_, rows);
    if (!trapped.empty()) {
      throw Error(ErrorCode::NoTerminationPath,
                  "some policy never terminates from: " + join_labels(trapped, model.labels_));
    }
    std::vector<StateId> free;
    for (StateId s = 0; s < n; ++s) {
      for (const auto& a : model.actions_[s]) {
        double q = 0.0;
        for (const auto& t : a.row) {
          if (model.terminal_[t.next]) q += t.prob;
        }
        if (a.reward >= 0.0 && q == 0.0) {
          free.push_back(s);
          break;
        }
      }
    }
    if (!free.empty()) {
      throw Error(ErrorCode::FreeStatePresent, "free state-actions at: " + join_labels(free, model.labels_));
    }
  }
  model.backward_order_ = backward_order_of(model.terminal_, succ);
  model.validated_ = true;
  return model;
}

// ---------------------------------------------------------------------------
// Builders

MarkovChainModel build_pandora_box(double cost, const DiscreteDistribution& dist) {
  check_positive_cost(cost);
  const std::size_t k = dist.size();
  std::vector<std::string> labels{"closed"};
  std::vector<double> rewards{-cost};
  std::vector<TransitionRow> rows(k + 2);
  const StateId done = k + 1;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& atom = dist.atoms()[i];
    labels.push_back(format_number(atom.value));
    rewards.push_back(atom.value);
    rows[0].push_back({i + 1, atom.prob});
    rows[i + 1].push_back({done, 1.0});
  }
  labels.emplace_back("done");
  rewards.push_back(0.0);
  std::vector<bool> terminal(k + 2, false);
  terminal[done] = true;
  return validate_chain(MarkovChainModel(std::move(labels), std::move(terminal), std::move(rows), std::move(rewards)));
}

MarkovChainModel build_open_box(double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::InvalidModel, "open box value must be finite");
  return validate_chain(MarkovChainModel({format_number(value), "done"}, {false, true}, {{{1, 1.0}}, {}},
                                         {value, 0.0}));
}

BoxMdpModel build_optional_box(double cost, const DiscreteDistribution& dist) {
  auto chain = build_pandora_box(cost, dist);
  const StateId done = chain.size() - 1;
  std::vector<std::vector<MdpAction>> actions(chain.size());
  std::vector<bool> terminal(chain.size(), false);
  terminal[done] = true;
  auto closed_row = chain.row(0);
  actions[0].push_back({"open", -cost, TransitionRow(closed_row.begin(), closed_row.end())});
  actions[0].push_back({"take", dist.mean(), {{done, 1.0}}});
  for (StateId s = 1; s < done; ++s) actions[s].push_back({"take", chain.reward(s), {{done, 1.0}}});
  return validate_mdp(BoxMdpModel(std::vector<std::string>(chain.labels().begin(), chain.labels().end()),
                                  std::move(terminal), std::move(actions)));
}

MarkovChainModel build_two_stage_box(double stage1_cost, const std::map<std::string, double>& label_dist,
                                     const std::map<std::string, StageTwo>& per_label) {
  check_positive_cost(stage1_cost);
  std::vector<DiscreteDistribution::Atom> check;
  for (const auto& [name, p] : label_dist) check.push_back({static_cast<double>(check.size()), p});
  DiscreteDistribution label_probs(std::move(check));  // validates the label distribution

  std::vector<std::string> labels{"closed"};
  std::vector<double> rewards{-stage1_cost};
  std::vector<std::string> used_labels;
  for (const auto& [name, p] : label_dist) {
    if (p <= 0.0) continue;
    auto it = per_label.find(name);
    if (it == per_label.end()) throw Error(ErrorCode::InvalidModel, "no stage-two data for label '" + name + "'");
    check_positive_cost(it->second.cost);
    used_labels.push_back(name);
    labels.push_back("label:" + name);
    rewards.push_back(-it->second.cost);
  }
  std::vector<double> values;
  for (const auto& name : used_labels) {
    for (const auto& atom : per_label.at(name).dist.atoms()) {
      if (std::find(values.begin(), values.end(), atom.value) == values.end()) values.push_back(atom.value);
    }
  }
  const StateId first_value = labels.size();
  for (double v : values) {
    labels.push_back(format_number(v));
    rewards.push_back(v);
  }
  const StateId done = labels.size();
  labels.emplace_back("done");
  rewards.push_back(0.0);

  std::vector<TransitionRow> rows(labels.size());
  double total = 0.0;
  for (const auto& name : used_labels) total += label_dist.at(name);
  for (std::size_t i = 0; i < used_labels.size(); ++i) {
    const StateId label_state = 1 + i;
    rows[0].push_back({label_state, label_dist.at(used_labels[i]) / total});
    for (const auto& atom : per_label.at(used_labels[i]).dist.atoms()) {
      auto pos = std::find(values.begin(), values.end(), atom.value) - values.begin();
      rows[label_state].push_back({first_value + static_cast<StateId>(pos), atom.prob});
    }
  }
  for (StateId s = first_value; s < done; ++s) rows[s].push_back({done, 1.0});
  std::vector<bool> terminal(labels.size(), false);
  terminal[done] = true;
  return validate_chain(MarkovChainModel(std::move(labels), std::move(terminal), std::move(rows), std::move(rewards)));
}

BetaBanditChain build_beta_bandit_chain(double a0, double b0, int depth, double discount, BetaBoundary boundary) {
  if (discount >= 1.0) {
    throw Error(ErrorCode::UndiscountedBetaChain, "beta bandit chains need discount < 1; the chain never terminates");
  }
  if (!(discount > 0.0)) throw Error(ErrorCode::InvalidModel, "discount must lie in (0, 1)");
  if (!(a0 > 0.0) || !(b0 > 0.0)) throw Error(ErrorCode::InvalidModel, "beta parameters must be positive");
  if (depth < 1) throw Error(ErrorCode::InvalidModel, "depth must be at least 1");

  // State (a0 + i, b0 + j), i + j <= depth, numbered level by level.
  auto id = [](int i, int j) { return static_cast<StateId>((i + j) * (i + j + 1) / 2 + j); };
  const std::size_t lattice = static_cast<std::size_t>((depth + 1) * (depth + 2) / 2);
  const bool terminate = boundary == BetaBoundary::terminate;
  const std::size_t n = lattice + (terminate ? 1 : 0);
  std::vector<std::string> labels(n);
  std::vector<double> rewards(n, 0.0);
  std::vector<TransitionRow> rows(n);
  std::vector<bool> terminal(n, false);
  double max_reward = 0.0;
  for (int level = 0; level <= depth; ++level) {
    for (int j = 0; j <= level; ++j) {
      const int i = level - j;
      const double a = a0 + i;
      const double b = b0 + j;
      const StateId s = id(i, j);
      labels[s] = format_number(a) + "," + format_number(b);
      rewards[s] = a / (a + b);
      max_reward = std::max(max_reward, rewards[s]);
      if (level < depth) {
        rows[s] = {{id(i + 1, j), a / (a + b)}, {id(i, j + 1), b / (a + b)}};
      } else if (terminate) {
        rows[s] = {{lattice, 1.0}};
      } else {
        rows[s] = {{s, 1.0}};
      }
    }
  }
  if (terminate) {
    labels[lattice] = "done";
    terminal[lattice] = true;
  }
  MarkovChainModel chain(std::move(labels), std::move(terminal), std::move(rows), std::move(rewards), discount);
  const double bound = std::pow(discount, depth) * max_reward / (1.0 - discount);
  return {validate_chain(std::move(chain)), bound};
}

MarkovChainModel build_job_chain(const KnownSize& kind) {
  if (kind.size < 1) throw Error(ErrorCode::ZeroSize, "known job size must be at least 1");
  const auto n = static_cast<std::size_t>(kind.size) + 1;
  std::vector<std::string> labels(n);
  std::vector<double> rewards(n, -1.0);
  std::vector<TransitionRow> rows(n);
  std::vector<bool> terminal(n, false);
  // state i has remaining service size - i
  for (std::size_t i = 0; i + 1 < n; ++i) {
    labels[i] = std::to_string(kind.size - static_cast<int>(i));
    rows[i] = {{i + 1, 1.0}};
  }
  labels[n - 1] = "done";
  rewards[n - 1] = 0.0;
  terminal[n - 1] = true;
  return validate_chain(MarkovChainModel(std::move(labels), std::move(terminal), std::move(rows), std::move(rewards)));
}

namespace {

// Attained-service chain for one stage; appends states to the given vectors
// and wires completion to `on_complete`.
void append_stage(const DiscreteDistribution& dist, const std::string& prefix, StateId on_complete,
                  std::vector<std::string>& labels, std::vector<TransitionRow>& rows, std::vector<double>& rewards,
                  StateId first) {
  std::map<int, double> mass;
  int max_size = 0;
  for (const auto& atom : dist.atoms()) {
    int t = integer_size(atom.value);
    mass[t] += atom.prob;
    max_size = std::max(max_size, t);
  }
  for (int s = 0; s < max_size; ++s) {
    double at_least = 0.0;
    for (const auto& [t, p] : mass) {
      if (t >= s + 1) at_least += p;
    }
    const double hazard = mass.count(s + 1) ? std::min(1.0, mass[s + 1] / at_least) : 0.0;
    const StateId self = first + static_cast<StateId>(s);
    labels.push_back(prefix + std::to_string(s));
    rewards.push_back(-1.0);
    TransitionRow row;
    if (hazard > 0.0) row.push_back({on_complete, hazard});
    if (hazard < 1.0) row.push_back({self + 1, 1.0 - hazard});
    rows.push_back(std::move(row));
  }
}

std::size_t stage_length(const DiscreteDistribution& dist) {
  int max_size = 0;
  for (const auto& atom : dist.atoms()) max_size = std::max(max_size, integer_size(atom.value));
  return static_cast<std::size_t>(max_size);
}

}  // namespace

MarkovChainModel build_job_chain(const UnknownSize& kind) {
  return build_job_chain(StagedSize{{kind.size_dist}});
}

MarkovChainModel build_job_chain(const StagedSize& kind) {
  if (kind.stage_dists.empty()) throw Error(ErrorCode::EmptyDistribution, "staged job needs at least one stage");
  const bool single = kind.stage_dists.size() == 1;
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  for (const auto& d : kind.stage_dists) {
    starts.push_back(total);
    total += stage_length(d);
  }
  const StateId done = total;
  std::vector<std::string> labels;
  std::vector<TransitionRow> rows;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < kind.stage_dists.size(); ++i) {
    const StateId next = i + 1 < kind.stage_dists.size() ? starts[i + 1] : done;
    const std::string prefix = single ? "" : std::to_string(i + 1) + ":";
    append_stage(kind.stage_dists[i], prefix, next, labels, rows, rewards, starts[i]);
  }
  labels.emplace_back("done");
  rows.emplace_back();
  rewards.push_back(0.0);
  std::vector<bool> terminal(labels.size(), false);
  terminal[done] = true;
  return validate_chain(MarkovChainModel(std::move(labels), std::move(terminal), std::move(rows), std::move(rewards)));
}

MarkovChainModel build_job_chain(const GeometricSize& kind) {
  if (!(kind.q > 0.0) || kind.q > 1.0) throw Error(ErrorCode::InvalidModel, "geometric q must lie in (0, 1]");
  TransitionRow row{{1, kind.q}};
  if (kind.q < 1.0) row.push_back({0, 1.0 - kind.q});
  return validate_chain(MarkovChainModel({"in_service", "done"}, {false, true}, {row, {}}, {-1.0, 0.0}));
}

// ---------------------------------------------------------------------------

StateId sample_row(std::span<const Transition> row, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  for (const auto& t : row) {
    if (u < t.prob) return t.next;
    u -= t.prob;
  }
  return row.back().next;
}

StepResult step(const MarkovChainModel& model, StateId state, Rng& rng) {
  if (model.is_terminal(state)) {
    throw Error(ErrorCode::SteppedTerminal, "cannot step terminal state '" + model.label(state) + "'");
  }
  return {sample_row(model.row(state), rng), model.reward(state)};
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace gittins_lab
