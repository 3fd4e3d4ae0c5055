#include "gittins_lab/instance_io.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

// Runs a model constructor or builder, turning its rejections into
// ValidationError that names the arm.
template <class F>
auto validated(const std::string& where, F&& build) {
  try {
    return build();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::ValidationError) throw;
    throw Error(ErrorCode::ValidationError, where + ": " + e.what());
  }
}

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) parse_fail(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) parse_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) parse_fail(where, "expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) parse_fail(where, "expected an integer");
  return j.get<int>();
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) parse_fail(where, "expected a string");
  return j.get<std::string>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j.at(key), where + "." + key) : fallback;
}

DiscreteDistribution dist_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) parse_fail(where, "expected [[value, prob], ...]");
  std::vector<DiscreteDistribution::Atom> atoms;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) parse_fail(at, "expected [value, prob]");
    atoms.push_back({number(j[i][0], at), number(j[i][1], at)});
  }
  return validated(where, [&] { return DiscreteDistribution(std::move(atoms)); });
}

Json dist_to_json(const DiscreteDistribution& d) {
  Json out = Json::array();
  for (const auto& a : d.atoms()) out.push_back({a.value, a.prob});
  return out;
}

struct Skeleton {
  std::vector<std::string> labels;
  std::vector<bool> terminal;
  std::map<std::string, StateId> id;
  double discount = 1.0;
  StateId initial = 0;
};

Skeleton skeleton(const Json& j, const std::string& where) {
  Skeleton sk;
  const Json& states = field(j, "states", where);
  if (!states.is_array() || states.empty()) parse_fail(where + ".states", "expected a nonempty array");
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto label = text(states[i], where + ".states[" + std::to_string(i) + "]");
    if (!sk.id.emplace(label, i).second) parse_fail(where + ".states", "duplicate state '" + label + "'");
    sk.labels.push_back(label);
  }
  sk.terminal.assign(sk.labels.size(), false);
  if (j.contains("terminal")) {
    for (const auto& t : j.at("terminal")) {
      const auto label = text(t, where + ".terminal");
      auto it = sk.id.find(label);
      if (it == sk.id.end()) parse_fail(where + ".terminal", "unknown state '" + label + "'");
      sk.terminal[it->second] = true;
    }
  }
  sk.discount = number_or(j, "discount", 1.0, where);
  if (j.contains("initial")) {
    const auto label = text(j.at("initial"), where + ".initial");
    auto it = sk.id.find(label);
    if (it == sk.id.end()) parse_fail(where + ".initial", "unknown state '" + label + "'");
    sk.initial = it->second;
  }
  return sk;
}

TransitionRow row_from_json(const Json& j, const Skeleton& sk, const std::string& where) {
  if (!j.is_array()) parse_fail(where, "expected [[state, prob], ...]");
  TransitionRow row;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) parse_fail(at, "expected [state, prob]");
    const auto label = text(j[i][0], at);
    auto it = sk.id.find(label);
    if (it == sk.id.end()) parse_fail(at, "unknown state '" + label + "'");
    row.push_back({it->second, number(j[i][1], at)});
  }
  return row;
}

Json row_to_json(const TransitionRow& row, std::span<const std::string> labels) {
  Json out = Json::array();
  for (const auto& t : row) out.push_back({labels[t.next], t.prob});
  return out;
}

Json skeleton_to_json(std::span<const std::string> labels, const std::vector<StateId>& terminals, double discount,
                      StateId initial) {
  Json out;
  out["states"] = Json(std::vector<std::string>(labels.begin(), labels.end()));
  Json term = Json::array();
  for (StateId t : terminals) term.push_back(labels[t]);
  out["terminal"] = term;
  out["discount"] = discount;
  out["initial"] = labels[initial];
  return out;
}

JobKind job_from_json(const Json& j, const std::string& where, bool known_as_dist) {
  if (!j.is_object() || j.size() != 1) parse_fail(where, "expected one of known, unknown, staged, geometric");
  const std::string key = j.begin().key();
  const Json& v = j.begin().value();
  const std::string at = where + "." + key;
  if (key == "unknown") return UnknownSize{dist_from_json(v, at)};
  if (key == "geometric") return GeometricSize{number(v, at)};
  if (key == "staged") {
    if (!v.is_array()) parse_fail(at, "expected a list of distributions");
    StagedSize s;
    for (std::size_t i = 0; i < v.size(); ++i) s.stage_dists.push_back(dist_from_json(v[i], at + "[" + std::to_string(i) + "]"));
    return s;
  }
  if (key == "known" && known_as_dist) return KnownSizeDist{dist_from_json(v, at)};
  parse_fail(where, "unknown job kind '" + key + "'");
}

MarkovChainModel job_chain_from_json(const Json& j, const std::string& where) {
  if (j.is_object() && j.size() == 1 && j.contains("known")) {
    const int size = integer(j.at("known"), where + ".known");
    return validated(where, [&] { return build_job_chain(KnownSize{size}); });
  }
  const auto kind = job_from_json(j, where, false);
  return validated(where, [&] {
    if (const auto* u = std::get_if<UnknownSize>(&kind)) return build_job_chain(*u);
    if (const auto* s = std::get_if<StagedSize>(&kind)) return build_job_chain(*s);
    return build_job_chain(std::get<GeometricSize>(kind));
  });
}

MarkovChainModel chain_shorthand(const std::string& key, const Json& v, const std::string& where) {
  const std::string at = where + "." + key;
  if (key == "pandora") {
    const double cost = number(field(v, "cost", at), at + ".cost");
    auto dist = dist_from_json(field(v, "dist", at), at + ".dist");
    return validated(where, [&] { return build_pandora_box(cost, dist); });
  }
  if (key == "open") {
    const double value = number(v, at);
    return validated(where, [&] { return build_open_box(value); });
  }
  if (key == "two_stage") {
    const double cost = number(field(v, "cost", at), at + ".cost");
    std::map<std::string, double> labels;
    std::map<std::string, StageTwo> stage2;
    const Json& lab = field(v, "labels", at);
    if (!lab.is_object()) parse_fail(at + ".labels", "expected {label: prob}");
    for (const auto& [name, p] : lab.items()) labels[name] = number(p, at + ".labels." + name);
    const Json& st = field(v, "stage2", at);
    if (!st.is_object()) parse_fail(at + ".stage2", "expected {label: {cost, dist}}");
    for (const auto& [name, s] : st.items()) {
      const std::string sat = at + ".stage2." + name;
      stage2.emplace(name, StageTwo{number(field(s, "cost", sat), sat + ".cost"), dist_from_json(field(s, "dist", sat), sat + ".dist")});
    }
    return validated(where, [&] { return build_two_stage_box(cost, labels, stage2); });
  }
  if (key == "beta") {
    const double a = number(field(v, "a", at), at + ".a");
    const double b = number(field(v, "b", at), at + ".b");
    const int depth = integer(field(v, "depth", at), at + ".depth");
    const double discount = number(field(v, "discount", at), at + ".discount");
    BetaBoundary boundary = BetaBoundary::freeze;
    if (v.contains("boundary")) {
      const auto name = text(v.at("boundary"), at + ".boundary");
      if (name == "terminate") {
        boundary = BetaBoundary::terminate;
      } else if (name != "freeze") {
        parse_fail(at + ".boundary", "expected freeze or terminate");
      }
    }
    return validated(where, [&] { return build_beta_bandit_chain(a, b, depth, discount, boundary).chain; });
  }
  if (key == "job") return job_chain_from_json(v, at);
  parse_fail(where, "unknown shorthand '" + key + "'");
}

}  // namespace

MarkovChainModel chain_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) parse_fail(where, "expected an object");
  if (j.size() == 1 && !j.contains("states")) {
    return chain_shorthand(j.begin().key(), j.begin().value(), where);
  }
  if (j.contains("actions")) parse_fail(where, "MDP arm where a chain is required");
  const Skeleton sk = skeleton(j, where);
  const std::size_t n = sk.labels.size();
  std::vector<TransitionRow> rows(n);
  std::vector<double> rewards(n, 0.0);
  const Json& trans = field(j, "transitions", where);
  if (!trans.is_object()) parse_fail(where + ".transitions", "expected {state: row}");
  for (const auto& [label, row] : trans.items()) {
    auto it = sk.id.find(label);
    if (it == sk.id.end()) parse_fail(where + ".transitions", "unknown state '" + label + "'");
    rows[it->second] = row_from_json(row, sk, where + ".transitions." + label);
  }
  if (j.contains("rewards")) {
    const Json& rw = j.at("rewards");
    if (!rw.is_object()) parse_fail(where + ".rewards", "expected {state: reward}");
    for (const auto& [label, r] : rw.items()) {
      auto it = sk.id.find(label);
      if (it == sk.id.end()) parse_fail(where + ".rewards", "unknown state '" + label + "'");
      rewards[it->second] = number(r, where + ".rewards." + label);
    }
  }
  return validated(where, [&] {
    return validate_chain(MarkovChainModel(sk.labels, sk.terminal, std::move(rows), std::move(rewards), sk.discount,
                                           sk.initial));
  });
}

BoxMdpModel arm_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) parse_fail(where, "expected an object");
  if (j.size() == 1 && j.contains("optional_box")) {
    const Json& v = j.at("optional_box");
    const std::string at = where + ".optional_box";
    const double cost = number(field(v, "cost", at), at + ".cost");
    auto dist = dist_from_json(field(v, "dist", at), at + ".dist");
    return validated(where, [&] { return build_optional_box(cost, dist); });
  }
  if (!j.contains("actions")) return BoxMdpModel::from_chain(chain_from_json(j, where));
  const Skeleton sk = skeleton(j, where);
  std::vector<std::vector<MdpAction>> actions(sk.labels.size());
  const Json& acts = field(j, "actions", where);
  if (!acts.is_object()) parse_fail(where + ".actions", "expected {state: [action, ...]}");
  for (const auto& [label, list] : acts.items()) {
    auto it = sk.id.find(label);
    const std::string at = where + ".actions." + label;
    if (it == sk.id.end()) parse_fail(where + ".actions", "unknown state '" + label + "'");
    if (!list.is_array()) parse_fail(at, "expected a list of actions");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string aat = at + "[" + std::to_string(i) + "]";
      actions[it->second].push_back({text(field(list[i], "label", aat), aat + ".label"),
                                     number_or(list[i], "reward", 0.0, aat),
                                     row_from_json(field(list[i], "next", aat), sk, aat + ".next")});
    }
  }
  return validated(where, [&] {
    return validate_mdp(BoxMdpModel(sk.labels, sk.terminal, std::move(actions), sk.discount, sk.initial));
  });
}

Json to_json(const MarkovChainModel& chain) {
  Json out = skeleton_to_json(chain.labels(), chain.terminal_states(), chain.discount(), chain.initial());
  Json trans = Json::object();
  Json rewards = Json::object();
  for (StateId s : chain.nonterminal_states()) {
    trans[chain.label(s)] = row_to_json(TransitionRow(chain.row(s).begin(), chain.row(s).end()), chain.labels());
    rewards[chain.label(s)] = chain.reward(s);
  }
  out["transitions"] = trans;
  out["rewards"] = rewards;
  return out;
}

Json to_json(const BoxMdpModel& arm) {
  bool chain_like = true;
  std::vector<StateId> terminals;
  for (StateId s = 0; s < arm.size(); ++s) {
    if (arm.is_terminal(s)) {
      terminals.push_back(s);
      continue;
    }
    const auto acts = arm.actions(s);
    chain_like = chain_like && acts.size() == 1 && acts[0].label == "go";
  }
  if (chain_like) return to_json(arm.to_chain());
  Json out = skeleton_to_json(arm.labels(), terminals, arm.discount(), arm.initial());
  Json acts = Json::object();
  for (StateId s : arm.nonterminal_states()) {
    Json list = Json::array();
    for (const auto& a : arm.actions(s)) {
      list.push_back({{"label", a.label}, {"reward", a.reward}, {"next", row_to_json(a.row, arm.labels())}});
    }
    acts[arm.label(s)] = list;
  }
  out["actions"] = acts;
  return out;
}

Json to_json(const McsInstance& inst) {
  Json out;
  Json arms = Json::array();
  for (const auto& a : inst.arms()) arms.push_back(to_json(a));
  out["chains"] = arms;
  if (inst.forest()) {
    Json edges = Json::array();
    for (const auto& [u, v] : inst.forest()->edges) edges.push_back({u, v});
    out["mode"] = {{"forest", {{"vertices", inst.forest()->vertices}, {"edges", edges}}}};
  } else {
    out["mode"] = {{"k", inst.k()}};
  }
  return out;
}

McsInstance instance_from_json(const Json& j) {
  const Json& chains = field(j, "chains", "instance");
  if (!chains.is_array() || chains.empty()) parse_fail("instance.chains", "expected a nonempty array");
  std::vector<BoxMdpModel> arms;
  for (std::size_t i = 0; i < chains.size(); ++i) arms.push_back(arm_from_json(chains[i], "chains[" + std::to_string(i) + "]"));
  int k = 1;
  std::optional<ForestConstraint> forest;
  if (j.contains("mode")) {
    const Json& mode = j.at("mode");
    if (mode.is_object() && mode.contains("k")) {
      k = integer(mode.at("k"), "mode.k");
    } else if (mode.is_object() && mode.contains("forest")) {
      const Json& f = mode.at("forest");
      ForestConstraint fc;
      fc.vertices = integer(field(f, "vertices", "mode.forest"), "mode.forest.vertices");
      const Json& edges = field(f, "edges", "mode.forest");
      if (!edges.is_array()) parse_fail("mode.forest.edges", "expected [[u, v], ...]");
      for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string at = "mode.forest.edges[" + std::to_string(i) + "]";
        if (!edges[i].is_array() || edges[i].size() != 2) parse_fail(at, "expected [u, v]");
        fc.edges.emplace_back(integer(edges[i][0], at), integer(edges[i][1], at));
      }
      forest = std::move(fc);
    } else {
      parse_fail("mode", "expected {\"k\": n} or {\"forest\": {...}}");
    }
  }
  return validated("instance", [&] { return McsInstance(std::move(arms), k, std::move(forest)); });
}

Json to_json(const QueueModel& model) {
  Json job = std::visit(
      [](const auto& k) -> Json {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, KnownSizeDist>) {
          return {{"known", dist_to_json(k.size_dist)}};
        } else if constexpr (std::is_same_v<T, UnknownSize>) {
          return {{"unknown", dist_to_json(k.size_dist)}};
        } else if constexpr (std::is_same_v<T, StagedSize>) {
          Json stages = Json::array();
          for (const auto& d : k.stage_dists) stages.push_back(dist_to_json(d));
          return {{"staged", stages}};
        } else {
          return {{"geometric", k.q}};
        }
      },
      model.job);
  Json q{{"job", job},
         {"arrival_prob", model.arrival_prob},
         {"horizon", model.horizon},
         {"initial_jobs", model.initial_jobs},
         {"allow_unstable", model.allow_unstable}};
  if (model.warmup) q["warmup"] = *model.warmup;
  return {{"queue", q}};
}

QueueModel queue_from_json(const Json& j) {
  const Json& q = field(j, "queue", "model");
  const std::string where = "queue";
  QueueModel m{job_from_json(field(q, "job", where), where + ".job", true), 0.0, 0, std::nullopt, 0, false};
  m.arrival_prob = number(field(q, "arrival_prob", where), where + ".arrival_prob");
  auto count = [&](const char* key) {
    const Json& v = q.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      parse_fail(where + "." + key, "expected a nonnegative integer");
    }
    return v.get<std::size_t>();
  };
  m.horizon = q.contains("horizon") ? count("horizon") : 0;
  if (q.contains("warmup")) m.warmup = count("warmup");
  if (q.contains("initial_jobs")) m.initial_jobs = count("initial_jobs");
  if (q.contains("allow_unstable")) {
    if (!q.at("allow_unstable").is_boolean()) parse_fail(where + ".allow_unstable", "expected a boolean");
    m.allow_unstable = q.at("allow_unstable").get<bool>();
  }
  // build the job chain once so bad sizes surface at load time
  validated(where + ".job", [&] { return job_chain_spec(m.job); });
  return m;
}

LoadedInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string textual = buf.str();
  Json j;
  try {
    j = Json::parse(textual);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < textual.size(); ++i) {
      if (textual[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
  }
  try {
    if (j.is_object() && j.contains("queue")) return queue_from_json(j);
    return instance_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + std::string(e.what()).substr(std::string(to_string(e.code())).size() + 2));
  }
}

McsInstance load_mcs_instance(const std::string& path) {
  auto loaded = load_instance(path);
  if (auto* inst = std::get_if<McsInstance>(&loaded)) return std::move(*inst);
  throw Error(ErrorCode::ParseError, path + ": expected a selection instance with \"chains\"");
}

QueueModel load_queue_model(const std::string& path) {
  auto loaded = load_instance(path);
  if (auto* q = std::get_if<QueueModel>(&loaded)) return std::move(*q);
  throw Error(ErrorCode::ParseError, path + ": expected a queue model with \"queue\"");
}

}  // namespace gittins_lab
