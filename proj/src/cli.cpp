#include "gittins_lab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "CLI11.hpp"
#include "gittins_lab/bayesopt.hpp"
#include "gittins_lab/error.hpp"
#include "gittins_lab/instance_io.hpp"
#include "gittins_lab/local_mdp.hpp"
#include "gittins_lab/oracle.hpp"

namespace gittins_lab {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no infinities; unbounded indices are written as strings.
Json number_json(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

struct Output {
  std::ostream& out;
  std::string csv_path;

  // The CSV replaces the JSON on stdout when the path is "-".
  void emit(const Json& summary, const std::function<std::string()>& csv) const {
    if (csv_path == "-") {
      out << csv();
      return;
    }
    if (!csv_path.empty()) {
      std::ofstream f(csv_path, std::ios::binary);
      if (!f) throw Error(ErrorCode::ParseError, csv_path + ": cannot write file");
      f << csv();
    }
    out << summary.dump(2) << '\n';
  }
};

std::size_t pick_chain(const McsInstance& inst, long chain) {
  if (chain < 0 || static_cast<std::size_t>(chain) >= inst.size()) {
    throw Error(ErrorCode::ValidationError, "chain " + std::to_string(chain) + " out of range");
  }
  return static_cast<std::size_t>(chain);
}

StateId pick_state(const BoxMdpModel& arm, const std::string& label) {
  if (label.empty()) return arm.initial();
  const auto s = arm.find(label);
  if (!s) throw Error(ErrorCode::ValidationError, "unknown state '" + label + "'");
  return *s;
}

// --- gittins index ---------------------------------------------------------

struct IndexArgs {
  std::string instance;
  long chain = -1;
  std::string state;
  std::string method = "elimination";
  double tol = 1e-12;
};

Json index_chain(const BoxMdpModel& arm, const IndexArgs& a, std::size_t id) {
  Json entry{{"chain", id}};
  std::vector<StateId> states;
  if (!a.state.empty()) {
    states.push_back(pick_state(arm, a.state));
  } else {
    states = arm.nonterminal_states();
  }
  Json table = Json::object();
  const bool chain_like = std::all_of(states.begin(), states.end(), [&](StateId s) { return arm.actions(s).size() == 1; });
  if (!chain_like) {
    entry["method"] = "mdp_bisection";
    Json whittle = Json::object();
    Json action = Json::object();
    for (StateId s : states) {
      if (arm.is_terminal(s)) continue;
      const auto r = mdp_index_and_whittle(arm, s, a.tol);
      table[arm.label(s)] = number_json(r.index);
      whittle[arm.label(s)] = r.verdict.holds;
      action[arm.label(s)] = r.co_optimal_action;
    }
    entry["index"] = table;
    entry["whittle"] = whittle;
    entry["action"] = action;
    return entry;
  }
  const auto chain = arm.to_chain();
  if (a.method == "bisection") {
    entry["method"] = "bisection";
    for (StateId s : states) {
      if (!chain.is_terminal(s)) table[chain.label(s)] = number_json(index_bisection(chain, s, a.tol));
    }
  } else {
    const auto t = index_all_states(chain);
    Json methods = Json::object();
    for (StateId s : states) {
      if (chain.is_terminal(s)) continue;
      table[chain.label(s)] = number_json(t.at(s));
      methods[chain.label(s)] = to_string(t.method[s]);
    }
    entry["method"] = methods;
  }
  entry["index"] = table;
  return entry;
}

int cmd_index(const IndexArgs& a, const Output& o) {
  const auto inst = load_mcs_instance(a.instance);
  Json chains = Json::array();
  if (a.chain >= 0) {
    const auto i = pick_chain(inst, a.chain);
    chains.push_back(index_chain(inst.arm(i), a, i));
  } else {
    for (std::size_t i = 0; i < inst.size(); ++i) chains.push_back(index_chain(inst.arm(i), a, i));
  }
  o.emit({{"chains", chains}}, [&] {
    std::string csv = "chain,state,index\n";
    for (const auto& c : chains) {
      for (const auto& [label, v] : c["index"].items()) {
        csv += std::to_string(c["chain"].get<std::size_t>()) + "," + label + "," +
               (v.is_number() ? g17(v.get<double>()) : v.is_string() ? v.get<std::string>() : "nan") + "\n";
      }
    }
    return csv;
  });
  return kExitOk;
}

// --- mcs run ---------------------------------------------------------------

struct McsArgs {
  std::string instance;
  std::string policy = "gittins";
  std::size_t reps = 1000;
  std::uint64_t seed = 0;
};

int cmd_mcs(const McsArgs& a, const Output& o) {
  const auto inst = load_mcs_instance(a.instance);
  const auto kind = parse_policy(a.policy);
  if (!kind) throw Error(ErrorCode::ValidationError, "unknown policy '" + a.policy + "'");
  const auto sim = simulate(inst, *kind, a.seed, a.reps);
  Json summary{{"policy", a.policy}, {"reps", a.reps}, {"seed", a.seed}, {"mean", sim.mean}, {"std_error", sim.std_error}};
  o.emit(summary, [&] {
    std::string csv = "rep,value\n";
    for (std::size_t r = 0; r < sim.values.size(); ++r) csv += std::to_string(r) + "," + g17(sim.values[r]) + "\n";
    return csv;
  });
  return kExitOk;
}

// --- oracle solve ----------------------------------------------------------

struct OracleArgs {
  std::string instance;
  std::size_t cap = kProductCap;
};

int cmd_oracle(const OracleArgs& a, const Output& o) {
  const auto inst = load_mcs_instance(a.instance);
  const auto sol = exact_value(inst, a.cap);
  Json argmax = Json::array();
  if (!sol.argmax.empty()) {
    for (const auto& c : sol.argmax.front()) {
      const auto& arm = inst.arm(c.arm);
      argmax.push_back({{"arm", c.arm}, {"action", arm.actions(initial_state(inst).states[c.arm])[c.action].label}});
    }
  }
  Json summary{{"value", sol.value}, {"argmax", argmax}, {"product_states", sol.states.size()}};
  const double gittins = exact_policy_value(inst, mdp_gittins_policy(inst), a.cap);
  summary["gittins_policy_value"] = gittins;
  o.emit(summary, [&] {
    std::string csv = "policy,value\noptimal," + g17(sol.value) + "\ngittins," + g17(gittins) + "\n";
    return csv;
  });
  return kExitOk;
}

// --- queue sim -------------------------------------------------------------

struct QueueArgs {
  std::string model;
  std::string policy = "gittins";
  std::size_t slots = 0;
  std::uint64_t seed = 0;
  std::string tails;
  long warmup = -1;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorCode::ValidationError, "bad number '" + item + "' in list");
    out.push_back(v);
  }
  return out;
}

int cmd_queue(const QueueArgs& a, const Output& o) {
  auto model = load_queue_model(a.model);
  const auto policy = parse_queue_policy(a.policy);
  if (!policy) throw Error(ErrorCode::ValidationError, "unknown policy '" + a.policy + "'");
  if (a.slots > 0) {
    model.horizon = a.slots;
  }
  if (a.warmup >= 0) model.warmup = static_cast<std::size_t>(a.warmup);
  const auto tails = parse_list(a.tails);
  const auto run = simulate_queue(model, *policy, a.seed);
  const auto measured = run.measured();
  const auto m = metrics(measured, tails);
  Json tail_json = Json::array();
  for (const auto& t : m.tails) tail_json.push_back({{"t", t.threshold}, {"prob", t.prob}, {"ci_half_width", t.ci_half_width}});
  Json summary{{"policy", a.policy},
               {"slots", model.horizon},
               {"seed", a.seed},
               {"warmup", run.warmup},
               {"arrivals", run.arrivals},
               {"completed", measured.size()},
               {"load", model.arrival_prob * mean_service_time(model.job)},
               {"mean_latency", m.mean_latency},
               {"mean_ci_half_width", m.mean_ci_half_width},
               {"tails", tail_json}};
  o.emit(summary, [&] {
    std::string csv = "job,arrival,completion,latency,service\n";
    for (const auto& r : measured) {
      csv += std::to_string(r.job) + "," + std::to_string(r.arrival) + "," + std::to_string(r.completion) + "," +
             std::to_string(r.latency) + "," + std::to_string(r.service) + "\n";
    }
    return csv;
  });
  return kExitOk;
}

// --- bo run ----------------------------------------------------------------

struct BoArgs {
  std::string objective = "synthetic:sine";
  std::string cost = "uniform:0.05";
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  double lengthscale = 0.2;
  double output_scale = 1.0;
  int dim = 2;
};

CostFunction cost_from_spec(const std::string& spec) {
  if (spec.rfind("uniform:", 0) == 0) {
    const auto v = parse_list(spec.substr(8));
    if (v.size() != 1) throw Error(ErrorCode::ValidationError, "expected uniform:<cost>");
    return CostFunction::uniform(v[0]);
  }
  if (spec.rfind("file:", 0) == 0) {
    const std::string path = spec.substr(5);
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::exception&) {
      throw Error(ErrorCode::ParseError, path + ": invalid JSON");
    }
    if (j.contains("uniform") && j["uniform"].is_number()) return CostFunction::uniform(j["uniform"].get<double>());
    if (j.contains("quadratic") && j["quadratic"].is_object()) {
      const auto& q = j["quadratic"];
      if (!q.contains("base") || !q.contains("curvature") || !q.contains("center")) {
        throw Error(ErrorCode::ParseError, path + ": quadratic needs base, curvature and center");
      }
      const double base = q["base"].get<double>();
      const double curv = q["curvature"].get<double>();
      const auto c = q["center"].get<std::vector<double>>();
      const Vec center = Eigen::Map<const Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
      if (!(base > 0.0) || curv < 0.0) throw Error(ErrorCode::ValidationError, path + ": cost must stay positive");
      return {[=](const Vec& x) { return base + curv * (x - center).squaredNorm(); },
              [=](const Vec& x) { return Vec(2.0 * curv * (x - center)); }};
    }
    throw Error(ErrorCode::ParseError, path + ": expected {\"uniform\": c} or {\"quadratic\": {...}}");
  }
  throw Error(ErrorCode::ValidationError, "cost must be uniform:<c> or file:<path>");
}

int cmd_bo(const BoArgs& a, const Output& o) {
  const KernelParams prior{a.lengthscale, a.output_scale, 1e-10};
  const auto cost = cost_from_spec(a.cost);
  Rng rng(a.seed);
  Objective f;
  Domain domain;
  if (a.objective == "prior-sample") {
    if (a.dim < 1) throw Error(ErrorCode::ValidationError, "dimension must be positive");
    Rng frng(derive_seed(a.seed, 0));
    f = sample_prior_function(prior, a.dim, frng);
    domain = Domain::unit(a.dim);
  } else if (a.objective.rfind("synthetic:", 0) == 0) {
    try {
      auto s = synthetic_objective(a.objective.substr(10));
      f = s.f;
      domain = s.domain;
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, e.what());
    }
  } else {
    throw Error(ErrorCode::ValidationError, "objective must be synthetic:<name> or prior-sample");
  }
  const auto trace = run_bo_loop(f, prior, cost, domain, a.steps, rng);
  Json summary{{"objective", a.objective},
               {"evaluations", trace.evaluations()},
               {"stop_reason", to_string(trace.reason)},
               {"f_star", trace.steps.back().f_star},
               {"total_cost", trace.total_cost()},
               {"net_value", trace.net_value()}};
  if (trace.reason == StopReason::index_below_best) summary["final_g_max"] = trace.final_g_max;
  o.emit(summary, [&] {
    std::string csv = "t";
    for (int i = 0; i < domain.dim(); ++i) csv += ",x" + std::to_string(i);
    csv += ",f,c,G_max,f_star\n";
    for (const auto& s : trace.steps) {
      csv += std::to_string(s.t);
      for (int i = 0; i < domain.dim(); ++i) csv += "," + g17(s.x[i]);
      csv += "," + g17(s.f) + "," + g17(s.cost) + "," + (std::isnan(s.g_max) ? std::string("") : g17(s.g_max)) + "," +
             g17(s.f_star) + "\n";
    }
    return csv;
  });
  return kExitOk;
}

// --- profile ---------------------------------------------------------------

struct ProfileArgs {
  std::string instance;
  long chain = 0;
  std::string state;
};

int cmd_profile(const ProfileArgs& a, const Output& o) {
  const auto inst = load_mcs_instance(a.instance);
  const auto& arm = inst.arm(pick_chain(inst, a.chain));
  const StateId s = pick_state(arm, a.state);
  if (arm.is_terminal(s)) throw Error(ErrorCode::ValidationError, "state '" + arm.label(s) + "' is terminal");
  const auto p = value_profile(arm, s);
  Json summary{{"chain", a.chain},
               {"state", arm.label(s)},
               {"gittins_threshold", number_json(p.gittins_threshold)},
               {"breakpoints", p.breakpoints},
               {"slopes", p.slopes},
               {"values", p.values}};
  o.emit(summary, [&] { return profile_csv(p); });
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gittins index toolkit for Markov chain selection, queues and cost-aware optimization", "gittins-lab"};
  app.require_subcommand(1);
  std::string csv;
  std::function<int(const Output&)> action;

  auto add_csv = [&](CLI::App* sub) { sub->add_option("--csv", csv, "write the CSV to FILE ('-' for stdout)"); };

  IndexArgs ia;
  auto* gittins = app.add_subcommand("gittins", "index tables")->require_subcommand(1);
  auto* index = gittins->add_subcommand("index", "Gittins index of every state");
  index->add_option("--instance", ia.instance)->required();
  index->add_option("--chain", ia.chain, "only this chain");
  index->add_option("--state", ia.state, "only this state label");
  index->add_option("--method", ia.method)->check(CLI::IsMember({"elimination", "bisection"}));
  index->add_option("--tol", ia.tol, "bisection tolerance");
  add_csv(index);
  index->callback([&] { action = [&](const Output& o) { return cmd_index(ia, o); }; });

  McsArgs ma;
  auto* mcs = app.add_subcommand("mcs", "Markov chain selection")->require_subcommand(1);
  auto* mrun = mcs->add_subcommand("run", "simulate a policy");
  mrun->add_option("--instance", ma.instance)->required();
  mrun->add_option("--policy", ma.policy)->check(CLI::IsMember({"gittins", "lookahead", "random"}));
  mrun->add_option("--reps", ma.reps);
  mrun->add_option("--seed", ma.seed);
  add_csv(mrun);
  mrun->callback([&] { action = [&](const Output& o) { return cmd_mcs(ma, o); }; });

  OracleArgs oa;
  auto* oracle = app.add_subcommand("oracle", "exact dynamic programming")->require_subcommand(1);
  auto* solve = oracle->add_subcommand("solve", "optimal value over the product state space");
  solve->add_option("--instance", oa.instance)->required();
  solve->add_option("--cap", oa.cap, "largest product state count");
  add_csv(solve);
  solve->callback([&] { action = [&](const Output& o) { return cmd_oracle(oa, o); }; });

  QueueArgs qa;
  auto* queue = app.add_subcommand("queue", "slotted single-server queue")->require_subcommand(1);
  auto* sim = queue->add_subcommand("sim", "simulate a scheduling policy");
  sim->add_option("--model", qa.model)->required();
  sim->add_option("--policy", qa.policy)->check(CLI::IsMember({"gittins", "srpt", "fcfs", "random"}));
  sim->add_option("--slots", qa.slots, "override the model horizon");
  sim->add_option("--seed", qa.seed);
  sim->add_option("--tails", qa.tails, "comma-separated thresholds t for P[L > t]");
  sim->add_option("--warmup", qa.warmup, "override the warmup slot count");
  add_csv(sim);
  sim->callback([&] { action = [&](const Output& o) { return cmd_queue(qa, o); }; });

  BoArgs ba;
  auto* bo = app.add_subcommand("bo", "cost-aware Bayesian optimization")->require_subcommand(1);
  auto* brun = bo->add_subcommand("run", "run the index policy until it stops");
  brun->add_option("--objective", ba.objective, "synthetic:<sine|branin|bumps> or prior-sample");
  brun->add_option("--cost", ba.cost, "uniform:<c> or file:<path>");
  brun->add_option("--steps", ba.steps, "cap on paid evaluations");
  brun->add_option("--seed", ba.seed);
  brun->add_option("--lengthscale", ba.lengthscale);
  brun->add_option("--output-scale", ba.output_scale);
  brun->add_option("--dim", ba.dim, "dimension for prior-sample");
  add_csv(brun);
  brun->callback([&] { action = [&](const Output& o) { return cmd_bo(ba, o); }; });

  ProfileArgs pa;
  auto* profile = app.add_subcommand("profile", "local value envelope of one state");
  profile->add_option("--instance", pa.instance)->required();
  profile->add_option("--chain", pa.chain);
  profile->add_option("--state", pa.state, "state label (default: the chain's initial state)");
  add_csv(profile);
  profile->callback([&] { action = [&](const Output& o) { return cmd_profile(pa, o); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  if (!action) {
    err << app.help();
    return kExitUsage;
  }
  try {
    return action(Output{out, csv});
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? kExitNumerical : kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace gittins_lab
