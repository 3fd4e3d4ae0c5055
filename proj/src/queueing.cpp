#include "gittins_lab/queueing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int integer_size(double v) {
  const double r = std::round(v);
  if (r < 1.0 || std::abs(v - r) > 1e-9) {
    throw Error(ErrorCode::ZeroSize, "job sizes must be positive integers, got " + format_number(v));
  }
  return static_cast<int>(r);
}

struct Job {
  std::size_t id;
  std::size_t arrival;
  StateId state;
  std::size_t attained = 0;
  // remaining service; only meaningful for known sizes
  std::size_t remaining = 0;
  Rng rng;
};

}  // namespace

double mean_service_time(const JobKind& job) {
  return std::visit(Overloaded{
                        [](const KnownSizeDist& k) { return k.size_dist.mean(); },
                        [](const UnknownSize& k) { return k.size_dist.mean(); },
                        [](const StagedSize& k) {
                          double m = 0.0;
                          for (const auto& d : k.stage_dists) m += d.mean();
                          return m;
                        },
                        [](const GeometricSize& k) { return 1.0 / k.q; },
                    },
                    job);
}

std::optional<QueuePolicy> parse_queue_policy(const std::string& name) {
  if (name == "gittins") return QueuePolicy::gittins;
  if (name == "srpt") return QueuePolicy::srpt;
  if (name == "fcfs") return QueuePolicy::fcfs;
  if (name == "random") return QueuePolicy::random;
  return std::nullopt;
}

std::string_view to_string(QueuePolicy policy) {
  switch (policy) {
    case QueuePolicy::gittins: return "gittins";
    case QueuePolicy::srpt: return "srpt";
    case QueuePolicy::fcfs: return "fcfs";
    case QueuePolicy::random: return "random";
  }
  return "?";
}

JobChainSpec job_chain_spec(const JobKind& job) {
  JobChainSpec spec{std::visit(Overloaded{
                                   [](const KnownSizeDist& k) {
                                     int largest = 1;
                                     for (const auto& a : k.size_dist.atoms()) largest = std::max(largest, integer_size(a.value));
                                     return build_job_chain(KnownSize{largest});
                                   },
                                   [](const auto& k) { return build_job_chain(k); },
                               },
                               job),
                    {},
                    std::holds_alternative<KnownSizeDist>(job)};
  spec.table = index_all_states(spec.chain);
  return spec;
}

std::vector<LatencyRecord> QueueRun::measured() const {
  std::vector<LatencyRecord> out;
  for (const auto& r : records) {
    if (r.arrival >= warmup) out.push_back(r);
  }
  return out;
}

QueueRun simulate_queue(const QueueModel& model, QueuePolicy policy, std::uint64_t seed) {
  if (!(model.arrival_prob >= 0.0) || model.arrival_prob >= 1.0) {
    throw Error(ErrorCode::InvalidModel, "arrival probability must lie in [0, 1)");
  }
  const double load = model.arrival_prob * mean_service_time(model.job);
  if (load >= 1.0 && !model.allow_unstable) {
    throw Error(ErrorCode::UnstableModel, "load " + format_number(load) + " is not below 1");
  }
  const auto spec = job_chain_spec(model.job);
  if (policy == QueuePolicy::srpt && !spec.known_sizes) {
    throw Error(ErrorCode::SrptNeedsKnownSizes, "srpt needs job sizes known on arrival");
  }
  const StateId done_state = spec.chain.terminal_states().front();

  QueueRun run;
  run.warmup = model.warmup.value_or(model.horizon / 10);
  Rng arrivals(seed);
  Rng chooser(derive_seed(~seed, 0));
  std::bernoulli_distribution arrive(model.arrival_prob);
  std::vector<Job> present;

  auto admit = [&](std::size_t slot) {
    Job j{run.arrivals, slot, spec.chain.initial(), 0, 0, Rng(derive_seed(seed, run.arrivals))};
    if (const auto* k = std::get_if<KnownSizeDist>(&model.job)) {
      // the size is drawn from the job's own stream, before any service
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double u = unif(j.rng);
      int size = integer_size(k->size_dist.atoms().back().value);
      for (const auto& a : k->size_dist.atoms()) {
        if (u < a.prob) {
          size = integer_size(a.value);
          break;
        }
        u -= a.prob;
      }
      j.state = done_state - static_cast<StateId>(size);
      j.remaining = static_cast<std::size_t>(size);
    }
    present.push_back(std::move(j));
    ++run.arrivals;
  };

  // Jobs are kept in arrival order, so the first best candidate is also the
  // earliest arrival with the lowest id.
  auto choose = [&]() -> std::size_t {
    switch (policy) {
      case QueuePolicy::fcfs: return 0;
      case QueuePolicy::random: return std::uniform_int_distribution<std::size_t>(0, present.size() - 1)(chooser);
      case QueuePolicy::srpt: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < present.size(); ++i) {
          if (present[i].remaining < present[best].remaining) best = i;
        }
        return best;
      }
      case QueuePolicy::gittins: {
        std::size_t best = 0;
        double best_index = spec.table.at(present[0].state);
        for (std::size_t i = 1; i < present.size(); ++i) {
          const double g = spec.table.at(present[i].state);
          if (g > best_index && !nearly_equal(g, best_index)) {
            best = i;
            best_index = g;
          }
        }
        return best;
      }
    }
    return 0;
  };

  for (std::size_t i = 0; i < model.initial_jobs; ++i) admit(0);
  for (std::size_t t = 0; t < model.horizon; ++t) {
    if (model.arrival_prob > 0.0 && arrive(arrivals)) admit(t);
    if (present.empty()) continue;
    ++run.busy_slots;
    const std::size_t pick = choose();
    Job& j = present[pick];
    j.state = step(spec.chain, j.state, j.rng).next;
    ++j.attained;
    if (j.remaining > 0) --j.remaining;
    if (spec.chain.is_terminal(j.state)) {
      run.records.push_back({j.id, j.arrival, t, t - j.arrival + 1, j.attained});
      present.erase(present.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  return run;
}

const TailEstimate& QueueMetrics::tail(double threshold) const {
  for (const auto& e : tails) {
    if (e.threshold == threshold) return e;
  }
  throw Error(ErrorCode::InvalidModel, "no tail estimate at t = " + format_number(threshold));
}

QueueMetrics metrics(const std::vector<LatencyRecord>& records, const std::vector<double>& thresholds) {
  if (records.empty()) throw Error(ErrorCode::EmptyRecords, "no latency records to summarise");
  QueueMetrics m;
  m.count = records.size();
  const double n = static_cast<double>(m.count);
  double sum = 0.0;
  for (const auto& r : records) sum += static_cast<double>(r.latency);
  m.mean_latency = sum / n;
  double ss = 0.0;
  for (const auto& r : records) ss += std::pow(static_cast<double>(r.latency) - m.mean_latency, 2);
  const double sd = m.count > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  m.mean_ci_half_width = 1.96 * sd / std::sqrt(n);
  for (double t : thresholds) {
    const auto over = std::count_if(records.begin(), records.end(),
                                    [t](const LatencyRecord& r) { return static_cast<double>(r.latency) > t; });
    const double p = static_cast<double>(over) / n;
    m.tails.push_back({t, p, 1.96 * std::sqrt(p * (1.0 - p) / n)});
  }
  return m;
}

double tail_improvement_ratio(double policy_tail, double fcfs_tail) {
  if (!(fcfs_tail > 0.0)) {
    throw Error(ErrorCode::DegenerateBaseline, "baseline exceedance probability is zero");
  }
  return 1.0 - policy_tail / fcfs_tail;
}

double tail_improvement_ratio(const QueueMetrics& policy, const QueueMetrics& fcfs, double threshold) {
  return tail_improvement_ratio(policy.tail(threshold).prob, fcfs.tail(threshold).prob);
}

}  // namespace gittins_lab
