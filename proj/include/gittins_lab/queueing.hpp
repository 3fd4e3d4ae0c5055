#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gittins_lab/chain.hpp"
#include "gittins_lab/gittins.hpp"

namespace gittins_lab {

/// Sizes drawn from a distribution and revealed on arrival.
struct KnownSizeDist {
  DiscreteDistribution size_dist;
};

using JobKind = std::variant<KnownSizeDist, UnknownSize, StagedSize, GeometricSize>;

struct QueueModel {
  JobKind job;
  /// Bernoulli arrival probability per slot.
  double arrival_prob = 0.0;
  std::size_t horizon = 0;
  /// Defaults to a tenth of the horizon.
  std::optional<std::size_t> warmup;
  /// Jobs present at slot 0 (arrival slot 0).
  std::size_t initial_jobs = 0;
  bool allow_unstable = false;
};

double mean_service_time(const JobKind& job);

enum class QueuePolicy { gittins, srpt, fcfs, random };

std::optional<QueuePolicy> parse_queue_policy(const std::string& name);
std::string_view to_string(QueuePolicy policy);

struct LatencyRecord {
  std::size_t job = 0;
  std::size_t arrival = 0;
  std::size_t completion = 0;
  std::size_t latency = 0;  // completion - arrival + 1
  std::size_t service = 0;
};

struct QueueRun {
  /// In completion order, including warmup arrivals.
  std::vector<LatencyRecord> records;
  std::size_t warmup = 0;
  /// Slots in which some job was served.
  std::size_t busy_slots = 0;
  std::size_t arrivals = 0;

  std::vector<LatencyRecord> measured() const;
};

/// Slot loop: arrival draw, then one unit of service to the chosen job.
/// Every job steps its chain with its own stream derived from (seed, job id),
/// so runs with equal seeds see the same jobs under every policy.
/// Ties go to the earliest arrival, then the lowest job id.
QueueRun simulate_queue(const QueueModel& model, QueuePolicy policy, std::uint64_t seed);

struct TailEstimate {
  double threshold = 0.0;
  double prob = 0.0;
  double ci_half_width = 0.0;
};

struct QueueMetrics {
  std::size_t count = 0;
  double mean_latency = 0.0;
  double mean_ci_half_width = 0.0;
  std::vector<TailEstimate> tails;

  const TailEstimate& tail(double threshold) const;
};

/// Sample mean and P[L > t] with 95% normal-approximation half-widths.
QueueMetrics metrics(const std::vector<LatencyRecord>& records, const std::vector<double>& thresholds);

/// 1 - P_policy[L > t] / P_fcfs[L > t].
double tail_improvement_ratio(double policy_tail, double fcfs_tail);
double tail_improvement_ratio(const QueueMetrics& policy, const QueueMetrics& fcfs, double threshold);

/// Job chain and index table used by the simulator. Known sizes share one
/// chain over the largest size; a size-s job starts s steps from the end.
struct JobChainSpec {
  MarkovChainModel chain;
  GittinsTable table;
  bool known_sizes = false;
};

JobChainSpec job_chain_spec(const JobKind& job);

}  // namespace gittins_lab
