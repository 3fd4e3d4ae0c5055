#include <cmath>

#include "doctest.h"
#include "gittins_lab/error.hpp"
#include "gittins_lab/queueing.hpp"

using namespace gittins_lab;

namespace {

DiscreteDistribution uniform_sizes(int lo, int hi) {
  std::vector<DiscreteDistribution::Atom> atoms;
  for (int s = lo; s <= hi; ++s) atoms.push_back({static_cast<double>(s), 1.0 / (hi - lo + 1)});
  return DiscreteDistribution(atoms);
}

std::vector<LatencyRecord> with_latencies(const std::vector<std::size_t>& latencies) {
  std::vector<LatencyRecord> out;
  for (std::size_t i = 0; i < latencies.size(); ++i) out.push_back({i, 0, latencies[i] - 1, latencies[i], 1});
  return out;
}

std::vector<std::size_t> completion_ids(const QueueRun& run) {
  std::vector<std::size_t> ids;
  for (const auto& r : run.records) ids.push_back(r.job);
  return ids;
}

}  // namespace

TEST_CASE("an almost empty system serves every job alone") {
  QueueModel m{UnknownSize{DiscreteDistribution({{1, 0.5}, {4, 0.5}})}, 0.002, 200000};
  for (auto policy : {QueuePolicy::gittins, QueuePolicy::fcfs, QueuePolicy::random}) {
    auto run = simulate_queue(m, policy, 5);
    REQUIRE(run.records.size() > 100);
    std::size_t alone = 0;
    for (const auto& r : run.records) {
      CHECK(r.latency >= r.service);
      CHECK(r.latency == r.completion - r.arrival + 1);
      alone += r.latency == r.service;
    }
    // a collision needs two arrivals within four slots
    CHECK(alone >= run.records.size() - 5);
  }
  QueueModel lone{KnownSizeDist{uniform_sizes(1, 3)}, 0.0, 50, 0, 1};
  auto run = simulate_queue(lone, QueuePolicy::srpt, 2);
  REQUIRE(run.records.size() == 1);
  CHECK(run.records[0].latency == run.records[0].service);
}

TEST_CASE("known-size batch: gittins completes jobs in srpt order") {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    QueueModel m{KnownSizeDist{uniform_sizes(1, 6)}, 0.0, 400, 0, 12};
    auto g = simulate_queue(m, QueuePolicy::gittins, seed);
    auto s = simulate_queue(m, QueuePolicy::srpt, seed);
    REQUIRE(g.records.size() == 12);
    CHECK(completion_ids(g) == completion_ids(s));
    // srpt finishes sizes in nondecreasing order
    for (std::size_t i = 1; i < s.records.size(); ++i) CHECK(s.records[i - 1].service <= s.records[i].service);
  }
}

TEST_CASE("geometric service: constant index, so gittins is fcfs") {
  const double q = 0.3;
  auto spec = job_chain_spec(GeometricSize{q});
  CHECK(spec.table.at(0) == doctest::Approx(-1 / q).epsilon(1e-9));
  QueueModel m{GeometricSize{q}, 0.2, 20000};
  auto g = simulate_queue(m, QueuePolicy::gittins, 11);
  auto f = simulate_queue(m, QueuePolicy::fcfs, 11);
  CHECK(completion_ids(g) == completion_ids(f));
  for (std::size_t i = 0; i < g.records.size(); ++i) CHECK(g.records[i].completion == f.records[i].completion);
}

TEST_CASE("work conservation across policies") {
  QueueModel m{KnownSizeDist{uniform_sizes(1, 8)}, 0.18, 30000};
  const auto base = simulate_queue(m, QueuePolicy::fcfs, 4);
  for (auto policy : {QueuePolicy::gittins, QueuePolicy::srpt, QueuePolicy::random}) {
    auto run = simulate_queue(m, policy, 4);
    CHECK(run.busy_slots == base.busy_slots);
    CHECK(run.arrivals == base.arrivals);
  }
  // every busy slot is one unit of service; the backlog at the horizon holds the rest
  std::size_t done = 0;
  for (const auto& r : base.records) done += r.service;
  CHECK(done <= base.busy_slots);
}

TEST_CASE("runs are reproducible from the seed") {
  QueueModel m{UnknownSize{uniform_sizes(1, 5)}, 0.25, 5000};
  auto a = simulate_queue(m, QueuePolicy::random, 9);
  auto b = simulate_queue(m, QueuePolicy::random, 9);
  CHECK(completion_ids(a) == completion_ids(b));
  CHECK(a.warmup == 500);
  for (const auto& r : a.measured()) CHECK(r.arrival >= 500);
}

TEST_CASE("gittins beats fcfs and random on mean latency at load 0.8") {
  QueueModel m{UnknownSize{DiscreteDistribution({{1, 0.9}, {21, 0.1}})}, 0.8 / 3.0, 50000};
  CHECK(mean_service_time(m.job) == doctest::Approx(3.0));
  auto g = metrics(simulate_queue(m, QueuePolicy::gittins, 21).measured(), {});
  auto f = metrics(simulate_queue(m, QueuePolicy::fcfs, 21).measured(), {});
  auto r = metrics(simulate_queue(m, QueuePolicy::random, 21).measured(), {});
  CHECK(g.mean_latency < f.mean_latency);
  CHECK(g.mean_latency < r.mean_latency);
}

TEST_CASE("metrics count strict exceedances") {
  auto five = with_latencies({5, 5, 5});
  auto m = metrics(five, {4, 5});
  CHECK(m.mean_latency == 5.0);
  CHECK(m.mean_ci_half_width == 0.0);
  CHECK(m.tail(4).prob == 1.0);
  CHECK(m.tail(5).prob == 0.0);

  const std::vector<std::size_t> mixed{1, 2, 2, 3, 7, 9, 10, 15};
  auto mm = metrics(with_latencies(mixed), {2, 8, 20});
  double sum = 0;
  for (auto v : mixed) sum += static_cast<double>(v);
  CHECK(mm.mean_latency == doctest::Approx(sum / 8));
  CHECK(mm.tail(2).prob == 5.0 / 8);
  CHECK(mm.tail(8).prob == 3.0 / 8);
  CHECK(mm.tail(20).prob == 0.0);
  CHECK(mm.tail(8).ci_half_width == doctest::Approx(1.96 * std::sqrt(3.0 / 8 * 5.0 / 8 / 8)));
  CHECK_THROWS_AS(mm.tail(3), Error);
  CHECK_THROWS_AS(metrics({}, {1}), Error);
}

TEST_CASE("tail improvement ratio") {
  CHECK(tail_improvement_ratio(0.01, 0.02) == doctest::Approx(0.5));
  CHECK(tail_improvement_ratio(0.3, 0.3) == 0.0);
  try {
    tail_improvement_ratio(0.1, 0.0);
    FAIL("expected DegenerateBaseline");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateBaseline);
  }
}

TEST_CASE("srpt against fcfs: better early, worse far out") {
  QueueModel m{KnownSizeDist{uniform_sizes(1, 10)}, 0.95 / 5.5, 200000};
  const std::vector<double> ts{10, 300};
  auto s = metrics(simulate_queue(m, QueuePolicy::srpt, 1).measured(), ts);
  auto f = metrics(simulate_queue(m, QueuePolicy::fcfs, 1).measured(), ts);
  CHECK(tail_improvement_ratio(s, f, 10) > 0.0);
  CHECK(tail_improvement_ratio(s, f, 300) < 0.0);
}

TEST_CASE("rejected models") {
  QueueModel heavy{UnknownSize{uniform_sizes(1, 5)}, 0.4, 100};
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ParseError;
  };
  CHECK(code_of([&] { simulate_queue(heavy, QueuePolicy::fcfs, 1); }) == ErrorCode::UnstableModel);
  heavy.allow_unstable = true;
  CHECK_NOTHROW(simulate_queue(heavy, QueuePolicy::fcfs, 1));
  QueueModel unknown{UnknownSize{uniform_sizes(1, 5)}, 0.1, 100};
  CHECK(code_of([&] { simulate_queue(unknown, QueuePolicy::srpt, 1); }) == ErrorCode::SrptNeedsKnownSizes);
  QueueModel fractional{KnownSizeDist{DiscreteDistribution({{1.5, 1.0}})}, 0.1, 100};
  CHECK(code_of([&] { simulate_queue(fractional, QueuePolicy::fcfs, 1); }) == ErrorCode::ZeroSize);
}
