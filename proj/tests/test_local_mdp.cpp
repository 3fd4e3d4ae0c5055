#include <cmath>

#include "doctest.h"
#include "gittins_lab/gittins.hpp"
#include "gittins_lab/local_mdp.hpp"
#include "random_models.hpp"

using namespace gittins_lab;

namespace {

const DiscreteDistribution kBox1({{14, 0.5}, {0, 0.5}});
const DiscreteDistribution kBox2({{18, 0.2}, {0, 0.8}});

std::vector<std::string> non_point_sets(const std::vector<ActionRegion>& regions) {
  std::vector<std::string> out;
  for (const auto& r : regions) {
    if (r.is_point()) continue;
    std::string joined;
    for (const auto& a : r.actions) joined += (joined.empty() ? "" : "+") + a;
    out.push_back(joined);
  }
  return out;
}

}  // namespace

TEST_CASE("local values of the closed boxes at alpha 10") {
  auto b1 = build_pandora_box(1, kBox1);
  auto r = solve_local(b1, 0, 10.0);
  CHECK(r.value == doctest::Approx(11.0).epsilon(1e-15));
  CHECK(r.go_value == doctest::Approx(11.0).epsilon(1e-15));
  CHECK(r.stop_prob_left == 0.5);
  CHECK(r.stop_prob_right == 0.5);
  CHECK(r.optimal_actions == std::vector<std::string>{"go"});

  CHECK(solve_local(build_pandora_box(1, kBox2), 0, 10.0).value == doctest::Approx(10.6).epsilon(1e-15));
}

TEST_CASE("dominant alternative stops") {
  auto r = solve_local(build_pandora_box(1, kBox1), 0, 1e6);
  CHECK(r.value == 1e6);
  CHECK(r.optimal_actions == std::vector<std::string>{"stop"});
  CHECK(r.stop_prob_left == 1.0);
}

TEST_CASE("kink reports both derivatives") {
  auto r = solve_local(build_pandora_box(1, kBox1), 0, 12.0);
  CHECK(r.stop_optimal());
  CHECK(r.optimal_actions.size() == 2);
  CHECK(r.stop_prob_left == 0.5);
  CHECK(r.stop_prob_right == 1.0);
}

TEST_CASE("envelope of the two example boxes") {
  auto p1 = value_profile(build_pandora_box(1, kBox1), 0);
  CHECK(p1.gittins_threshold == doctest::Approx(12.0).epsilon(1e-15));
  REQUIRE(p1.slopes.size() == 3);
  CHECK(p1.slopes[0] == 0.0);
  CHECK(p1.slopes[1] == 0.5);
  CHECK(p1.slopes[2] == 1.0);
  CHECK(p1.breakpoints[0] == doctest::Approx(0.0));

  auto p2 = value_profile(build_pandora_box(1, kBox2), 0);
  CHECK(p2.gittins_threshold == doctest::Approx(13.0).epsilon(1e-15));
  CHECK(p2.slopes[1] == doctest::Approx(0.8));
  CHECK(p2.evaluate(10.0) == doctest::Approx(10.6));
}

TEST_CASE("deterministic box envelope matches solve_local on a grid") {
  auto box = build_pandora_box(1.0, DiscreteDistribution::point_mass(5.0));
  auto p = value_profile(box, 0);
  CHECK(p.gittins_threshold == doctest::Approx(4.0));
  for (double a = -10; a <= 10; a += 0.25) {
    CHECK(p.evaluate(a) == doctest::Approx(std::max(a, 4.0)));
    CHECK(p.evaluate(a) == doctest::Approx(solve_local(box, 0, a).value));
  }
}

TEST_CASE("profile CSV") {
  auto csv = profile_csv(value_profile(build_pandora_box(1, kBox1), 0));
  CHECK(csv.rfind("alpha,value,slope\n", 0) == 0);
  CHECK(csv.find("12,12,1\n") != std::string::npos);
}

TEST_CASE("optional box action regions") {
  auto r1 = local_action_regions(build_optional_box(1, kBox1), 0);
  CHECK(non_point_sets(r1) == std::vector<std::string>{"take", "open", "stop"});
  std::vector<double> points;
  for (const auto& r : r1) {
    if (r.is_point()) points.push_back(r.lo);
  }
  REQUIRE(points.size() == 2);
  CHECK(points[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(points[1] == doctest::Approx(12.0).epsilon(1e-12));

  auto r2 = local_action_regions(build_optional_box(1, kBox2), 0);
  CHECK(non_point_sets(r2) == std::vector<std::string>{"take", "open", "stop"});
  CHECK(r2[1].lo == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("single-action regions meet at the index") {
  auto chain = build_pandora_box(2, kBox2);
  auto regions = local_action_regions(BoxMdpModel::from_chain(chain), 0);
  CHECK(non_point_sets(regions) == std::vector<std::string>{"go", "stop"});
  CHECK(regions[1].lo == doctest::Approx(pandora_index(2, kBox2)));
}

TEST_CASE("random chains: envelope agrees with solve_local and is convex") {
  Rng rng(20240601);
  for (int trial = 0; trial < 60; ++trial) {
    const double gamma = trial % 3 == 0 ? 0.9 : 1.0;
    auto chain = testgen::random_chain(rng, 8, gamma, trial % 2 == 0);
    const StateId s = chain.nonterminal_states()[testgen::uniform_int(rng, 0, static_cast<int>(chain.nonterminal_states().size()) - 1)];
    auto prof = value_profile(chain, s);
    for (std::size_t i = 1; i < prof.slopes.size(); ++i) CHECK(prof.slopes[i] >= prof.slopes[i - 1]);
    CHECK(prof.slopes.front() >= 0.0);
    CHECK(prof.slopes.back() == 1.0);
    for (int j = 0; j < 25; ++j) {
      const double a = testgen::uniform(rng, prof.breakpoints.front() - 5, prof.gittins_threshold + 5);
      auto r = solve_local(chain, s, a);
      CHECK(std::abs(r.value - prof.evaluate(a)) <= 1e-9 * (1 + std::abs(r.value)));
      CHECK(r.value >= a - 1e-12);
    }
    auto g = solve_local(chain, s, prof.gittins_threshold);
    CHECK(std::abs(g.go_value - prof.gittins_threshold) <= 1e-9 * (1 + std::abs(g.go_value)));
  }
}

TEST_CASE("stop probability is non-decreasing in alpha") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto chain = testgen::random_chain(rng, 6);
    double prev = 0.0;
    for (double a = -40; a <= 40; a += 0.5) {
      auto r = solve_local(chain, 0, a);
      CHECK(r.stop_prob_left >= prev - 1e-12);
      CHECK(r.stop_prob_right >= r.stop_prob_left - 1e-12);
      prev = r.stop_prob_right;
    }
  }
}

TEST_CASE("unvalidated models are refused") {
  BoxMdpModel raw({"a", "t"}, {false, true}, {{{"go", 1.0, {{1, 1.0}}}}, {}});
  CHECK_THROWS_AS(solve_local(raw, 0, 0.0), Error);
}
