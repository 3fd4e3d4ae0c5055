#include <cmath>

#include "doctest.h"
#include "gittins_lab/oracle.hpp"
#include "gittins_lab/selection.hpp"
#include "random_models.hpp"

using namespace gittins_lab;

namespace {

const DiscreteDistribution kBox1({{14, 0.5}, {0, 0.5}});
const DiscreteDistribution kBox2({{18, 0.2}, {0, 0.8}});

McsInstance two_box() {
  return McsInstance::from_chains({build_pandora_box(1, kBox1), build_pandora_box(1, kBox2), build_open_box(10)});
}

McsInstance deterministic_triangle(double a, double b, double c) {
  ForestConstraint tri{3, {{0, 1}, {1, 2}, {0, 2}}};
  return McsInstance::from_chains({build_pandora_box(1, DiscreteDistribution::point_mass(a + 1)),
                                   build_pandora_box(1, DiscreteDistribution::point_mass(b + 1)),
                                   build_pandora_box(1, DiscreteDistribution::point_mass(c + 1))},
                                  1, tri);
}

}  // namespace

TEST_CASE("index policy on the two-box example opens box 2") {
  auto inst = two_box();
  auto tables = index_tables(inst);
  auto s = initial_state(inst);
  CHECK(tables[0].at(0) == doctest::Approx(12));
  CHECK(tables[1].at(0) == doctest::Approx(13));
  CHECK(tables[2].at(0) == 10);
  CHECK(gittins_action(inst, s, tables) == 1);
}

TEST_CASE("ties go to the lowest arm") {
  auto inst = McsInstance::from_chains({build_open_box(3), build_open_box(3), build_open_box(3)});
  CHECK(gittins_action(inst, initial_state(inst), index_tables(inst)) == 0);
}

TEST_CASE("forest eligibility skips cycle-closing edges") {
  ForestConstraint tri{3, {{0, 1}, {1, 2}, {0, 2}}};
  auto inst = McsInstance::from_chains({build_open_box(5), build_open_box(3), build_open_box(9)}, 1, tri);
  auto tables = index_tables(inst);
  McsState s = initial_state(inst);
  s.states[0] = 1;  // edge (0,1) selected
  s.states[1] = 1;  // edge (1,2) selected
  CHECK(eligible_arms(inst, s).empty());
  CHECK(is_terminal(inst, s));
  McsState t = initial_state(inst);
  t.states[2] = 1;  // (0,2) selected first
  t.states[0] = 1;  // then (0,1); (1,2) now closes a cycle
  CHECK(eligible_arms(inst, t).empty());
  McsState u = initial_state(inst);
  u.states[2] = 1;
  CHECK(gittins_action(inst, u, tables) == 0);
  CHECK_THROWS_AS(gittins_action(inst, s, tables), Error);
}

TEST_CASE("lookahead on the two-box example") {
  auto inst = two_box();
  auto s = initial_state(inst);
  auto box1 = pandora_view(inst.chain(0), 0);
  auto box2 = pandora_view(inst.chain(1), 0);
  CHECK(expected_improvement(box1, 10) == doctest::Approx(1.0));
  CHECK(expected_improvement(box2, 10) == doctest::Approx(0.6));
  auto d = lookahead_action(inst, s);
  CHECK_FALSE(d.stop);
  CHECK(d.arm == 0);

  // Every EI negative: keep the open box.
  auto low = McsInstance::from_chains({build_pandora_box(5, kBox1), build_open_box(10)});
  auto stop = lookahead_action(low, initial_state(low));
  CHECK(stop.stop);
  CHECK(stop.arm == 1);

  // No open box: the largest mean net of cost.
  auto closed = McsInstance::from_chains({build_pandora_box(1, kBox1), build_pandora_box(1, kBox2)});
  CHECK(lookahead_action(closed, initial_state(closed)).arm == 0);

  auto jobs = McsInstance::from_chains({build_job_chain(KnownSize{3})});
  CHECK_THROWS_AS(lookahead_action(jobs, initial_state(jobs)), Error);
}

TEST_CASE("Monte Carlo values of the two-box policies") {
  auto inst = two_box();
  auto g = simulate(inst, PolicyKind::gittins, 1, 100000);
  CHECK(std::abs(g.mean - 11.4) <= 3 * g.std_error);
  auto l = simulate(inst, PolicyKind::lookahead, 1, 100000);
  CHECK(std::abs(l.mean - 11.3) <= 3 * l.std_error);
  auto again = simulate(inst, PolicyKind::gittins, 1, 1000);
  CHECK(std::equal(again.values.begin(), again.values.end(), g.values.begin()));

  auto det = McsInstance::from_chains({build_pandora_box(1, DiscreteDistribution::point_mass(6)), build_open_box(2)});
  auto d = simulate(det, PolicyKind::gittins, 9, 200);
  CHECK(d.std_error == 0.0);
  CHECK(d.mean == 5.0);
}

TEST_CASE("surrogate values") {
  auto c1 = build_pandora_box(1, kBox1);
  auto t1 = index_all_states(c1);
  auto law1 = surrogate_distribution(c1, 0, t1);
  REQUIRE(law1.size() == 2);
  CHECK(law1.cdf(0) == doctest::Approx(0.5));
  CHECK(law1.max() == doctest::Approx(12));

  auto c2 = build_pandora_box(1, kBox2);
  auto law2 = surrogate_distribution(c2, 0, index_all_states(c2));
  CHECK(law2.cdf(0) == doctest::Approx(0.8));
  CHECK(law2.max() == doctest::Approx(13));

  Rng rng(4);
  int twelve = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double g = surrogate_sample(c1, 0, t1, rng).value;
    CHECK((g == 0.0 || std::abs(g - 12) < 1e-12));
    twelve += g > 6;
  }
  CHECK(std::abs(twelve - n / 2) <= 3 * std::sqrt(n * 0.25));

  auto det = build_pandora_box(2, DiscreteDistribution::point_mass(7));
  CHECK(surrogate_sample(det, 0, index_all_states(det), rng).value == 5.0);
  auto job = build_job_chain(KnownSize{4});
  CHECK(surrogate_sample(job, 0, index_all_states(job), rng).value == doctest::Approx(-4.0));

  auto single = validate_chain(MarkovChainModel({"x", "t"}, {false, true}, {{{1, 1.0}}, {}}, {2.5, 0.0}));
  auto point = surrogate_distribution(single, 0, index_all_states(single));
  CHECK(point.size() == 1);
  CHECK(point.atoms()[0].value == 2.5);

  auto disc = build_beta_bandit_chain(1, 1, 2, 0.9).chain;
  CHECK_THROWS_AS(surrogate_sample(disc, 0, index_all_states(disc), rng), Error);
}

TEST_CASE("value formula") {
  CHECK(value_formula_exact(two_box()).value == doctest::Approx(11.4).epsilon(1e-14));
  auto two = McsInstance::from_chains(
      {build_pandora_box(1, DiscreteDistribution::point_mass(6)), build_pandora_box(2, DiscreteDistribution::point_mass(9))},
      2);
  CHECK(value_formula_exact(two).value == doctest::Approx(12.0));
  auto mc = value_formula_monte_carlo(two_box(), 100000, 3);
  CHECK(std::abs(mc.value - 11.4) <= 4 * mc.std_error);
  CHECK_THROWS_AS(value_formula_exact(two_box(), 2), Error);
}

TEST_CASE("greedy forest on deterministic weights") {
  auto inst = deterministic_triangle(5, 3, 1);
  Rng rng(1);
  auto run = greedy_forest(inst, index_tables(inst), rng);
  CHECK(run.edges == std::vector<std::size_t>{0, 1});
  CHECK(run.value == 8.0);

  auto single = McsInstance::from_chains({build_pandora_box(1, kBox1)}, 1, ForestConstraint{2, {{0, 1}}});
  auto plain = McsInstance::from_chains({build_pandora_box(1, kBox1)});
  CHECK(exact_value(single).value == doctest::Approx(exact_value(plain).value));
  CHECK_THROWS_AS(greedy_forest(plain, index_tables(plain), rng), Error);
}
