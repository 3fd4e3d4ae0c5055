#include <cmath>

#include "doctest.h"
#include "gittins_lab/gittins.hpp"
#include "random_models.hpp"

using namespace gittins_lab;

namespace {

const DiscreteDistribution kBox1({{14, 0.5}, {0, 0.5}});
const DiscreteDistribution kBox2({{18, 0.2}, {0, 0.8}});

DiscreteDistribution geometric_truncated(double q, int cap) {
  std::vector<DiscreteDistribution::Atom> atoms;
  for (int t = 1; t < cap; ++t) atoms.push_back({double(t), std::pow(1 - q, t - 1) * q});
  atoms.push_back({double(cap), std::pow(1 - q, cap - 1)});
  return DiscreteDistribution(atoms);
}

}  // namespace

TEST_CASE("pandora index closed form") {
  CHECK(pandora_index(1, kBox1) == 12.0);
  CHECK(pandora_index(1, kBox2) == doctest::Approx(13.0).epsilon(1e-15));
  CHECK(pandora_index(2.5, DiscreteDistribution::point_mass(7)) == 4.5);
  // root on a lower piece: E[max(v-g,0)] = 4 with v in {10, 2} each half
  CHECK(pandora_index(4, DiscreteDistribution({{10, 0.5}, {2, 0.5}})) == doctest::Approx(2.0));
  CHECK_THROWS_AS(pandora_index(0, kBox1), Error);
}

TEST_CASE("pandora index monotone in cost and shift-equivariant") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    auto d = testgen::random_dist(rng, 5);
    const double c = testgen::uniform(rng, 0.1, 3);
    CHECK(pandora_index(c * 1.1, d) < pandora_index(c, d));
    std::vector<DiscreteDistribution::Atom> shifted;
    for (auto a : d.atoms()) shifted.push_back({a.value + 3.25, a.prob});
    CHECK(pandora_index(c, DiscreteDistribution(shifted)) == doctest::Approx(pandora_index(c, d) + 3.25));
  }
}

TEST_CASE("bisection reproduces the closed form") {
  CHECK(std::abs(index_bisection(build_pandora_box(1, kBox1), 0, 1e-9) - 12.0) <= 1e-9);
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    auto d = testgen::random_dist(rng, 6);
    const double c = testgen::uniform(rng, 0.05, 4);
    CHECK(std::abs(index_bisection(build_pandora_box(c, d), 0) - pandora_index(c, d)) <= 1e-7);
  }
}

TEST_CASE("known-size jobs have index minus remaining size") {
  auto job = build_job_chain(KnownSize{6});
  for (StateId s : job.nonterminal_states()) {
    const double remaining = std::stod(job.label(s));
    CHECK(std::abs(index_bisection(job, s, 1e-9) + remaining) <= 1e-9);
    CHECK(index_all_states(job).at(s) == doctest::Approx(-remaining));
  }
}

TEST_CASE("whole-chain tables") {
  auto box = build_pandora_box(1, kBox1);
  auto table = index_all_states(box);
  CHECK(table.at(0) == doctest::Approx(12.0).epsilon(1e-14));
  CHECK(table.at(*box.find("14")) == 14.0);
  CHECK(table.at(*box.find("0")) == 0.0);
  CHECK(std::isnan(table.at(*box.find("done"))));

  auto single = validate_chain(MarkovChainModel({"x", "t"}, {false, true}, {{{1, 1.0}}, {}}, {-3.5, 0.0}));
  CHECK(index_all_states(single).at(0) == -3.5);

  auto geo = build_job_chain(UnknownSize{geometric_truncated(0.5, 50)});
  auto gt = index_all_states(geo);
  // Truncation perturbs the index far from the cap only below 1e-9.
  for (StateId s = 0; s < 20; ++s) CHECK(std::abs(gt.at(s) + 2.0) <= 1e-9);

  auto memoryless = build_job_chain(GeometricSize{0.25});
  CHECK(index_all_states(memoryless).at(0) == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(std::abs(index_bisection(memoryless, 0) + 4.0) <= 1e-9);
}

TEST_CASE("elimination agrees with bisection on random chains") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const double gamma = trial % 4 == 0 ? 0.85 : 1.0;
    auto chain = testgen::random_chain(rng, 12, gamma);
    auto elim = index_all_states(chain);
    auto bis = index_table_bisection(chain);
    for (StateId s : chain.nonterminal_states()) {
      CHECK(std::abs(elim.at(s) - bis.at(s)) <= 1e-7 * (1 + std::abs(bis.at(s))));
    }
  }
}

TEST_CASE("unknown-size job index formula") {
  CHECK(job_index_unknown(DiscreteDistribution::point_mass(7), 3) == -4.0);
  CHECK(job_index_unknown(DiscreteDistribution({{1, 0.5}, {10, 0.5}}), 0) == -2.0);
  auto geo = geometric_truncated(0.5, 60);
  CHECK(job_index_unknown(geo, 0) == doctest::Approx(-2.0));
  CHECK_THROWS_AS(job_index_unknown(DiscreteDistribution::point_mass(2), 2), Error);

  // The chain index matches the formula state by state.
  DiscreteDistribution d({{1, 0.3}, {4, 0.2}, {9, 0.5}});
  auto chain = build_job_chain(UnknownSize{d});
  auto table = index_all_states(chain);
  for (StateId s : chain.nonterminal_states()) {
    CHECK(table.at(s) == doctest::Approx(job_index_unknown(d, std::stoi(chain.label(s)))));
  }
}

TEST_CASE("two-stage box") {
  // A single-label two-stage box is a one-stage box paying both costs.
  std::map<std::string, StageTwo> per;
  per.emplace("only", StageTwo{0.75, kBox1});
  auto two = build_two_stage_box(0.5, {{"only", 1.0}}, per);
  const double g = index_bisection(two, 0);
  CHECK(std::abs(g - pandora_index(1.25, kBox1)) <= 1e-9);
  CHECK(std::abs(g - pandora_index(0.5, kBox1)) > 1e-3);

  std::map<std::string, StageTwo> fig;
  fig.emplace("l", StageTwo{1.0, kBox1});
  auto deg = build_two_stage_box(0.5, {{"l", 1.0}}, fig);
  CHECK(std::abs(index_bisection(deg, *deg.find("label:l")) - 12.0) <= 1e-9);
}

TEST_CASE("beta bandit index bounds and depth monotonicity") {
  const double gamma = 0.9;
  auto b10 = build_beta_bandit_chain(1, 1, 10, gamma).chain;
  auto b20 = build_beta_bandit_chain(1, 1, 20, gamma).chain;
  auto t10 = index_all_states(b10);
  auto t20 = index_all_states(b20);
  for (StateId s : b10.nonterminal_states()) {
    const double r = b10.reward(s);
    CHECK(t10.at(s) >= r / (1 - gamma) - 1e-9);
    CHECK(t10.at(s) <= 1 / (1 - gamma) + 1e-9);
    CHECK(t20.at(*b20.find(b10.label(s))) >= t10.at(s) - 1e-9);
  }
  CHECK(std::abs(index_bisection(b10, 0) - t10.at(0)) <= 1e-7);
}

TEST_CASE("MDP index and Whittle verdicts") {
  auto res = mdp_index_and_whittle(build_optional_box(1, kBox1), 0);
  CHECK(std::abs(res.index - 12.0) <= 1e-9);
  CHECK_FALSE(res.verdict.holds);
  REQUIRE(res.verdict.witness_actions.has_value());
  CHECK(res.verdict.witness_actions->first == "take");
  CHECK(res.verdict.witness_actions->second == "open");
  CHECK(res.verdict.witness->first < 2.0);
  CHECK(res.verdict.witness->second > 2.0);
  CHECK(res.co_optimal_action == "open");

  auto wrapped = mdp_index_and_whittle(BoxMdpModel::from_chain(build_pandora_box(1, kBox2)), 0);
  CHECK(wrapped.verdict.holds);
  CHECK(std::abs(wrapped.index - 13.0) <= 1e-9);
  CHECK(wrapped.co_optimal_action == "go");

  // slack E[max(v - E[v], 0)] = 3.5 for box 1
  auto pricey = mdp_index_and_whittle(build_optional_box(4, kBox1), 0);
  CHECK(pricey.verdict.holds);
  CHECK(pricey.co_optimal_action == "take");
  CHECK(std::abs(pricey.index - 7.0) <= 1e-9);
}
