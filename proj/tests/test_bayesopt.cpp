#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "gittins_lab/bayesopt.hpp"
#include "gittins_lab/error.hpp"
#include "random_models.hpp"

using namespace gittins_lab;

namespace {

const double kPhi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);

Vec point(double v) { return Vec::Constant(1, v); }

GaussianPosterior random_posterior(Rng& rng) {
  GaussianPosterior post(1, {testgen::uniform(rng, 0.1, 0.4), testgen::uniform(rng, 0.5, 2.0)});
  const int n = testgen::uniform_int(rng, 1, 5);
  for (int i = 0; i < n; ++i) post.add(point(testgen::uniform(rng, 0, 1)), testgen::uniform(rng, -2, 2));
  return post;
}

// quadratic cost so that the cost gradient term is exercised
CostFunction bowl(double base, double curvature) {
  return {[=](const Vec& x) { return base + curvature * x.squaredNorm(); },
          [=](const Vec& x) { return Vec(2.0 * curvature * x); }};
}

}  // namespace

TEST_CASE("closed-form expected improvement") {
  CHECK(std::abs(ei_value(0, 1, kPhi0, 0)) < 1e-15);
  CHECK(ei_value(5, 0, 1, 3) == 1.0);
  CHECK(ei_value(2, 0, 1, 3) == -1.0);
  // far tail against the direct formula where it is still accurate
  for (double z : {-2.5, -1.0, 0.0, 1.5, 4.0}) {
    const double direct = z * 0.5 * std::erfc(-z / std::numbers::sqrt2) + kPhi0 * std::exp(-0.5 * z * z);
    CHECK(normal_excess(z) == doctest::Approx(direct).epsilon(1e-13));
  }
  // continuity at the series switch and positivity deep in the tail
  CHECK(normal_excess(-3.0 + 1e-12) == doctest::Approx(normal_excess(-3.0 - 1e-12)).epsilon(1e-10));
  CHECK(normal_excess(-30) > 0.0);

  Rng rng(3);
  std::normal_distribution<double> normal;
  double sum = 0;
  const int n = 2000000;
  for (int i = 0; i < n; ++i) sum += std::max(normal(rng) - 2.0, 0.0);
  CHECK(std::abs(sum / n - 0.01 - ei_value(0, 1, 0.01, 2.0)) < 1e-3);
}

TEST_CASE("index special cases and shape") {
  CHECK(pbgi_index(4, 0, 1.5) == 2.5);
  CHECK(std::abs(pbgi_index(3, 1, kPhi0) - 3) < 1e-12);
  CHECK(std::abs(pbgi_index(-1, 2.5, 2.5 * kPhi0) + 1) < 1e-12);

  // grid inversion of the closed form
  double best = 0;
  double best_gap = 1e300;
  for (int i = 0; i <= 200000; ++i) {
    const double a = i * 1e-5;
    const double gap = std::abs(ei_value(0, 1, 0.1, a));
    if (gap < best_gap) {
      best_gap = gap;
      best = a;
    }
  }
  CHECK(std::abs(pbgi_index(0, 1, 0.1) - best) < 1e-5);
  CHECK(std::abs(ei_value(0, 1, 0.1, pbgi_index(0, 1, 0.1))) < 1e-14);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double mu = testgen::uniform(rng, -5, 5);
    const double sigma = testgen::uniform(rng, 0.01, 3);
    const double c = testgen::uniform(rng, 0.001, 2);
    const double delta = testgen::uniform(rng, -10, 10);
    const double g = pbgi_index(mu, sigma, c);
    CHECK(g >= mu - c);
    // the excess is about sigma phi(c/sigma); beyond this it is below one ulp
    if (c < 5 * sigma) CHECK(g > mu - c);
    CHECK(pbgi_index(mu + delta, sigma, c) - delta == doctest::Approx(g).epsilon(1e-12));
    CHECK(pbgi_index(mu, sigma, 1.1 * c) < g);
    CHECK(pbgi_index(mu, 1.1 * sigma, c) >= g);
  }
  CHECK_THROWS_AS(pbgi_index(0, 1, 0), Error);
  CHECK_THROWS_AS(pbgi_index(0, 1e-320, 1.0), Error);
  CHECK(pbgi_index(0, 1, 1e-300) > 30.0);
}

TEST_CASE("posterior interpolates and contracts") {
  GaussianPosterior post(1);
  CHECK(post.query(point(0.3)).sigma == 1.0);
  Rng rng(2);
  std::vector<double> before(101);
  for (int i = 0; i <= 100; ++i) before[i] = post.query(point(i / 100.0)).sigma;
  for (int n = 0; n < 6; ++n) {
    const double x = testgen::uniform(rng, 0, 1);
    const double y = testgen::uniform(rng, -1, 1);
    post.add(point(x), y);
    for (std::size_t j = 0; j < post.size(); ++j) {
      const auto q = post.query(post.points()[j]);
      CHECK(std::abs(q.mu - post.values()[j]) <= 10 * std::sqrt(1e-10));
      // sigma^2 = 1 - k'K^-1 k carries rounding of a few ulps of the prior variance
      CHECK(q.sigma * q.sigma <= 1e-10 + 64 * std::numeric_limits<double>::epsilon());
    }
    for (int i = 0; i <= 100; ++i) {
      const double s = post.query(point(i / 100.0)).sigma;
      CHECK(s <= before[i] + 1e-12);
      before[i] = s;
    }
  }
}

TEST_CASE("index gradient against finite differences") {
  Rng rng(7);
  int checked = 0;
  while (checked < 100) {
    auto post = random_posterior(rng);
    const auto cost = bowl(testgen::uniform(rng, 0.01, 0.5), testgen::uniform(rng, 0, 0.5));
    const Vec x = point(testgen::uniform(rng, 0, 1));
    if (post.query(x).sigma < 1e-2) continue;
    const double h = 1e-5;
    const double fd = (pbgi_at(post, cost, point(x[0] + h)) - pbgi_at(post, cost, point(x[0] - h))) / (2 * h);
    const double an = pbgi_gradient(post, cost, x)[0];
    CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
    ++checked;
  }
}

TEST_CASE("gradient structure") {
  // one observation at 0.5 with mean 0: sigma is maximal and mu flat far away
  GaussianPosterior flat(1, {0.05, 1.0});
  flat.add(point(0.0), 0.0);
  CHECK(pbgi_gradient(flat, CostFunction::uniform(0.2), point(0.9)).norm() < 1e-12);

  Rng rng(11);
  auto post = random_posterior(rng);
  const Vec x = point(0.37);
  const auto cost1 = bowl(0.1, 0.3);
  const auto cost2 = bowl(0.1, 0.6);
  // doubling the cost gradient at a fixed cost value at x: change is -grad c / Phi(z)
  CostFunction shifted{[&](const Vec& v) { return cost1.value(v); }, [&](const Vec& v) { return cost2.gradient(v); }};
  const auto q = post.query(x);
  const double z = (q.mu - pbgi_at(post, cost1, x)) / q.sigma;
  const double diff = pbgi_gradient(post, shifted, x)[0] - pbgi_gradient(post, cost1, x)[0];
  CHECK(diff == doctest::Approx(-cost1.gradient(x)[0] / (0.5 * std::erfc(-z / std::numbers::sqrt2))));

  post.add(x, 0.0);
  try {
    pbgi_gradient(post, cost1, x);
    FAIL("expected ZeroVariancePoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVariancePoint);
  }
}

TEST_CASE("acquisition maximization") {
  const auto cost = CostFunction::uniform(0.05);
  const auto dom = Domain::unit(1);

  GaussianPosterior one(1);
  one.add(point(0.5), 0.0);
  auto r = optimize_acquisition(one, cost, dom);
  CHECK(std::abs(r.x[0] - 0.5) > 0.2);
  CHECK(r.value > pbgi_at(one, cost, point(0.5)));
  CHECK(r.endpoints.size() == 5);

  GaussianPosterior two(1, {0.15, 1.0});
  two.add(point(0.1), 0.0);
  two.add(point(0.9), 0.0);
  auto mid = optimize_acquisition(two, cost, dom, {101, 3, 200});
  CHECK(std::abs(mid.x[0] - 0.5) <= 0.01);

  // a cost spike at the old maximizer pushes the choice away
  const double peak = mid.x[0];
  CostFunction spike{[peak](const Vec& x) { return 0.05 + 5.0 * std::exp(-std::pow((x[0] - peak) / 0.05, 2)); },
                     [peak](const Vec& x) {
                       const double u = (x[0] - peak) / 0.05;
                       return Vec::Constant(1, 5.0 * std::exp(-u * u) * (-2.0 * u / 0.05));
                     }};
  auto moved = optimize_acquisition(two, spike, dom, {101, 3, 200});
  CHECK(std::abs(moved.x[0] - peak) > 0.05);
  double grid_best = -1e300;
  for (int i = 0; i <= 1000; ++i) grid_best = std::max(grid_best, pbgi_at(two, spike, point(i / 1000.0)));
  CHECK(moved.value >= grid_best - 1e-6);
}

TEST_CASE("loop stopping rule") {
  const auto obj = synthetic_objective("sine");
  Rng rng(1);
  auto pricey = run_bo_loop(obj.f, {}, CostFunction::uniform(50.0), obj.domain, 20, rng);
  CHECK(pricey.reason == StopReason::index_below_best);
  CHECK(pricey.evaluations() == 0);
  CHECK(pricey.net_value() == pricey.steps[0].f);

  Rng rng2(1);
  auto cheap = run_bo_loop(obj.f, {}, CostFunction::uniform(1e-6), obj.domain, 8, rng2);
  CHECK(cheap.reason == StopReason::max_steps);
  CHECK(cheap.evaluations() == 8);
  for (std::size_t t = 1; t < cheap.steps.size(); ++t) {
    CHECK(cheap.steps[t].g_max > cheap.steps[t - 1].f_star);
    CHECK(cheap.steps[t].f_star >= cheap.steps[t - 1].f_star);
  }
  CHECK(cheap.steps.back().f_star > 0.8);
}

TEST_CASE("prior samples: PBGI against random search") {
  const KernelParams prior{0.2, 1.0, 1e-10};
  const auto cost = CostFunction::uniform(0.02);
  const auto dom = Domain::unit(2);
  std::vector<double> gittins;
  std::vector<double> baseline;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng frng(derive_seed(seed, 0));
    const auto f = sample_prior_function(prior, 2, frng);
    Rng a(derive_seed(seed, 1));
    auto run = run_bo_loop(f, prior, cost, dom, 25, a, {24, 3, 60});
    Rng b(derive_seed(seed, 1));
    auto rs = random_search(f, cost, dom, run.evaluations(), b);
    CHECK(rs.steps[0].x == run.steps[0].x);
    gittins.push_back(run.net_value());
    baseline.push_back(rs.net_value());
  }
  std::sort(gittins.begin(), gittins.end());
  std::sort(baseline.begin(), baseline.end());
  CHECK(gittins[4] + gittins[3] >= baseline[4] + baseline[3]);
}

TEST_CASE("prior samples have the prior's scale") {
  Rng rng(13);
  const KernelParams prior{0.2, 1.5, 1e-10};
  double ss = 0;
  const int n = 400;
  for (int i = 0; i < n; ++i) {
    const auto f = sample_prior_function(prior, 1, rng, 256);
    ss += std::pow(f(point(0.3)), 2);
  }
  // variance 2.25; standard error of the sample second moment about 0.16
  CHECK(std::abs(ss / n - 2.25) < 0.6);
  CHECK_THROWS_AS(synthetic_objective("nope"), Error);
}
