#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gittins_lab/chain.hpp"

namespace gittins_lab {

using Vec = Eigen::VectorXd;

/// Axis-aligned box.
struct Domain {
  Vec lo;
  Vec hi;

  static Domain unit(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }
  int dim() const { return static_cast<int>(lo.size()); }
  Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
  Vec sample(Rng& rng) const;
};

struct KernelParams {
  double lengthscale = 0.2;
  double output_scale = 1.0;
  double jitter = 1e-10;
};

struct PosteriorQuery {
  double mu = 0.0;
  double sigma = 0.0;
  Vec grad_mu;
  Vec grad_sigma;
};

/// Zero-mean GP with a squared-exponential kernel conditioned on noiseless
/// values. Queries are const and safe to run concurrently between updates.
class GaussianPosterior {
 public:
  GaussianPosterior(int dim, KernelParams params = {});

  void add(const Vec& x, double y);

  PosteriorQuery query(const Vec& x) const;

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ys_.size(); }
  const KernelParams& params() const noexcept { return params_; }
  const std::vector<Vec>& points() const noexcept { return xs_; }
  const std::vector<double>& values() const noexcept { return ys_; }
  /// Below this sigma the posterior is pinned by an observation.
  double sigma_floor() const noexcept;

  double kernel(const Vec& a, const Vec& b) const;

 private:
  int dim_;
  KernelParams params_;
  std::vector<Vec> xs_;
  std::vector<double> ys_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Vec alpha_;  // K^-1 y
};

/// Positive evaluation cost with its gradient.
struct CostFunction {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;

  static CostFunction uniform(double c);
};

/// E[max(f - alpha, 0)] - cost for f ~ N(mu, sigma^2); sigma = 0 is the
/// deterministic limit max(mu - alpha, 0) - cost.
double ei_value(double mu, double sigma, double cost, double alpha);

/// z Phi(z) + phi(z), accurate in the far left tail.
double normal_excess(double z);

/// Root of ei_value in alpha. Equals mu - cost when sigma = 0.
double pbgi_index(double mu, double sigma, double cost, double tol = 1e-14);

/// G_t(x) for the posterior and cost at x.
double pbgi_at(const GaussianPosterior& post, const CostFunction& cost, const Vec& x);

/// grad mu + (phi(z) grad sigma - grad c) / Phi(z), z = (mu - G) / sigma.
Vec pbgi_gradient(const GaussianPosterior& post, const CostFunction& cost, const Vec& x);

struct AcquisitionOptions {
  /// Grid points per dimension; 0 picks about 4096 in total.
  int grid_per_dim = 0;
  int restarts = 5;
  int max_ascent_steps = 200;
};

struct AcquisitionResult {
  Vec x;
  double value = 0.0;
  std::vector<std::pair<Vec, double>> endpoints;
};

/// Grid scan, then projected gradient ascent with backtracking from the
/// best grid points. Best effort: returns the best endpoint found.
AcquisitionResult optimize_acquisition(const GaussianPosterior& post, const CostFunction& cost,
                                       const Domain& domain, const AcquisitionOptions& options = {});

using Objective = std::function<double(const Vec&)>;

enum class StopReason { index_below_best, max_steps };
std::string_view to_string(StopReason reason);

struct BoStep {
  std::size_t t = 0;
  Vec x;
  double f = 0.0;
  double cost = 0.0;
  /// Largest index over the domain before this evaluation; NaN for the seed.
  double g_max = 0.0;
  /// Best value after this evaluation.
  double f_star = 0.0;
};

struct BoTrace {
  /// steps[0] is the free seed evaluation.
  std::vector<BoStep> steps;
  StopReason reason = StopReason::max_steps;
  /// Index maximum seen when the loop stopped on the index rule.
  double final_g_max = 0.0;

  std::size_t evaluations() const { return steps.empty() ? 0 : steps.size() - 1; }
  double total_cost() const;
  /// f*_T minus the cost of all paid evaluations.
  double net_value() const;
};

/// Gittins policy for cost-per-sample optimization: after a free seed
/// evaluation at a uniform point, stop as soon as max_x G_t(x) <= f*_t,
/// otherwise evaluate the maximizer. At most max_steps paid evaluations.
BoTrace run_bo_loop(const Objective& objective, const KernelParams& prior, const CostFunction& cost,
                    const Domain& domain, std::size_t max_steps, Rng& rng, const AcquisitionOptions& options = {});

/// Same free seed, then `steps` paid evaluations at uniform points.
BoTrace random_search(const Objective& objective, const CostFunction& cost, const Domain& domain, std::size_t steps,
                      Rng& rng);

/// Approximate draw from the GP prior by random Fourier features.
Objective sample_prior_function(const KernelParams& prior, int dim, Rng& rng, int features = 1024);

struct SyntheticObjective {
  Objective f;
  Domain domain;
};

/// Maximization test functions on the unit box: "sine" (1-D), "branin"
/// (2-D, negated and scaled), "bumps" (2-D sum of Gaussians).
SyntheticObjective synthetic_objective(const std::string& name);

}  // namespace gittins_lab
