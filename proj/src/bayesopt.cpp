#include "gittins_lab/bayesopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gittins_lab/error.hpp"

namespace gittins_lab {

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

Vec Domain::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec x(dim());
  for (int i = 0; i < dim(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * unif(rng);
  return x;
}

// ---------------------------------------------------------------------------

GaussianPosterior::GaussianPosterior(int dim, KernelParams params) : dim_(dim), params_(params) {
  if (dim < 1 || !(params.lengthscale > 0.0) || !(params.output_scale > 0.0) || !(params.jitter > 0.0)) {
    throw Error(ErrorCode::InvalidModel, "kernel needs positive lengthscale, scale and jitter");
  }
}

double GaussianPosterior::kernel(const Vec& a, const Vec& b) const {
  const double l = params_.lengthscale;
  return params_.output_scale * params_.output_scale * std::exp(-0.5 * (a - b).squaredNorm() / (l * l));
}

double GaussianPosterior::sigma_floor() const noexcept { return 2.0 * std::sqrt(params_.jitter) * params_.output_scale; }

void GaussianPosterior::add(const Vec& x, double y) {
  if (x.size() != dim_) throw Error(ErrorCode::InvalidModel, "point has the wrong dimension");
  xs_.push_back(x);
  ys_.push_back(y);
  const auto n = static_cast<Eigen::Index>(xs_.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(xs_[i], xs_[j]);
  }
  // jitter scales with the prior variance so that it stays a relative nugget
  k.diagonal().array() += params_.jitter * params_.output_scale * params_.output_scale;
  chol_.compute(k);
  if (chol_.info() != Eigen::Success) throw Error(ErrorCode::InvalidModel, "kernel matrix is not positive definite");
  alpha_ = chol_.solve(Eigen::Map<const Vec>(ys_.data(), n));
}

PosteriorQuery GaussianPosterior::query(const Vec& x) const {
  const double prior_var = params_.output_scale * params_.output_scale;
  PosteriorQuery q{0.0, std::sqrt(prior_var), Vec::Zero(dim_), Vec::Zero(dim_)};
  if (xs_.empty()) return q;
  const auto n = static_cast<Eigen::Index>(xs_.size());
  const double inv_l2 = 1.0 / (params_.lengthscale * params_.lengthscale);
  Vec ks(n);
  Eigen::MatrixXd dk(dim_, n);  // column i: gradient of k(x, x_i) in x
  for (Eigen::Index i = 0; i < n; ++i) {
    ks[i] = kernel(x, xs_[i]);
    dk.col(i) = -ks[i] * inv_l2 * (x - xs_[i]);
  }
  q.mu = ks.dot(alpha_);
  q.grad_mu = dk * alpha_;
  const Vec w = chol_.solve(ks);
  const double var = std::max(prior_var - ks.dot(w), 0.0);
  q.sigma = std::sqrt(var);
  if (q.sigma > 0.0) q.grad_sigma = -(dk * w) / q.sigma;
  return q;
}

CostFunction CostFunction::uniform(double c) {
  if (!(c > 0.0)) throw Error(ErrorCode::NonPositiveCost, "evaluation cost must be positive");
  return {[c](const Vec&) { return c; }, [](const Vec& x) { return Vec::Zero(x.size()); }};
}

// ---------------------------------------------------------------------------

double normal_excess(double z) {
  if (z > -3.0) return z * normal_cdf(z) + normal_pdf(z);
  // With t = -z and Mills ratio 1/(t + K), K = 1/(t + 2/(t + 3/(t + ...))),
  // the excess is phi(t) K / (t + K) without cancellation.
  const double t = -z;
  double tail = 0.0;
  for (int j = 80; j >= 2; --j) tail = j / (t + tail);
  const double k = 1.0 / (t + tail);
  return normal_pdf(t) * k / (t + k);
}

double ei_value(double mu, double sigma, double cost, double alpha) {
  if (sigma < 0.0) throw Error(ErrorCode::InvalidModel, "sigma must be nonnegative");
  if (sigma == 0.0) return std::max(mu - alpha, 0.0) - cost;
  return sigma * normal_excess((mu - alpha) / sigma) - cost;
}

double pbgi_index(double mu, double sigma, double cost, double tol) {
  if (!(cost > 0.0)) throw Error(ErrorCode::NonPositiveCost, "evaluation cost must be positive");
  if (sigma < 0.0) throw Error(ErrorCode::InvalidModel, "sigma must be nonnegative");
  if (sigma == 0.0) return mu - cost;
  // Standardised root: normal_excess(z) = cost / sigma, then G = mu - sigma z.
  // normal_excess is increasing with slope Phi(z).
  const double target = cost / sigma;
  if (!std::isfinite(target)) throw Error(ErrorCode::BracketFailure, "cost to sigma ratio overflows");
  auto f = [&](double z) { return normal_excess(z) - target; };
  double lo = -1.0;
  double hi = 1.0;
  for (int j = 0; f(lo) > 0.0; ++j) {
    if (j > 60) throw Error(ErrorCode::BracketFailure, "index root below the representable range");
    lo *= 2.0;
  }
  for (int j = 0; f(hi) < 0.0; ++j) {
    if (j > 1100) throw Error(ErrorCode::BracketFailure, "index root above the representable range");
    hi *= 2.0;
  }
  while (hi - lo > tol * std::max(1.0, std::abs(lo))) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  // one Newton step from the bracket midpoint, kept if it stays inside
  double z = 0.5 * (lo + hi);
  const double newton = z - f(z) / normal_cdf(z);
  if (newton >= lo && newton <= hi) z = newton;
  // normal_excess(z) >= z, so target - z >= 0 is the excess over mu - cost
  return (mu - cost) + sigma * std::max(target - z, 0.0);
}

double pbgi_at(const GaussianPosterior& post, const CostFunction& cost, const Vec& x) {
  const auto q = post.query(x);
  return pbgi_index(q.mu, q.sigma, cost.value(x));
}

Vec pbgi_gradient(const GaussianPosterior& post, const CostFunction& cost, const Vec& x) {
  const auto q = post.query(x);
  if (q.sigma <= post.sigma_floor()) {
    throw Error(ErrorCode::ZeroVariancePoint, "posterior variance vanishes at this point");
  }
  const double g = pbgi_index(q.mu, q.sigma, cost.value(x));
  const double z = (q.mu - g) / q.sigma;
  return q.grad_mu + (normal_pdf(z) * q.grad_sigma - cost.gradient(x)) / normal_cdf(z);
}

// ---------------------------------------------------------------------------

AcquisitionResult optimize_acquisition(const GaussianPosterior& post, const CostFunction& cost, const Domain& domain,
                                       const AcquisitionOptions& options) {
  const int d = domain.dim();
  if (d < 1 || (domain.hi - domain.lo).minCoeff() < 0.0) throw Error(ErrorCode::InvalidModel, "empty domain");
  int per_dim = options.grid_per_dim;
  if (per_dim <= 0) per_dim = std::max(2, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / d) + 1e-9)));

  std::vector<std::pair<double, Vec>> grid;
  std::vector<int> digit(d, 0);
  for (;;) {
    Vec x(d);
    for (int i = 0; i < d; ++i) {
      const double u = per_dim == 1 ? 0.5 : static_cast<double>(digit[i]) / (per_dim - 1);
      x[i] = domain.lo[i] + u * (domain.hi[i] - domain.lo[i]);
    }
    grid.emplace_back(pbgi_at(post, cost, x), x);
    int i = 0;
    while (i < d && ++digit[i] == per_dim) digit[i++] = 0;
    if (i == d) break;
  }
  const auto starts = std::min<std::size_t>(std::max(options.restarts, 1), grid.size());
  std::partial_sort(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(starts), grid.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });

  const double width = (domain.hi - domain.lo).maxCoeff();
  AcquisitionResult out;
  out.value = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < starts; ++r) {
    auto [g, x] = grid[r];
    double step = 0.05 * width;
    for (int it = 0; it < options.max_ascent_steps && step > 1e-10 * std::max(width, 1e-300); ++it) {
      Vec grad;
      try {
        grad = pbgi_gradient(post, cost, x);
      } catch (const Error&) {
        break;  // pinned by an observation: the grid value stands
      }
      const double norm = grad.norm();
      if (!(norm > 0.0)) break;
      const Vec cand = domain.clamp(x + step * grad / norm);
      const double gc = pbgi_at(post, cost, cand);
      if (gc > g) {
        x = cand;
        g = gc;
        step = std::min(2.0 * step, 0.25 * width);
      } else {
        step *= 0.5;
      }
    }
    out.endpoints.emplace_back(x, g);
    if (g > out.value) {
      out.value = g;
      out.x = x;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(StopReason reason) {
  return reason == StopReason::index_below_best ? "index_below_best" : "max_steps";
}

double BoTrace::total_cost() const {
  double c = 0.0;
  for (std::size_t i = 1; i < steps.size(); ++i) c += steps[i].cost;
  return c;
}

double BoTrace::net_value() const { return steps.back().f_star - total_cost(); }

BoTrace run_bo_loop(const Objective& objective, const KernelParams& prior, const CostFunction& cost,
                    const Domain& domain, std::size_t max_steps, Rng& rng, const AcquisitionOptions& options) {
  GaussianPosterior post(domain.dim(), prior);
  BoTrace trace;
  const Vec x0 = domain.sample(rng);
  const double f0 = objective(x0);
  post.add(x0, f0);
  trace.steps.push_back({0, x0, f0, 0.0, std::numeric_limits<double>::quiet_NaN(), f0});
  trace.reason = StopReason::max_steps;
  while (trace.evaluations() < max_steps) {
    const double f_star = trace.steps.back().f_star;
    const auto acq = optimize_acquisition(post, cost, domain, options);
    if (acq.value <= f_star) {
      trace.reason = StopReason::index_below_best;
      trace.final_g_max = acq.value;
      break;
    }
    const double f = objective(acq.x);
    post.add(acq.x, f);
    trace.steps.push_back({trace.steps.size(), acq.x, f, cost.value(acq.x), acq.value, std::max(f_star, f)});
  }
  return trace;
}

BoTrace random_search(const Objective& objective, const CostFunction& cost, const Domain& domain, std::size_t steps,
                      Rng& rng) {
  BoTrace trace;
  const Vec x0 = domain.sample(rng);
  const double f0 = objective(x0);
  trace.steps.push_back({0, x0, f0, 0.0, std::numeric_limits<double>::quiet_NaN(), f0});
  for (std::size_t t = 1; t <= steps; ++t) {
    const Vec x = domain.sample(rng);
    const double f = objective(x);
    trace.steps.push_back(
        {t, x, f, cost.value(x), std::numeric_limits<double>::quiet_NaN(), std::max(trace.steps.back().f_star, f)});
  }
  return trace;
}

Objective sample_prior_function(const KernelParams& prior, int dim, Rng& rng, int features) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Eigen::MatrixXd omega(features, dim);
  Vec b(features);
  Vec w(features);
  for (int j = 0; j < features; ++j) {
    for (int i = 0; i < dim; ++i) omega(j, i) = normal(rng) / prior.lengthscale;
    b[j] = phase(rng);
    w[j] = normal(rng);
  }
  const double scale = prior.output_scale * std::sqrt(2.0 / features);
  return [omega, b, w, scale](const Vec& x) { return scale * w.dot(((omega * x) + b).array().cos().matrix()); };
}

SyntheticObjective synthetic_objective(const std::string& name) {
  if (name == "sine") {
    return {[](const Vec& x) { return std::sin(3.0 * std::numbers::pi * x[0]) * (1.0 - 0.5 * x[0]); }, Domain::unit(1)};
  }
  if (name == "branin") {
    return {[](const Vec& u) {
              const double x1 = 15.0 * u[0] - 5.0;
              const double x2 = 15.0 * u[1];
              const double pi = std::numbers::pi;
              const double a = x2 - 5.1 / (4 * pi * pi) * x1 * x1 + 5.0 / pi * x1 - 6.0;
              return -(a * a + 10.0 * (1.0 - 1.0 / (8 * pi)) * std::cos(x1) + 10.0) / 50.0;
            },
            Domain::unit(2)};
  }
  if (name == "bumps") {
    return {[](const Vec& x) {
              auto bump = [&](double cx, double cy, double h, double w) {
                return h * std::exp(-((x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy)) / (2 * w * w));
              };
              return bump(0.2, 0.3, 0.8, 0.1) + bump(0.7, 0.8, 1.0, 0.06) + bump(0.8, 0.2, 0.6, 0.2);
            },
            Domain::unit(2)};
  }
  throw Error(ErrorCode::InvalidModel, "unknown synthetic objective '" + name + "'");
}

}  // namespace gittins_lab
