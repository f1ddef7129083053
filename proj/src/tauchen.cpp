#include "ddcmix/tauchen.hpp"

#include <cmath>
#include <stdexcept>

namespace ddcmix {

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

TauchenResult tauchen_discretize(const Ar1Spec& spec) {
  if (!(spec.innovation_sd > 0.0))
    throw std::invalid_argument("tauchen_discretize: innovation sd must be positive");
  if (!(std::abs(spec.persistence) < 1.0))
    throw std::invalid_argument("tauchen_discretize: |persistence| must be < 1");
  if (spec.grid_points < 2) throw std::invalid_argument("tauchen_discretize: need at least 2 grid points");
  if (spec.conditioning_actions < 1)
    throw std::invalid_argument("tauchen_discretize: conditioning_actions must be >= 1");

  const double sigma_lr = spec.innovation_sd / std::sqrt(1.0 - spec.persistence * spec.persistence);
  double mu_lo = spec.intercept / (1.0 - spec.persistence);
  double mu_hi = mu_lo;
  if (spec.conditioning_actions > 1) {
    const double mu_last =
        (spec.intercept + spec.action_shift * (spec.conditioning_actions - 1)) /
        (1.0 - spec.persistence);
    mu_lo = std::min(mu_lo, mu_last);
    mu_hi = std::max(mu_hi, mu_last);
  }

  TauchenResult out;
  const int n = spec.grid_points;
  const double lo = mu_lo - spec.span_sigmas * sigma_lr;
  const double hi = mu_hi + spec.span_sigmas * sigma_lr;
  out.grid = Eigen::VectorXd::LinSpaced(n, lo, hi);
  const double half = 0.5 * (out.grid(1) - out.grid(0));

  out.transition.reserve(spec.conditioning_actions);
  for (int a = 0; a < spec.conditioning_actions; ++a) {
    Eigen::MatrixXd f(n, n);
    for (int i = 0; i < n; ++i) {
      const double mean = spec.intercept + spec.action_shift * a + spec.persistence * out.grid(i);
      for (int j = 0; j < n; ++j) {
        const double z_hi = (out.grid(j) + half - mean) / spec.innovation_sd;
        const double z_lo = (out.grid(j) - half - mean) / spec.innovation_sd;
        if (j == 0)
          f(i, j) = normal_cdf(z_hi);
        else if (j == n - 1)
          f(i, j) = 1.0 - normal_cdf(z_lo);
        else
          f(i, j) = normal_cdf(z_hi) - normal_cdf(z_lo);
      }
    }
    out.transition.push_back(std::move(f));
  }
  return out;
}

}  // namespace ddcmix
