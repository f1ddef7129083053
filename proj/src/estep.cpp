#include <cmath>
#include <map>

#include "ddcmix/estimator.hpp"
#include "ddcmix/logit.hpp"

namespace ddcmix {

std::vector<MarketCounts> build_market_counts(const PanelData& data) {
  std::vector<MarketCounts> out(data.num_markets);
  for (int i = 0; i < data.num_markets; ++i) {
    std::map<std::tuple<int, int, int>, double> agg;
    for (int t = 0; t < data.num_periods; ++t)
      for (int j = 0; j < data.num_firms; ++j)
        agg[{data.states(i, t), j, data.actions[j](i, t)}] += 1.0;
    out[i].obs.reserve(agg.size());
    for (const auto& [key, count] : agg)
      out[i].obs.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count});
  }
  return out;
}

EStepResult e_step_counts(const CCPProfile& p, const Eigen::Ref<const Eigen::VectorXd>& pi,
                          const std::vector<MarketCounts>& markets) {
  const int m = p.num_types();
  const int n = static_cast<int>(markets.size());
  if (pi.size() != m) throw std::invalid_argument("e_step: mixing weight length mismatch");
  if ((pi.array() <= 0.0).any())
    throw std::invalid_argument("e_step: mixing weights must be strictly positive");

  // Cache logs of the floored CCPs once per call.
  std::vector<Eigen::MatrixXd> logp(static_cast<std::size_t>(m) * p.num_firms());
  for (int type = 0; type < m; ++type)
    for (int j = 0; j < p.num_firms(); ++j)
      logp[type * p.num_firms() + j] = p.at(type, j).array().max(kCcpFloor).log();

  EStepResult out;
  out.weights.values.resize(n, m);
  double total_ll = 0.0;
  Eigen::VectorXd logw(m);
  for (int i = 0; i < n; ++i) {
    for (int type = 0; type < m; ++type) {
      double ll = std::log(pi(type));
      for (const MarketObs& o : markets[i].obs)
        ll += o.count * logp[type * p.num_firms() + o.firm](o.state, o.action);
      logw(type) = ll;
    }
    const double mx = logw.maxCoeff();
    Eigen::VectorXd w = (logw.array() - mx).exp();
    const double sum = w.sum();
    out.weights.values.row(i) = (w / sum).transpose();
    total_ll += mx + std::log(sum);
  }
  out.pi_new = out.weights.values.colwise().mean().transpose();
  out.log_pseudo_likelihood = total_ll / n;
  return out;
}

EStepResult e_step(const CCPProfile& p, const Eigen::Ref<const Eigen::VectorXd>& pi,
                   const PanelData& data) {
  return e_step_counts(p, pi, build_market_counts(data));
}

}  // namespace ddcmix
