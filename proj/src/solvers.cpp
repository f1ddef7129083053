#include "ddcmix/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace ddcmix {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

GmresResult gmres(const LinearOperator& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                  const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol) {
  const auto t0 = Clock::now();
  const Eigen::Index n = a.dim();
  if (b.size() != n)
    throw std::invalid_argument("gmres: rhs length " + std::to_string(b.size()) +
                                " does not match operator dimension " + std::to_string(n));
  if (y0.size() != n)
    throw std::invalid_argument("gmres: warm start length " + std::to_string(y0.size()) +
                                " does not match operator dimension " + std::to_string(n));
  if (!b.allFinite() || !y0.allFinite())
    throw std::invalid_argument("gmres: non-finite entries in b or y0");
  if (q == kInfIters) q = static_cast<int>(n);
  if (q < 1) throw std::invalid_argument("gmres: q must be >= 1");
  q = static_cast<int>(std::min<Eigen::Index>(q, n));

  GmresResult out;
  Eigen::VectorXd r0 = b - a.apply(y0);
  const double rho0 = r0.norm();
  if (!(rho0 > tol)) {  // already converged (or exact warm start)
    out.y = y0;
    out.report.iterations_used = 0;
    out.report.final_residual_norm = rho0;
    out.report.converged = rho0 <= tol;
    out.report.wall_time = seconds_since(t0);
    return out;
  }

  Eigen::MatrixXd basis(n, q + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q + 1, q);
  Eigen::VectorXd cs(q), sn(q);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q + 1);
  basis.col(0) = r0 / rho0;
  g(0) = rho0;

  int m = 0;
  for (int j = 0; j < q; ++j) {
    Eigen::VectorXd w = a.apply(basis.col(j));
    if (!w.allFinite()) throw DivergenceError("gmres: operator returned non-finite values", j + 1);
    const double wscale = w.norm();
    for (int i = 0; i <= j; ++i) {  // modified Gram-Schmidt
      h(i, j) = basis.col(i).dot(w);
      w.noalias() -= h(i, j) * basis.col(i);
    }
    h(j + 1, j) = w.norm();
    m = j + 1;
    const bool breakdown = h(j + 1, j) <= 1e-14 * std::max(wscale, 1e-300);
    if (!breakdown) basis.col(j + 1) = w / h(j + 1, j);

    for (int i = 0; i < j; ++i) {  // carry previous rotations into the new column
      const double t = cs(i) * h(i, j) + sn(i) * h(i + 1, j);
      h(i + 1, j) = -sn(i) * h(i, j) + cs(i) * h(i + 1, j);
      h(i, j) = t;
    }
    const double denom = std::hypot(h(j, j), h(j + 1, j));
    if (denom == 0.0) {
      cs(j) = 1.0;
      sn(j) = 0.0;
    } else {
      cs(j) = h(j, j) / denom;
      sn(j) = h(j + 1, j) / denom;
    }
    h(j, j) = denom;
    h(j + 1, j) = 0.0;
    g(j + 1) = -sn(j) * g(j);
    g(j) = cs(j) * g(j);
    out.residual_history.push_back(std::abs(g(j + 1)));

    if (breakdown || std::abs(g(j + 1)) <= tol) break;
  }

  Eigen::VectorXd ym(m);
  for (int i = m - 1; i >= 0; --i) {
    double s = g(i);
    for (int k = i + 1; k < m; ++k) s -= h(i, k) * ym(k);
    ym(i) = s / h(i, i);
  }
  out.y = y0 + basis.leftCols(m) * ym;
  const double final_res = (b - a.apply(out.y)).norm();
  out.report.iterations_used = m;
  out.report.final_residual_norm = final_res;
  out.report.converged = final_res <= tol;
  out.report.wall_time = seconds_since(t0);
  return out;
}

FixedPointResult successive_approx(const FixedPointMap& g,
                                   const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol) {
  const auto t0 = Clock::now();
  if (q < 1) throw std::invalid_argument("successive_approx: q must be >= 1");
  Eigen::VectorXd y = y0;
  double step = std::numeric_limits<double>::infinity();
  int used = 0;
  bool converged = false;
  for (int k = 1; k <= q; ++k) {
    Eigen::VectorXd yn = g(y);
    if (!yn.allFinite()) throw DivergenceError("successive_approx: non-finite iterate", k);
    step = (yn - y).lpNorm<Eigen::Infinity>();
    y = std::move(yn);
    used = k;
    if (step <= tol) {
      converged = true;
      break;
    }
  }
  FixedPointResult out;
  out.y = std::move(y);
  out.report.iterations_used = used;
  out.report.final_residual_norm = step;
  out.report.converged = converged;
  out.report.wall_time = seconds_since(t0);
  return out;
}

FixedPointResult newton_kantorovich(const FixedPointMap& g, const JacobianFactory& jacobian_of_g,
                                    const Eigen::Ref<const Eigen::VectorXd>& y0, int q, double tol) {
  const auto t0 = Clock::now();
  if (q < 1) throw std::invalid_argument("newton_kantorovich: q must be >= 1");
  const Eigen::Index n = y0.size();
  Eigen::VectorXd y = y0;
  double resid = std::numeric_limits<double>::infinity();
  int used = 0;
  bool converged = false;
  for (int k = 1; k <= q; ++k) {
    Eigen::VectorXd gy = g(y);
    if (!gy.allFinite()) throw DivergenceError("newton_kantorovich: non-finite iterate", k);
    Eigen::VectorXd r = y - gy;
    resid = r.lpNorm<Eigen::Infinity>();
    if (resid <= tol) {
      converged = true;
      break;
    }
    LinearOperator jg = jacobian_of_g(y);
    LinearOperator sys(n, [&jg](const Eigen::Ref<const Eigen::VectorXd>& v) {
      return Eigen::VectorXd(v - jg.apply(v));
    });
    const double r2 = r.norm();
    const double inner_tol = std::max(1e-14, std::min(1e-10, 1e-2 * resid)) * r2;
    GmresResult step = gmres(sys, -r, Eigen::VectorXd::Zero(n), static_cast<int>(n), inner_tol);
    if (step.report.final_residual_norm > 0.5 * r2)
      throw std::runtime_error("newton_kantorovich: singular Jacobian system at iterate " +
                               std::to_string(k));
    y += step.y;
    used = k;
  }
  if (!converged) {
    Eigen::VectorXd gy = g(y);
    resid = (y - gy).lpNorm<Eigen::Infinity>();
    converged = resid <= tol;
  }
  FixedPointResult out;
  out.y = std::move(y);
  out.report.iterations_used = used;
  out.report.final_residual_norm = resid;
  out.report.converged = converged;
  out.report.wall_time = seconds_since(t0);
  return out;
}

FixedPointResult anderson_accelerate(const FixedPointMap& g,
                                     const Eigen::Ref<const Eigen::VectorXd>& y0, int q, int memory,
                                     double tol) {
  const auto t0 = Clock::now();
  if (q < 1) throw std::invalid_argument("anderson_accelerate: q must be >= 1");
  if (memory < 0) throw std::invalid_argument("anderson_accelerate: memory must be >= 0");
  const Eigen::Index n = y0.size();
  Eigen::VectorXd y = y0;
  Eigen::VectorXd f_prev, gy_prev;
  std::deque<Eigen::VectorXd> df, dg;
  double rn = std::numeric_limits<double>::infinity();
  int used = 0;
  bool converged = false;
  for (int k = 1; k <= q; ++k) {
    Eigen::VectorXd gy = g(y);
    if (!gy.allFinite()) throw DivergenceError("anderson_accelerate: non-finite iterate", k);
    Eigen::VectorXd f = gy - y;
    rn = f.lpNorm<Eigen::Infinity>();
    used = k;

    if (k >= 2 && memory > 0) {
      df.push_back(f - f_prev);
      dg.push_back(gy - gy_prev);
      if (static_cast<int>(df.size()) > memory) {
        df.pop_front();
        dg.pop_front();
      }
    }

    Eigen::VectorXd ynext;
    if (memory == 0 || df.empty()) {
      ynext = gy;
    } else {
      const int mk = static_cast<int>(df.size());
      Eigen::MatrixXd dfm(n, mk), dgm(n, mk);
      for (int c = 0; c < mk; ++c) {
        dfm.col(c) = df[c];
        dgm.col(c) = dg[c];
      }
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dfm);
      const auto& rdiag = qr.matrixR().diagonal();
      const double rmax = std::abs(rdiag(0));
      const double rmin = std::abs(rdiag(mk - 1));
      const bool well_conditioned = qr.rank() == mk && rmin > 0.0 && rmax / rmin < 1e12;
      if (!well_conditioned) {
        ynext = gy;  // SA fallback
      } else {
        Eigen::VectorXd gamma = qr.solve(f);
        ynext = gy - dgm * gamma;
        if (!ynext.allFinite()) ynext = gy;
      }
    }

    f_prev = std::move(f);
    gy_prev = std::move(gy);
    y = std::move(ynext);
    if (rn <= tol) {
      converged = true;
      break;
    }
  }
  FixedPointResult out;
  out.y = std::move(y);
  out.report.iterations_used = used;
  out.report.final_residual_norm = rn;
  out.report.converged = converged;
  out.report.wall_time = seconds_since(t0);
  return out;
}

BbStep bb_step_size(const Eigen::Ref<const Eigen::VectorXd>& delta_p,
                    const Eigen::Ref<const Eigen::VectorXd>& delta_phi, int k, double phi0_norm) {
  if (k < 0) throw std::invalid_argument("bb_step_size: k must be >= 0");
  if (phi0_norm < 0.0) throw std::invalid_argument("bb_step_size: phi0_norm must be >= 0");
  const double alpha0 = phi0_norm > 1.0 ? 1.0 / phi0_norm : 1.0;
  if (k == 0) return {alpha0, false};
  if (delta_p.size() != delta_phi.size())
    throw std::invalid_argument("bb_step_size: delta vectors differ in length");
  const double denom = delta_p.dot(delta_phi);
  if (denom == 0.0 || !std::isfinite(denom)) return {alpha0, true};
  return {delta_p.squaredNorm() / denom, false};
}

}  // namespace ddcmix
