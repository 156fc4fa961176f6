#include "ppc/lsq.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "ppc/errors.hpp"

namespace ppc {

namespace {

void clamp_box(std::vector<double>& x, const LsqOptions& opt) {
  if (!opt.lower.empty())
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], opt.lower[i]);
  if (!opt.upper.empty())
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(x[i], opt.upper[i]);
}

} // namespace

LsqResult levmar(const residual_fn& f, std::vector<double> x0, const LsqOptions& opt) {
  const int p = static_cast<int>(x0.size());
  clamp_box(x0, opt);

  std::vector<double> r;
  f(x0, r);
  const int m = static_cast<int>(r.size());

  auto cost_of = [](const std::vector<double>& rr) {
    double c = 0.0;
    for (double v : rr) c += v * v;
    return 0.5 * c;
  };

  Eigen::VectorXd rv = Eigen::Map<Eigen::VectorXd>(r.data(), m);
  double cost = cost_of(r);

  Eigen::MatrixXd J(m, p);
  std::vector<double> xs = x0, rs;
  auto jacobian = [&](const std::vector<double>& x, const Eigen::VectorXd& rbase) {
    xs = x;
    for (int j = 0; j < p; ++j) {
      double h = opt.fd_step * std::max(std::abs(x[j]), 1.0);
      double saved = xs[j];
      xs[j] = saved + h;
      if (!opt.upper.empty() && xs[j] > opt.upper[j]) { // one-sided inside the box
        xs[j] = saved - h;
        h = -h;
      }
      f(xs, rs);
      for (int i = 0; i < m; ++i) J(i, j) = (rs[i] - rbase[i]) / h;
      xs[j] = saved;
    }
  };

  LsqResult out;
  out.x = x0;

  double lambda = opt.initial_lambda;
  double nu = 2.0;
  bool need_jacobian = true;
  Eigen::VectorXd g(p);
  Eigen::MatrixXd jtj(p, p);

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (need_jacobian) {
      jacobian(out.x, rv);
      jtj = J.transpose() * J;
      g = J.transpose() * rv;
      need_jacobian = false;
    }
    if (g.lpNorm<Eigen::Infinity>() <= opt.gtol * std::max(1.0, cost)) {
      out.converged = true;
      break;
    }

    Eigen::MatrixXd a = jtj;
    double dmax = jtj.diagonal().maxCoeff();
    if (dmax <= 0) dmax = 1.0;
    for (int j = 0; j < p; ++j)
      a(j, j) += lambda * std::max(jtj(j, j), 1e-12 * dmax);

    Eigen::VectorXd step = a.ldlt().solve(-g);
    if (!step.allFinite()) {
      lambda *= 10;
      nu = 2;
      continue;
    }

    std::vector<double> xn(out.x);
    for (int j = 0; j < p; ++j) xn[j] += step[j];
    clamp_box(xn, opt);
    Eigen::VectorXd applied(p);
    for (int j = 0; j < p; ++j) applied[j] = xn[j] - out.x[j];

    f(xn, rs);
    double cost_new = cost_of(rs);
    double pred = -(g.dot(applied)) - 0.5 * applied.dot(jtj * applied);

    if (std::isfinite(cost_new) && cost_new < cost && pred > 0) {
      double rho = (cost - cost_new) / pred;
      double xnorm = 0, snorm = 0;
      for (int j = 0; j < p; ++j) {
        xnorm = std::max(xnorm, std::abs(out.x[j]));
        snorm = std::max(snorm, std::abs(applied[j]));
      }
      bool small_step = snorm <= opt.xtol * (xnorm + opt.xtol);
      bool small_decrease = (cost - cost_new) <= opt.ftol * std::max(cost, 1e-300);

      out.x = xn;
      rv = Eigen::Map<Eigen::VectorXd>(rs.data(), m);
      cost = cost_new;
      need_jacobian = true;

      double t = 2.0 * rho - 1.0;
      lambda *= std::max(1.0 / 3.0, 1.0 - t * t * t);
      lambda = std::max(lambda, 1e-14);
      nu = 2.0;

      if (small_step || small_decrease) {
        out.converged = true;
        ++it;
        break;
      }
    } else {
      // Rejected step. If the proposal is already below the step tolerance,
      // or the model predicts nothing left to gain, this is termination at
      // the current point, not a failure.
      double xnorm = 0, snorm = 0;
      for (int j = 0; j < p; ++j) {
        xnorm = std::max(xnorm, std::abs(out.x[j]));
        snorm = std::max(snorm, std::abs(applied[j]));
      }
      double ftol_scale = opt.ftol * std::max(cost, 1e-300);
      if (snorm <= opt.xtol * (xnorm + opt.xtol) ||
          (std::isfinite(cost_new) && std::abs(cost_new - cost) <= ftol_scale &&
           pred <= ftol_scale)) {
        out.converged = true;
        ++it;
        break;
      }
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e14) { // trust region collapsed far from any optimum
        break;
      }
    }
  }

  out.n_iter = it;
  out.cost = cost;
  out.rms = std::sqrt(2.0 * cost / m);

  // Covariance shape at the solution (unscaled by noise variance).
  jacobian(out.x, rv);
  jtj = J.transpose() * J;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jtj);
  Eigen::MatrixXd cov = cod.pseudoInverse();
  out.cov.resize(static_cast<std::size_t>(p) * p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) out.cov[static_cast<std::size_t>(i) * p + j] = cov(i, j);
  return out;
}

LinearLsqResult linear_lsq(const std::vector<double>& a, const std::vector<double>& y,
                           const std::vector<double>& w, int m, int n) {
  Eigen::MatrixXd B(m, n);
  Eigen::VectorXd z(m);
  for (int i = 0; i < m; ++i) {
    double wi = w.empty() ? 1.0 : w[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) B(i, j) = wi * a[static_cast<std::size_t>(i) * n + j];
    z[i] = wi * y[static_cast<std::size_t>(i)];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
  qr.setThreshold(1e-10);
  if (qr.rank() < n) throw rank_deficient("linear series fit: design matrix rank-deficient");

  Eigen::VectorXd x = qr.solve(z);
  Eigen::MatrixXd jtj = B.transpose() * B;
  Eigen::MatrixXd cov = jtj.ldlt().solve(Eigen::MatrixXd::Identity(n, n));

  LinearLsqResult out;
  out.coeffs.assign(x.data(), x.data() + n);
  out.cov.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.cov[static_cast<std::size_t>(i) * n + j] = cov(i, j);
  out.rms = (B * x - z).norm() / std::sqrt(static_cast<double>(m));
  out.rank = static_cast<int>(qr.rank());
  return out;
}

} // namespace ppc
