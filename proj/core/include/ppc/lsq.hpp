#pragma once

#include <functional>
#include <vector>

namespace ppc {

// r is resized to the (fixed) residual count by the callback.
using residual_fn = std::function<void(const std::vector<double>& x, std::vector<double>& r)>;

struct LsqOptions {
  int max_iter = 300;
  double ftol = 1e-12; // relative cost decrease
  double xtol = 1e-12; // relative step size
  double gtol = 1e-12; // infinity-norm of the gradient, scaled
  double initial_lambda = 1e-3;
  double fd_step = 1e-7; // relative Jacobian step
  std::vector<double> lower, upper; // optional box, empty = unbounded
};

struct LsqResult {
  std::vector<double> x;
  std::vector<double> cov; // (J^T J)^-1, row-major p*p; multiply by sigma^2 for parameter covariance
  double cost = 0.0;       // 0.5 * sum r^2 at x
  double rms = 0.0;        // sqrt(sum r^2 / m)
  int n_iter = 0;
  bool converged = false;
};

// Levenberg-Marquardt with diagonal (Marquardt) scaling and gain-ratio trust
// control. Jacobian by forward differences of the residual callback.
LsqResult levmar(const residual_fn& f, std::vector<double> x0, const LsqOptions& opt = {});

struct LinearLsqResult {
  std::vector<double> coeffs;
  std::vector<double> cov; // (A^T W A)^-1 row-major
  double rms = 0.0;        // weighted residual rms
  int rank = 0;
};

// Weighted linear least squares, A row-major m*n, weights w_i multiply row i
// (pass 1/sigma_i). Throws rank_deficient when the design matrix loses rank.
LinearLsqResult linear_lsq(const std::vector<double>& a, const std::vector<double>& y,
                           const std::vector<double>& w, int m, int n);

} // namespace ppc
