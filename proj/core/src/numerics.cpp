#include "ppc/numerics.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "ppc/constants.hpp"
#include "ppc/errors.hpp"

namespace ppc {

namespace {

double poly_eval(std::span<const double> c, double x) {
  double v = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) v = v * x + c[k];
  return v;
}

double poly_eval_deriv(std::span<const double> c, double x) {
  double v = 0.0;
  for (std::size_t k = c.size(); k-- > 1;) v = v * x + c[k] * static_cast<double>(k);
  return v;
}

} // namespace

std::vector<double> real_poly_roots(std::span<const double> coeffs, double rel_tol) {
  // Trim trailing (leading-power) zeros.
  std::size_t deg = coeffs.size();
  while (deg > 0 && coeffs[deg - 1] == 0.0) --deg;
  if (deg <= 1) return {}; // constant: no roots (all-zero handled as no finite roots)
  std::span<const double> c = coeffs.first(deg);
  const std::size_t n = deg - 1; // polynomial degree

  std::vector<double> roots;
  if (n == 1) {
    roots.push_back(-c[0] / c[1]);
    return roots;
  }
  if (n == 2) {
    double a = c[2], b = c[1], d = c[0];
    double disc = b * b - 4 * a * d;
    if (disc < 0) return {};
    double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    double r1 = q / a;
    double r2 = (q != 0.0) ? d / q : r1;
    roots = {r1, r2};
    std::sort(roots.begin(), roots.end());
    return roots;
  }

  // Scale x to condition the companion matrix: x = s*t with
  // s = max_k |c_k/c_n|^{1/(n-k)} (Knuth's bound keeps |t| near 1).
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double m = std::abs(c[k] / c[n]);
    if (m > 0.0) s = std::max(s, std::pow(m, 1.0 / static_cast<double>(n - k)));
  }
  if (s == 0.0) return {0.0};

  std::vector<double> cs(n + 1);
  for (std::size_t k = 0; k <= n; ++k) cs[k] = c[k] * std::pow(s, static_cast<double>(k));
  double lead = cs[n];
  for (auto& v : cs) v /= lead;

  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
  for (std::size_t i = 1; i < n; ++i) comp(static_cast<long>(i), static_cast<long>(i - 1)) = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    comp(static_cast<long>(i), static_cast<long>(n - 1)) = -cs[i];

  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw non_convergence("companion eigensolver failed");

  // Magnitude scale for the imaginary-part cut.
  double root_scale = 0.0;
  for (long i = 0; i < es.eigenvalues().size(); ++i)
    root_scale = std::max(root_scale, std::abs(es.eigenvalues()[i]));
  double im_cut = std::max(1e-8, 1e-8 * root_scale);

  for (long i = 0; i < es.eigenvalues().size(); ++i) {
    std::complex<double> ev = es.eigenvalues()[i];
    if (std::abs(ev.imag()) > im_cut * 100) continue;
    double x = ev.real() * s;

    // Newton polish on the original coefficients; bisection-grade fallback is
    // unnecessary because companion estimates are already close.
    for (int it = 0; it < 60; ++it) {
      double f = poly_eval(c, x);
      double fp = poly_eval_deriv(c, x);
      if (fp == 0.0) break;
      double dx = f / fp;
      x -= dx;
      if (std::abs(dx) <= rel_tol * std::max(1.0, std::abs(x))) break;
    }

    // Accept only genuine real roots: residual small against neighbor terms.
    double f = std::abs(poly_eval(c, x));
    double mag = 0.0, xp = 1.0;
    for (std::size_t k = 0; k <= n; ++k) {
      mag = std::max(mag, std::abs(c[k]) * std::abs(xp));
      xp *= x;
    }
    if (mag == 0.0) mag = 1.0;
    if (f > 1e-6 * mag) continue;
    roots.push_back(x);
  }

  std::sort(roots.begin(), roots.end());
  // Dedupe clusters from complex pairs collapsing onto the axis.
  std::vector<double> out;
  for (double r : roots) {
    if (!out.empty() && std::abs(r - out.back()) <= 1e-7 * std::max(1.0, std::abs(r)) +
                            1e-7 * root_scale * s * 1e-4)
      continue;
    out.push_back(r);
  }
  return out;
}

double elliptic_k(double k) {
  if (!(k >= 0.0) || k >= 1.0) throw invalid_geometry("elliptic modulus outside [0, 1)");
  double a = 1.0;
  double b = std::sqrt((1.0 - k) * (1.0 + k)); // complementary modulus
  for (int i = 0; i < 60 && std::abs(a - b) > 1e-16 * a; ++i) {
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return pi / (2.0 * a);
}

double brent(const std::function<double(double)>& f, double a, double b, double xtol,
             int max_iter) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa * fb > 0.0) throw non_convergence("brent: endpoints do not bracket a root");
  if (std::abs(fa) < std::abs(fb)) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  double c = a, fc = fa, d = b - a;
  bool mflag = true;
  for (int it = 0; it < max_iter; ++it) {
    if (fb == 0.0 || std::abs(b - a) < xtol) return b;
    double s;
    if (fa != fc && fb != fc) {
      s = a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) +
          c * fa * fb / ((fc - fa) * (fc - fb));
    } else {
      s = b - fb * (b - a) / (fb - fa);
    }
    double lo = (3 * a + b) / 4, hi = b;
    if (lo > hi) std::swap(lo, hi);
    bool cond = (s < lo || s > hi) || (mflag && std::abs(s - b) >= std::abs(b - c) / 2) ||
                (!mflag && std::abs(s - b) >= std::abs(c - d) / 2) ||
                (mflag && std::abs(b - c) < xtol) || (!mflag && std::abs(c - d) < xtol);
    if (cond) {
      s = 0.5 * (a + b);
      mflag = true;
    } else {
      mflag = false;
    }
    double fs = f(s);
    d = c;
    c = b;
    fc = fb;
    if (fa * fs < 0) {
      b = s;
      fb = fs;
    } else {
      a = s;
      fa = fs;
    }
    if (std::abs(fa) < std::abs(fb)) {
      std::swap(a, b);
      std::swap(fa, fb);
    }
  }
  return b;
}

double derivative_richardson(const std::function<double(double)>& f, double x, double h) {
  auto central = [&](double hh) { return (f(x + hh) - f(x - hh)) / (2.0 * hh); };
  double d1 = central(h), d2 = central(h / 2), d3 = central(h / 4);
  double r1 = (4.0 * d2 - d1) / 3.0;
  double r2 = (4.0 * d3 - d2) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

double rng64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = two_pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

} // namespace ppc
