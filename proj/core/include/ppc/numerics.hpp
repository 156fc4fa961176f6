#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace ppc {

// All real roots of sum_k c[k] x^k, c low-to-high, leading coefficient
// nonzero after trailing-zero trim. Companion-matrix eigenvalues polished by
// Newton/bisection; roots are deduplicated and sorted ascending.
std::vector<double> real_poly_roots(std::span<const double> coeffs, double rel_tol = 1e-12);

// Complete elliptic integral K(k), modulus k in [0, 1). AGM iteration,
// relative error < 1e-12.
double elliptic_k(double k);

// Brent root find on [a, b]; f(a), f(b) must bracket. Absolute x tolerance.
double brent(const std::function<double(double)>& f, double a, double b, double xtol = 1e-15,
             int max_iter = 200);

// Central finite difference with two Richardson extrapolation levels,
// six evaluations of f at x +- {h, h/2, h/4}.
double derivative_richardson(const std::function<double(double)>& f, double x, double h);

// Deterministic normal/uniform source. std::mt19937_64 has a standardized
// sequence; the Box-Muller transform keeps draws identical across standard
// libraries, which the reproducibility contract requires.
class rng64 {
public:
  explicit rng64(std::uint64_t seed) : eng_(seed) {}

  double uniform() { // (0, 1]
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  double normal();
  std::complex<double> cnormal() { // unit-variance complex: re,im ~ N(0, 1/2)
    double re = normal(), im = normal();
    return {re * 0.7071067811865476, im * 0.7071067811865476};
  }
  std::uint64_t raw() { return eng_(); }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

} // namespace ppc
