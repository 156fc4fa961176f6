#include "ppc/pump.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ppc/constants.hpp"
#include "ppc/errors.hpp"
#include "ppc/numerics.hpp"

namespace ppc {

void NonlinearCoeffs::validate() const {
  if (kappa1 < 0 || kappa2 < 0 || kappa3 < 0)
    throw invalid_geometry("nonlinear damping coefficients must be >= 0");
}

double kappa_eff(const NonlinearCoeffs& c, double kappa0, double n) {
  return kappa0 + n * (c.kappa1 + n * (c.kappa2 + n * c.kappa3));
}

double kappa0_prime(const NonlinearCoeffs& c, double kappa0, double n) {
  return kappa0 + n * (2.0 * c.kappa1 + n * (3.0 * c.kappa2 + n * 4.0 * c.kappa3));
}

double kappa_nl(const NonlinearCoeffs& c, double n) {
  return c.kappa1 + n * (2.0 * c.kappa2 + n * 3.0 * c.kappa3);
}

namespace {

// Steady-state balance whose roots are the pump occupations.
inline double balance(double n, double delta_p, const NonlinearCoeffs& c, double kappa0,
                      double drive) {
  double det = delta_p - c.kerr * n;
  double ke = kappa_eff(c, kappa0, n);
  return (det * det + 0.25 * ke * ke) * n - drive;
}

inline double balance_slope(double n, double delta_p, const NonlinearCoeffs& c, double kappa0) {
  double det = delta_p - c.kerr * n;
  double ke = kappa_eff(c, kappa0, n);
  double knl = kappa_nl(c, n);
  return det * det + 0.25 * ke * ke + n * (-2.0 * c.kerr * det + 0.5 * ke * knl);
}

constexpr double photon_floor = 1e-6;

} // namespace

PumpRoots solve_pump_photon_number(double delta_p, const NonlinearCoeffs& c, double kappa0,
                                   double kappa_ext, double n_in) {
  c.validate();
  if (!(kappa0 > 0) || !(kappa_ext > 0)) throw invalid_geometry("kappa0, kappa_ext must be > 0");
  if (!(n_in >= 0) || !std::isfinite(n_in)) throw no_root("pump drive must be finite and >= 0");

  const double drive = kappa_ext * n_in;
  const double k = c.kerr, k1 = c.kappa1, k2 = c.kappa2, k3 = c.kappa3;
  std::array<double, 8> poly = {
      -drive,
      delta_p * delta_p + 0.25 * kappa0 * kappa0,
      0.5 * kappa0 * k1 - 2.0 * k * delta_p,
      k * k + 0.25 * (k1 * k1 + 2.0 * kappa0 * k2),
      0.5 * (kappa0 * k3 + k1 * k2),
      0.25 * (k2 * k2 + 2.0 * k1 * k3),
      0.5 * k2 * k3,
      0.25 * k3 * k3,
  };

  std::vector<double> raw = real_poly_roots(poly);

  PumpRoots out;
  for (double r : raw) {
    if (r < -1e-9) continue;
    double n = std::max(r, 0.0);
    // Polish on the physical balance, which is better conditioned than the
    // expanded polynomial at large occupations.
    for (int it = 0; it < 40; ++it) {
      double f = balance(n, delta_p, c, kappa0, drive);
      double fp = balance_slope(n, delta_p, c, kappa0);
      if (fp == 0.0) break;
      double dn = f / fp;
      double trial = n - dn;
      if (trial < 0.0) trial = 0.5 * n;
      if (std::abs(trial - n) <= 1e-12 * std::max(1.0, n)) {
        n = trial;
        break;
      }
      n = trial;
    }
    if (!out.all.empty() && std::abs(n - out.all.back()) <= 1e-8 * std::max(1.0, n)) continue;
    out.all.push_back(n);
  }
  std::sort(out.all.begin(), out.all.end());

  if (out.all.empty()) throw no_root("pump steady state: no non-negative root");

  const double* sel = nullptr;
  for (const double& n : out.all)
    if (n >= photon_floor) {
      sel = &n;
      break;
    }
  if (sel == nullptr) sel = &out.all.front(); // undriven: keep the ~0 root
  out.selected = *sel;
  out.selected_stable = balance_slope(out.selected, delta_p, c, kappa0) > 0.0;
  return out;
}

PumpedModeParams pumped_mode_params(double delta_p, double n_c, const NonlinearCoeffs& c,
                                    double kappa0, double omega0) {
  double knl = kappa_nl(c, n_c);
  double radicand = (delta_p - c.kerr * n_c) * (delta_p - 3.0 * c.kerr * n_c) -
                    0.25 * knl * knl * n_c * n_c;
  if (radicand < 0.0) throw split_modes("pumped mode: radicand negative");
  double omega_p = omega0 + delta_p;
  // Branch continuously connected to the unpumped resonance: above the pump
  // for a red-detuned pump, below for blue.
  double sgn = (delta_p - 2.0 * c.kerr * n_c) > 0.0 ? -1.0 : 1.0;
  PumpedModeParams pm;
  pm.omega0p = omega_p + sgn * std::sqrt(radicand);
  pm.omega1p = 2.0 * omega_p - pm.omega0p;
  pm.kappa0p = kappa0_prime(c, kappa0, n_c);
  return pm;
}

std::complex<double> pump_gain(double Omega, double delta_p, double n_c,
                               const NonlinearCoeffs& c, double kappa0) {
  double k0p = kappa0_prime(c, kappa0, n_c);
  std::complex<double> num(0.5 * k0p, -(delta_p - 2.0 * c.kerr * n_c - Omega));
  std::complex<double> den(k0p, 2.0 * Omega);
  return num / den;
}

PumpSteadyState pump_steady_state(double omega_p, double omega0, const NonlinearCoeffs& c,
                                  double kappa0, double kappa_ext, double n_in) {
  double delta_p = omega_p - omega0;
  PumpRoots roots = solve_pump_photon_number(delta_p, c, kappa0, kappa_ext, n_in);
  double n = roots.selected;

  PumpSteadyState st;
  st.omega_p = omega_p;
  st.n_in = n_in;
  st.n_c = n;
  st.phi_p = std::atan2(-0.5 * kappa_eff(c, kappa0, n), delta_p - c.kerr * n);
  st.kappa_eff = kappa_eff(c, kappa0, n);
  st.kappa0p = kappa0_prime(c, kappa0, n);
  st.kappa_nl = kappa_nl(c, n);
  st.kappa_aux = st.kappa0p - st.kappa_eff; // == kappa_nl * n identically
  st.omega0p = pumped_mode_params(delta_p, n, c, kappa0, omega0).omega0p;
  st.stable = roots.selected_stable;
  return st;
}

double photon_number_from_stark_shift(double d_omega0, double delta_p, double kerr) {
  if (kerr == 0.0) throw negative_photon_number("stark inversion undefined at zero kerr");
  if (delta_p == 0.0) throw negative_photon_number("stark inversion undefined at zero detuning");
  double n = d_omega0 * (2.0 - d_omega0 / delta_p) / (4.0 * kerr);
  if (!(n >= 0.0)) throw negative_photon_number("stark shift implies negative occupation");
  return n;
}

double onchip_power_from_photon_number(double n_c, double omega_p, double delta_p,
                                       const NonlinearCoeffs& c, double kappa0,
                                       double kappa_ext) {
  double ke = kappa_eff(c, kappa0, n_c);
  double det = delta_p - c.kerr * n_c;
  return 0.25 * n_c * hbar * omega_p * (ke * ke + 4.0 * det * det) / kappa_ext;
}

DuffingResponse lf_duffing_response(double delta_beta, double kerr_lf, double gamma,
                                    double gamma_ext, double n_in) {
  DuffingResponse out;
  if (n_in <= 0.0) {
    out.n_beta = 0.0;
    out.roots = {0.0};
    out.phi_beta = std::atan2(-0.5 * gamma, delta_beta);
    out.s11 = 1.0;
    return out;
  }

  if (kerr_lf == 0.0) {
    out.n_beta = gamma_ext * n_in / (delta_beta * delta_beta + 0.25 * gamma * gamma);
    out.roots = {out.n_beta};
  } else {
    std::array<double, 4> poly = {
        -gamma_ext * n_in,
        delta_beta * delta_beta + 0.25 * gamma * gamma,
        -2.0 * kerr_lf * delta_beta,
        kerr_lf * kerr_lf,
    };
    std::vector<double> raw = real_poly_roots(poly);
    for (double r : raw)
      if (r >= 0.0) out.roots.push_back(r);
    if (out.roots.empty()) throw no_root("duffing: no non-negative root");
    // Up-sweep branch.
    out.n_beta = out.roots.front();
  }

  double det = delta_beta - kerr_lf * out.n_beta;
  out.phi_beta = std::atan2(-0.5 * gamma, det);
  std::complex<double> i1(0.0, 1.0);
  out.s11 = 1.0 + i1 * std::sqrt(gamma_ext) * std::sqrt(out.n_beta / n_in) *
                      std::exp(-i1 * out.phi_beta);
  return out;
}

} // namespace ppc
