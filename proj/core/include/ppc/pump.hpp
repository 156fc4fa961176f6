#pragma once

#include <complex>
#include <vector>

namespace ppc {

// HF self-Kerr and nonlinear damping ladder plus the cross terms acting on
// the LF mode. All rad/s (kappa3 is rad/s per photon^3 and so on);
// kappa1..kappa3 must be >= 0.
struct NonlinearCoeffs {
  double kerr = 0.0;        // K, either sign
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;
  double cross_kerr = 0.0;  // K_c, LF shift per pump photon
  double cross_kappa = 0.0; // LF damping per pump photon
  double kerr_lf = 0.0;     // LF self-Kerr

  void validate() const;
};

// Linewidth family at pump occupation n:
//   kappa_eff = kappa0 + kappa1 n + kappa2 n^2 + kappa3 n^3   (steady state)
//   kappa0p   = kappa0 + 2 kappa1 n + 3 kappa2 n^2 + 4 kappa3 n^3 (fluctuations)
//   kappa_nl  = kappa1 + 2 kappa2 n + 3 kappa3 n^2
// with kappa0p - kappa_eff = kappa_nl * n identically.
double kappa_eff(const NonlinearCoeffs& c, double kappa0, double n);
double kappa0_prime(const NonlinearCoeffs& c, double kappa0, double n);
double kappa_nl(const NonlinearCoeffs& c, double n);

struct PumpRoots {
  std::vector<double> all; // real roots >= 0, ascending
  double selected;         // smallest root above the photon floor
  bool selected_stable;    // d/dn of the response polynomial > 0 at selected
};

// Roots of [(delta_p - K n)^2 + kappa_eff(n)^2/4] n = kappa_ext n_in.
// Companion-matrix roots of the expanded degree-7 polynomial, polished to
// rel tol 1e-10. Throws no_root when no non-negative root exists.
PumpRoots solve_pump_photon_number(double delta_p, const NonlinearCoeffs& c, double kappa0,
                                   double kappa_ext, double n_in);

struct PumpedModeParams {
  double omega0p; // pumped HF resonance, rad/s absolute
  double omega1p; // mirror image below the pump
  double kappa0p;
};

// omega0p = omega_p + sqrt((delta_p - K n)(delta_p - 3 K n) - kappa_nl^2 n^2 / 4).
// Throws split_modes when the radicand is negative.
PumpedModeParams pumped_mode_params(double delta_p, double n_c, const NonlinearCoeffs& c,
                                    double kappa0, double omega0);

// Sideband gain of the pumped mode at offset Omega from the pump.
std::complex<double> pump_gain(double Omega, double delta_p, double n_c,
                               const NonlinearCoeffs& c, double kappa0);

struct PumpSteadyState {
  double omega_p;
  double n_in;
  double n_c;
  double phi_p; // intracavity pump phase, atan2(-kappa_eff/2, delta_p - K n_c)
  double kappa_eff;
  double kappa0p;
  double kappa_aux; // kappa0p - kappa_eff = kappa_nl n_c
  double kappa_nl;
  double omega0p;
  bool stable;
};

PumpSteadyState pump_steady_state(double omega_p, double omega0, const NonlinearCoeffs& c,
                                  double kappa0, double kappa_ext, double n_in);

// n_c = d_omega0 (2 - d_omega0 / delta_p) / (4 K) from the observed pumped-
// mode shift d_omega0 = omega0p - omega0. Throws negative_photon_number.
double photon_number_from_stark_shift(double d_omega0, double delta_p, double kerr);

// P_p = (n_c hbar omega_p / 4) (kappa_eff^2 + 4 (delta_p - K n_c)^2) / kappa_ext, W.
double onchip_power_from_photon_number(double n_c, double omega_p, double delta_p,
                                       const NonlinearCoeffs& c, double kappa0,
                                       double kappa_ext);

struct DuffingResponse {
  double n_beta;             // selected occupation (up-sweep branch: smallest root)
  std::vector<double> roots; // all non-negative real roots, ascending
  double phi_beta;           // atan2(-gamma/2, delta_beta - K_lf n_beta)
  std::complex<double> s11;
};

// LF Duffing steady state: [(delta_beta - K_lf n)^2 + gamma^2/4] n =
// gamma_ext n_in. At kerr_lf = 0 this reduces to the linear response
// exactly.
DuffingResponse lf_duffing_response(double delta_beta, double kerr_lf, double gamma,
                                    double gamma_ext, double n_in);

} // namespace ppc
