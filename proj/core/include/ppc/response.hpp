#pragma once

#include <complex>

namespace ppc {

// Instrument background wrapping an ideal reflection: amplitude polynomial
// a0 + a1 w + a2 w^2, phase phi0 + phi1 w (w absolute rad/s), plus the
// impedance-mismatch rotation theta applied to the resonance term only.
struct BackgroundModel {
  double a0 = 1.0, a1 = 0.0, a2 = 0.0;
  double phi0 = 0.0, phi1 = 0.0;
  double theta = 0.0;

  std::complex<double> amp_phase(double omega) const {
    double amp = a0 + omega * (a1 + omega * a2);
    return std::polar(amp, phi0 + phi1 * omega);
  }
};

// chi_c    = 1 / (kappa0p/2 + i (delta_p + Omega))
// chi_cbar = 1 / (kappa0p/2 - i (delta_p - Omega))
// chi_lf   = 1 / (gamma/2  + i (Omega - Omega_lf))
// Omega is the offset from the pump; delta_p the pump detuning from the
// (pumped) cavity resonance.
std::complex<double> chi_cavity(double Omega, double kappa0p, double delta_p);
std::complex<double> chi_cavity_bar(double Omega, double kappa0p, double delta_p);
std::complex<double> chi_lf(double Omega, double gamma, double omega_lf);

struct Susceptibilities {
  std::complex<double> chi_c, chi_c_bar, chi_0, chi_0_eff;
};

Susceptibilities susceptibilities(double Omega, double kappa0p, double delta_p, double gamma0,
                                  double omega_lf, double gamma_eff, double omega_eff);

// Ideal single-mode reflection 1 - 2 kappa_ext e^{i theta} / (kappa0 + 2 i (omega - omega0)),
// wrapped by the background amplitude/phase. omega absolute.
std::complex<double> s11_single_mode(double omega, double omega0, double kappa0,
                                     double kappa_ext, const BackgroundModel& bg = {});

// Pumped-cavity interference response, all rates of the pumped frame.
struct PpitConfig {
  double omega_p;    // pump, absolute rad/s
  double omega0p;    // pumped HF resonance, absolute rad/s
  double kappa0p;
  double kappa_extp;
  double omega_eff;  // effective LF frequency (offset from pump), rad/s
  double gamma_eff;  // effective LF linewidth, rad/s
  double g_omega;    // multiphoton dispersive rate
  double g_kappa;    // multiphoton dissipative rate

  double delta_p_primed() const { return omega_p - omega0p; }
};

// S11(Omega) = 1 - kappa_extp chi_c [1 - g_omega g chi_c chi_0_eff],
// g = g_omega + i g_kappa / 2, chi_0_eff built from the effective LF
// parameters supplied by the caller. Omega is the probe offset from the pump.
std::complex<double> s11_ppit(double Omega, const PpitConfig& cfg);

struct NormalModes {
  std::complex<double> plus, minus; // complex resonances, absolute rad/s
};

// Hybridized resonances of cavity and (pump-shifted) LF mode at two-mode
// detuning delta = omega_p - (omega0 - omega_lf):
// omega_pm = omega0 + delta/2 + i (kappa0 + gamma0)/4
//            +- sqrt(g_omega^2 + i g_omega g_kappa / 2 - ((kappa0 - gamma0 + 2 i delta)/4)^2).
// Linewidths are 2 Im(omega_pm); trace identity
// omega_+ + omega_- = 2 omega0 + delta + i (kappa0 + gamma0)/2 holds exactly.
NormalModes normal_modes(double omega0, double kappa0, double omega_lf, double gamma0,
                         double delta, double g_omega, double g_kappa);

// Reflection with the external-dissipative channel included. Reduces to
// s11_ppit exactly at g_kappa_ext = 0. gamma0/omega_lf are the bare LF
// parameters entering the direct-feedline interference term.
std::complex<double> s11_external_dissipative(double Omega, const PpitConfig& cfg,
                                              double g_kappa_ext, double gamma0,
                                              double omega_lf);

} // namespace ppc
