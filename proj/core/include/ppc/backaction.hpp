#pragma once

#include <complex>
#include <string>
#include <vector>

#include "ppc/coupling.hpp"
#include "ppc/device.hpp"

namespace ppc {

struct BackactionRates {
  double gamma_pp;  // induced LF damping, rad/s
  double domega_pp; // induced LF frequency shift, rad/s
};

// gamma_pp  =  2 Re[g_omega (g chi_c0 - conj(g) chi_c0_bar)]
// domega_pp = -Im[g_omega (g chi_c0 - conj(g) chi_c0_bar)]
// with chi evaluated at the LF frequency.
BackactionRates dynamical_backaction(const MultiphotonRates& r, std::complex<double> chi_c0,
                                     std::complex<double> chi_c0_bar);

// Convenience: susceptibilities at Omega = omega_lf with detuning delta_p
// (primed or bare, caller's choice of reference).
BackactionRates dynamical_backaction_at(const MultiphotonRates& r, double kappa0p,
                                        double delta_p, double omega_lf);

struct EffectiveLfParams {
  double gamma_eff; // gamma0 + cross_kappa n_c + gamma_pp
  double omega_eff; // omega_lf0 + cross_kerr n_c + domega_pp
  bool unstable;    // gamma_eff <= 0
};

EffectiveLfParams effective_lf_params(double gamma0, double omega_lf0,
                                      const NonlinearCoeffs& c, double n_c,
                                      const BackactionRates& ba);

// One evaluation of the pump-side chain: input rate from the attenuation
// model, steady-state occupation, pumped-mode parameters, multiphoton rates.
// Shared by the forward sweep and the joint fit (where it is pump-parameter
// independent and can be computed once per point).
struct PumpChainPoint {
  double omega_p = 0;
  double n_in = 0;
  double n_c = 0;
  double omega0p = 0;
  double kappa0p = 0;
  double delta_p = 0;        // omega_p - omega0 (bare)
  double delta_p_primed = 0; // omega_p - omega0p
  MultiphotonRates rates{};
  bool stable = true;
  bool valid = true;
  std::string note;
};

PumpChainPoint pump_chain_point(const DeviceBundle& dev, double omega_p, double p_sg_watt);

struct BackactionPoint {
  double omega_p = 0;
  double n_c = 0;
  double gamma_pp = 0;
  double domega_pp = 0;
  double gamma_eff = 0;
  double omega_eff = 0;
  double delta_primed = 0; // omega_p - (omega0p - omega_eff)
  double kappa0p = 0;
  bool unstable = false;
  bool valid = true;   // solver failures leave NaN fields and a note
  std::string note;
};

// Full forward sweep: per pump frequency, input rate from the attenuation
// model, pump steady state, pumped-mode parameters, multiphoton rates, and
// backaction evaluated at the cross-Kerr-shifted LF frequency. Solver errors
// mark the point invalid without aborting the sweep.
std::vector<BackactionPoint> backaction_sweep(const DeviceBundle& dev,
                                              const std::vector<double>& omega_p,
                                              double p_sg_watt);

} // namespace ppc
