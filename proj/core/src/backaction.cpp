#include "ppc/backaction.hpp"

#include <cmath>
#include <limits>

#include "ppc/constants.hpp"
#include "ppc/errors.hpp"
#include "ppc/response.hpp"

namespace ppc {

BackactionRates dynamical_backaction(const MultiphotonRates& r, std::complex<double> chi_c0,
                                     std::complex<double> chi_c0_bar) {
  std::complex<double> g = r.g();
  std::complex<double> a = r.g_omega * (g * chi_c0 - std::conj(g) * chi_c0_bar);
  BackactionRates ba;
  ba.gamma_pp = 2.0 * a.real();
  ba.domega_pp = -a.imag();
  return ba;
}

BackactionRates dynamical_backaction_at(const MultiphotonRates& r, double kappa0p,
                                        double delta_p, double omega_lf) {
  return dynamical_backaction(r, chi_cavity(omega_lf, kappa0p, delta_p),
                              chi_cavity_bar(omega_lf, kappa0p, delta_p));
}

EffectiveLfParams effective_lf_params(double gamma0, double omega_lf0,
                                      const NonlinearCoeffs& c, double n_c,
                                      const BackactionRates& ba) {
  EffectiveLfParams e;
  e.gamma_eff = gamma0 + c.cross_kappa * n_c + ba.gamma_pp;
  e.omega_eff = omega_lf0 + c.cross_kerr * n_c + ba.domega_pp;
  e.unstable = !(e.gamma_eff > 0.0);
  return e;
}

PumpChainPoint pump_chain_point(const DeviceBundle& dev, double omega_p, double p_sg_watt) {
  PumpChainPoint p;
  p.omega_p = omega_p;
  try {
    double omega0 = mode_frequencies(dev.net, dev.phi_b_op).omega_hf;
    double kappa_ext = dev.arcs.kappa_ext.eval(dev.phi_b_op);
    p.n_in = dev.attenuation.eval(omega_p) * p_sg_watt / (hbar * omega_p);
    p.delta_p = omega_p - omega0;
    PumpRoots roots =
        solve_pump_photon_number(p.delta_p, dev.nonlin, dev.kappa0_pump, kappa_ext, p.n_in);
    p.n_c = roots.selected;
    p.stable = roots.selected_stable;
    PumpedModeParams pm =
        pumped_mode_params(p.delta_p, p.n_c, dev.nonlin, dev.kappa0_pump, omega0);
    p.omega0p = pm.omega0p;
    p.kappa0p = pm.kappa0p;
    p.delta_p_primed = omega_p - pm.omega0p;
    p.rates = multiphoton_rates(dev.couplings, p.n_c);
  } catch (const error& e) {
    p.valid = false;
    p.note = e.what();
  }
  return p;
}

std::vector<BackactionPoint> backaction_sweep(const DeviceBundle& dev,
                                              const std::vector<double>& omega_p,
                                              double p_sg_watt) {
  std::vector<BackactionPoint> out;
  out.reserve(omega_p.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double wp : omega_p) {
    BackactionPoint pt;
    pt.omega_p = wp;
    PumpChainPoint ch = pump_chain_point(dev, wp, p_sg_watt);
    if (!ch.valid) {
      pt.valid = false;
      pt.note = ch.note;
      pt.n_c = pt.gamma_pp = pt.domega_pp = pt.gamma_eff = pt.omega_eff = nan;
      pt.delta_primed = pt.kappa0p = nan;
      out.push_back(pt);
      continue;
    }
    pt.n_c = ch.n_c;
    pt.kappa0p = ch.kappa0p;
    double omega_lf_pre = dev.omega_lf_op + dev.nonlin.cross_kerr * ch.n_c;
    BackactionRates ba =
        dynamical_backaction_at(ch.rates, ch.kappa0p, ch.delta_p_primed, omega_lf_pre);
    EffectiveLfParams eff =
        effective_lf_params(dev.gamma0_op, dev.omega_lf_op, dev.nonlin, ch.n_c, ba);
    pt.gamma_pp = ba.gamma_pp;
    pt.domega_pp = ba.domega_pp;
    pt.gamma_eff = eff.gamma_eff;
    pt.omega_eff = eff.omega_eff;
    pt.delta_primed = wp - (ch.omega0p - eff.omega_eff);
    pt.unstable = eff.unstable;
    if (!ch.stable) {
      pt.note = "pump root on unstable branch";
    }
    out.push_back(pt);
  }
  return out;
}

} // namespace ppc
