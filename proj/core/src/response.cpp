#include "ppc/response.hpp"

#include <cmath>

#include "ppc/errors.hpp"

namespace ppc {

std::complex<double> chi_cavity(double Omega, double kappa0p, double delta_p) {
  return 1.0 / std::complex<double>(0.5 * kappa0p, delta_p + Omega);
}

std::complex<double> chi_cavity_bar(double Omega, double kappa0p, double delta_p) {
  return 1.0 / std::complex<double>(0.5 * kappa0p, -(delta_p - Omega));
}

std::complex<double> chi_lf(double Omega, double gamma, double omega_lf) {
  return 1.0 / std::complex<double>(0.5 * gamma, Omega - omega_lf);
}

Susceptibilities susceptibilities(double Omega, double kappa0p, double delta_p, double gamma0,
                                  double omega_lf, double gamma_eff, double omega_eff) {
  Susceptibilities s;
  s.chi_c = chi_cavity(Omega, kappa0p, delta_p);
  s.chi_c_bar = chi_cavity_bar(Omega, kappa0p, delta_p);
  s.chi_0 = chi_lf(Omega, gamma0, omega_lf);
  s.chi_0_eff = chi_lf(Omega, gamma_eff, omega_eff);
  return s;
}

std::complex<double> s11_single_mode(double omega, double omega0, double kappa0,
                                     double kappa_ext, const BackgroundModel& bg) {
  std::complex<double> lor =
      2.0 * kappa_ext / std::complex<double>(kappa0, 2.0 * (omega - omega0));
  std::complex<double> res = 1.0 - lor * std::polar(1.0, bg.theta);
  return bg.amp_phase(omega) * res;
}

std::complex<double> s11_ppit(double Omega, const PpitConfig& cfg) {
  std::complex<double> chi_c = chi_cavity(Omega, cfg.kappa0p, cfg.delta_p_primed());
  std::complex<double> chi0 = chi_lf(Omega, cfg.gamma_eff, cfg.omega_eff);
  std::complex<double> g(cfg.g_omega, 0.5 * cfg.g_kappa);
  return 1.0 - cfg.kappa_extp * chi_c * (1.0 - cfg.g_omega * g * chi_c * chi0);
}

std::complex<double> s11_external_dissipative(double Omega, const PpitConfig& cfg,
                                              double g_kappa_ext, double gamma0,
                                              double omega_lf) {
  double dpp = cfg.delta_p_primed();
  std::complex<double> chi_c = chi_cavity(Omega, cfg.kappa0p, dpp);
  std::complex<double> chi0_eff = chi_lf(Omega, cfg.gamma_eff, cfg.omega_eff);
  std::complex<double> chi0 = chi_lf(Omega, gamma0, omega_lf);
  std::complex<double> i1(0.0, 1.0);

  double gw_bar = cfg.g_omega + g_kappa_ext * dpp / (2.0 * cfg.kappa_extp);
  std::complex<double> g_bar(gw_bar, 0.5 * cfg.g_kappa);

  // Interference term expanded to the same order as s11_ppit, so the limit
  // g_kappa_ext = 0 collapses exactly onto it.
  std::complex<double> direct = g_kappa_ext * g_kappa_ext / (2.0 * cfg.kappa_extp) * chi0_eff;
  std::complex<double> dressed = chi_c * (1.0 - gw_bar * g_bar * chi_c * chi0_eff);
  std::complex<double> feed = 1.0 + i1 * (gw_bar + g_bar) * g_kappa_ext * chi0 /
                                        (2.0 * cfg.kappa_extp);
  return 1.0 - direct - cfg.kappa_extp * dressed * feed;
}

NormalModes normal_modes(double omega0, double kappa0, double omega_lf, double gamma0,
                         double delta, double g_omega, double g_kappa) {
  (void)omega_lf;
  std::complex<double> i1(0.0, 1.0);
  std::complex<double> mid =
      omega0 + 0.5 * delta + i1 * 0.25 * (kappa0 + gamma0);
  std::complex<double> quarter = 0.25 * std::complex<double>(kappa0 - gamma0, 2.0 * delta);
  std::complex<double> rad =
      g_omega * g_omega + i1 * 0.5 * g_omega * g_kappa - quarter * quarter;
  std::complex<double> root = std::sqrt(rad);
  NormalModes nm;
  nm.plus = mid + root;
  nm.minus = mid - root;
  return nm;
}

} // namespace ppc
