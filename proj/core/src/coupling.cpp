#include "ppc/coupling.hpp"

#include <cmath>

#include "ppc/errors.hpp"

namespace ppc {

MultiphotonRates multiphoton_rates(const SinglePhotonSet& s, double n_c) {
  if (!(n_c >= 0.0)) throw negative_photon_number("multiphoton rates need n_c >= 0");
  double r1 = std::sqrt(n_c);     // n^(1/2)
  double r3 = r1 * n_c;           // n^(3/2)
  double r5 = r3 * n_c;           // n^(5/2)
  double r7 = r5 * n_c;           // n^(7/2)
  MultiphotonRates m;
  m.n_c = n_c;
  m.g_omega = s.g0_omega * r1 + s.g0_kerr * r3;
  m.g_kappa = s.g0_kappa * r1 + s.g_nl1 * r3 + s.g_nl2 * r5 + s.g_nl3 * r7;
  m.g_kappa_ext = s.g0_kappa_ext * r1;
  return m;
}

Cooperativities cooperativities(const MultiphotonRates& r, double kappa0p, double gamma0) {
  if (!(kappa0p > 0) || !(gamma0 > 0))
    throw invalid_geometry("cooperativities need kappa0p, gamma0 > 0");
  Cooperativities c;
  double denom = kappa0p * gamma0;
  c.c_omega = 4.0 * r.g_omega * r.g_omega / denom;
  c.c_omega_kappa = 2.0 * r.g_omega * r.g_kappa / denom;
  c.c_kappa = r.g_kappa * r.g_kappa / denom;
  return c;
}

double fano_angle(double g_omega, double g_kappa) {
  if (g_omega == 0.0) throw undefined_angle("fano angle undefined at g_omega = 0");
  return std::atan(g_kappa / (2.0 * g_omega));
}

double fano_angle(const MultiphotonRates& r) { return fano_angle(r.g_omega, r.g_kappa); }

double effective_dispersive_external(double g_omega, double g_kappa_ext, double delta_p,
                                     double kappa_ext) {
  if (!(kappa_ext > 0)) throw invalid_geometry("effective coupling needs kappa_ext > 0");
  return g_omega + g_kappa_ext * delta_p / (2.0 * kappa_ext);
}

} // namespace ppc
