#pragma once

#include <complex>

namespace ppc {

// Single-photon photon-pressure couplings, rad/s. g_nl2 and g0_kappa_ext are
// first-class but default to zero (consistent with the data).
struct SinglePhotonSet {
  double g0_omega = 0.0;     // dispersive
  double g0_kappa = 0.0;     // dissipative (internal), typically < 0
  double g0_kerr = 0.0;      // Kerr-mediated correction to the dispersive rate
  double g_nl1 = 0.0;        // nonlinear-damping ladder of the dissipative rate
  double g_nl2 = 0.0;
  double g_nl3 = 0.0;
  double g0_kappa_ext = 0.0; // external-dissipative
};

struct MultiphotonRates {
  double g_omega;     // g0_omega sqrt(n) + g0_kerr sqrt(n)^3
  double g_kappa;     // g0_kappa sqrt(n) + g_nl1 sqrt(n)^3 + g_nl2 sqrt(n)^5 + g_nl3 sqrt(n)^7
  double g_kappa_ext; // g0_kappa_ext sqrt(n)
  double n_c;

  std::complex<double> g() const { return {g_omega, 0.5 * g_kappa}; }
};

MultiphotonRates multiphoton_rates(const SinglePhotonSet& s, double n_c);

struct Cooperativities {
  double c_omega;       // 4 g_omega^2 / (kappa0p gamma0)
  double c_omega_kappa; // 2 g_omega g_kappa / (kappa0p gamma0)
  double c_kappa;       // g_kappa^2 / (kappa0p gamma0)
};

Cooperativities cooperativities(const MultiphotonRates& r, double kappa0p, double gamma0);

// Interference angle arctan(g_kappa / (2 g_omega)), radians. Throws
// undefined_angle at g_omega = 0.
double fano_angle(const MultiphotonRates& r);
double fano_angle(double g_omega, double g_kappa);

// Dispersive rate dressed by the external-dissipative channel:
// g_omega + g_kappa_ext delta_p / (2 kappa_ext).
double effective_dispersive_external(double g_omega, double g_kappa_ext, double delta_p,
                                     double kappa_ext);

} // namespace ppc
