#include "ppc/device.hpp"

#include <cmath>
#include <string>

#include "ppc/errors.hpp"

namespace ppc {

namespace {

void check_close(const char* what, double stored, double derived, double rel_tol) {
  double scale = std::max(std::abs(stored), std::abs(derived));
  if (scale == 0.0) return;
  if (std::abs(stored - derived) > rel_tol * scale)
    throw error(std::string("device bundle: ") + what + " deviates from the network value");
}

} // namespace

void DeviceBundle::check_self_consistent(double rel_tol) const {
  net.validate();
  nonlin.validate();

  FluxPointCouplings g = single_photon_couplings(net, arcs, phi_b_op);
  check_close("g0_omega", couplings.g0_omega, g.g0_omega, rel_tol);
  check_close("g0_kappa", couplings.g0_kappa, g.g0_kappa, rel_tol);
  check_close("g0_kappa_ext", couplings.g0_kappa_ext, g.g0_kappa_ext, rel_tol);

  ModeFrequencies mf = mode_frequencies(net, phi_b_op);
  check_close("omega_lf_op", omega_lf_op, mf.omega_lf, rel_tol);

  ArcLinewidths lw = arc_linewidths(arcs, phi_b_op);
  check_close("gamma0_op", gamma0_op, lw.gamma_int + lw.gamma_ext, rel_tol);
}

} // namespace ppc
