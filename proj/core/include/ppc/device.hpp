#pragma once

#include <array>

#include "ppc/constants.hpp"
#include "ppc/circuit.hpp"
#include "ppc/coupling.hpp"
#include "ppc/pump.hpp"
#include "ppc/response.hpp"

namespace ppc {

// Input-line power gain (linear, < 1 for attenuation) as a quartic in the
// pump frequency expressed in GHz, which keeps the stored coefficients
// well-conditioned.
struct AttenuationModel {
  std::array<double, 5> coeffs_fghz{0, 0, 0, 0, 0};

  double eval(double omega_p) const {
    double f = omega_p / (two_pi * 1e9);
    double g = 0.0;
    for (int k = 4; k >= 0; --k) g = g * f + coeffs_fghz[static_cast<std::size_t>(k)];
    return g;
  }
};

// Complete synthetic-device description. kappa0_pump is the constant cavity
// linewidth anchoring the pump-power family (fitted independently of the
// flux arcs, so it may differ by a few percent from the arc value at the
// operating flux).
struct DeviceBundle {
  CircuitNetwork net;
  ArcModel arcs;
  SinglePhotonSet couplings;
  NonlinearCoeffs nonlin;
  double kappa0_pump = 0.0; // rad/s
  double gamma0_op = 0.0;   // LF linewidth at the operating flux, rad/s
  double omega_lf_op = 0.0; // LF frequency at the operating flux, rad/s
  double theta0 = 0.08;
  BackgroundModel background_hf;
  BackgroundModel background_lf;
  AttenuationModel attenuation;
  double phi_b_op = 0.0;

  // Fails (throws ppc::error) when the stored couplings deviate from the
  // arc-derived single-photon couplings at phi_b_op by more than rel_tol.
  void check_self_consistent(double rel_tol = 0.01) const;
};

} // namespace ppc
