#pragma once

#include <optional>

#include "ppc/constants.hpp"

namespace ppc {

// Two-junction loop with linear series inductance in each constriction
// branch. l_arm is fixed at 0.1 * l_loop by layout convention.
struct SquidParams {
  double i0 = 0.0;     // critical current per junction, A, > 0
  double l_loop = 0.0; // geometric loop inductance, H, > 0
  double l_lin = 0.0;  // series linear inductance per branch, H, >= 0

  double l_arm() const { return 0.1 * l_loop; }
  double l_j0() const { return flux_quantum / (two_pi * i0); }
  // Screening parameter of the effective loop (l_loop + 2 l_lin).
  double beta_l() const { return (l_loop + 2.0 * l_lin) / (pi * l_j0()); }

  void validate() const;
};

struct CircuitNetwork {
  SquidParams squid;
  double l1 = 0.0;   // HF series inductance, H
  double l2 = 0.0;   // shared branch inductance, H
  double c = 0.0;    // HF capacitance, F
  double c_c = 0.0;  // HF coupling capacitance, F
  double c0 = 0.0;   // LF capacitance, F
  double c_c0 = 0.0; // LF coupling capacitance, F
  double z0 = 50.0;  // feedline impedance, Ohm

  // Measured junction-free mode inductances, when available. Used by
  // external_decay_theory; absent values fall back to the junction-free
  // reduction of l1/l2/l_loop.
  std::optional<double> l_hf_bare, l_lf_bare;

  double c_tot() const { return c + c_c; }
  double c_sigma() const { return c0 + c_c0; }

  void validate() const; // positivity, c_tot > c_c, c_sigma > c_c0
};

struct FluxSolution {
  double phi;        // total flux, units of flux_quantum
  bool multi_valued; // additional self-consistent branches exist (beta_l > 2/pi)
};

// Solve phi = phi_b - (beta_l/2) sin(pi phi) for the total flux, in units of
// flux_quantum. Returns the branch continuously connected to phi = phi_b at
// beta_l = 0 (homotopy continuation); residual < 1e-12. Throws
// non_convergence.
FluxSolution solve_total_flux(double phi_b, double beta_l);

// Fold a bias flux to the principal branch [-1/2, 1/2].
double fold_flux(double phi_b);

// l_j0 / cos(pi phi); phi in flux_quantum units. Throws singular_inductance
// when |cos| < 1e-9.
double josephson_inductance(const SquidParams& sq, double phi);

struct ModeInductances {
  double l_p;  // constriction branch: l_j + l_lin + l_arm
  double l_hf; // l1 + (l_p + l2) / 2
  double l_lf; // 2 l2 + 1.6 l_p l_loop / (2 l_p + 0.8 l_loop)
};

struct ModeFrequencies {
  double omega_hf; // rad/s
  double omega_lf; // rad/s
  ModeInductances ind;
  FluxSolution flux;
};

ModeInductances mode_inductances(const CircuitNetwork& net, double phi_total);
ModeFrequencies mode_frequencies(const CircuitNetwork& net, double phi_b);

// Junction-free mode inductances (constriction branch reduced to l_arm):
// the bare-circuit values the decay-rate formulas are defined for.
ModeInductances bare_inductances(const CircuitNetwork& net);

enum class Mode { hf, lf };

// Feedline-limited decay of the bare circuit:
//   hf: z0 c_c^2  / (l_hf c_tot^2)
//   lf: z0 c_c0^2 / (l_lf c_sigma^2)
// with the measured bare inductances when the network carries them. rad/s.
double external_decay_theory(const CircuitNetwork& net, Mode mode);

struct IdcGeometry {
  int n = 0;        // finger count, >= 4
  double length = 0; // finger length, m
  double width = 0;  // finger width a, m
  double gap = 0;    // finger gap b, m
  double eps_r = 0;  // substrate permittivity
};

// Interdigitated capacitance via conformal mapping; elliptic integrals by
// AGM. Throws invalid_geometry when a modulus leaves (0, 1) or n < 4.
double idc_capacitance(const IdcGeometry& g);

// Parallel-plate capacitance eps0 eps_r area / gap.
double ppc_capacitance(double area, double gap, double eps_r);

struct ZeroPointFluctuations {
  double i_zpf;    // A
  double phi_zpf;  // Wb
  double alpha_l;  // asymmetry of the zero-point current division
  double omega_lf; // rad/s, at the requested bias
};

// i_zpf = sqrt(hbar Omega0 / (2 l_lf)); phi_zpf = 0.8 l_loop i_zpf
// (equal to l_tilde (1 - alpha_l) i_zpf / 2 identically).
ZeroPointFluctuations zero_point_flux(const CircuitNetwork& net, double phi_b);

// Even sextic in the folded bias flux: x_ss + x2 phi^2 + x4 phi^4 + x6 phi^6,
// coefficients in rad/s per flux_quantum power. Must stay positive on the
// principal branch.
struct ArcPoly {
  double x_ss = 0, x2 = 0, x4 = 0, x6 = 0;
  double eval(double phi_b) const {
    double p2 = fold_flux(phi_b);
    p2 *= p2;
    return x_ss + p2 * (x2 + p2 * (x4 + p2 * x6));
  }
};

// Flux-resolved linewidth model. gamma_ext is flux-independent; kappa_ext
// keeps the polynomial form but a constant (x2 = x4 = x6 = 0) is the default
// reading of the data.
struct ArcModel {
  ArcPoly kappa_int;
  ArcPoly kappa_ext;
  ArcPoly gamma_int;
  double gamma_ext = 0.0; // rad/s
};

struct ArcLinewidths {
  double kappa_int, kappa_ext, gamma_int, gamma_ext; // rad/s
};

ArcLinewidths arc_linewidths(const ArcModel& arc, double phi_b);

// Serialized mode snapshot; cyclic Hz on purpose (record-facing).
struct ModeState {
  double f0 = 0;    // Hz
  double k_int = 0; // Hz
  double k_ext = 0; // Hz
  double k_tot() const { return k_int + k_ext; }
};

ModeState hf_mode_state(const CircuitNetwork& net, const ArcModel& arc, double phi_b);
ModeState lf_mode_state(const CircuitNetwork& net, const ArcModel& arc, double phi_b);

struct FluxPointCouplings {
  double g0_omega;     // -d omega0 / d phi_b * phi_zpf, rad/s
  double g0_kappa;     // -d kappa0 / d phi_b * phi_zpf, rad/s
  double g0_kappa_ext; // external part alone, rad/s
};

// Flux derivatives by central differences (h = 1e-5 flux_quantum) with two
// Richardson levels.
FluxPointCouplings single_photon_couplings(const CircuitNetwork& net, const ArcModel& arc,
                                           double phi_b);

} // namespace ppc
