#include "ppc/circuit.hpp"

#include <cmath>

#include "ppc/errors.hpp"
#include "ppc/numerics.hpp"

namespace ppc {

void SquidParams::validate() const {
  if (!(i0 > 0)) throw invalid_geometry("squid: i0 must be > 0");
  if (!(l_loop > 0)) throw invalid_geometry("squid: l_loop must be > 0");
  if (l_lin < 0) throw invalid_geometry("squid: l_lin must be >= 0");
}

void CircuitNetwork::validate() const {
  squid.validate();
  if (!(l1 > 0) || !(l2 > 0)) throw invalid_geometry("network: inductances must be > 0");
  if (!(c > 0) || !(c_c > 0) || !(c0 > 0) || !(c_c0 > 0) || !(z0 > 0))
    throw invalid_geometry("network: capacitances and z0 must be > 0");
  if (!(c_tot() > c_c)) throw invalid_geometry("network: c_tot must exceed c_c");
  if (!(c_sigma() > c_c0)) throw invalid_geometry("network: c_sigma must exceed c_c0");
}

double fold_flux(double phi_b) {
  double f = phi_b - std::round(phi_b);
  return f; // in [-0.5, 0.5]
}

namespace {

// Residual of the flux balance, phi in flux_quantum units.
inline double flux_residual(double phi, double phi_b, double beta_l) {
  return phi + 0.5 * beta_l * std::sin(pi * phi) - phi_b;
}

// One damped fixed-point + bisection solve near a previous branch point.
double flux_step(double phi_b, double beta_l, double phi_prev) {
  const double alpha = 1.0 / (1.0 + 0.5 * pi * beta_l);
  double phi = phi_prev;
  for (int it = 0; it < 200; ++it) {
    double target = phi_b - 0.5 * beta_l * std::sin(pi * phi);
    double next = phi + alpha * (target - phi);
    if (std::abs(next - phi) < 1e-14) {
      phi = next;
      break;
    }
    phi = next;
  }
  if (std::abs(flux_residual(phi, phi_b, beta_l)) < 1e-13) return phi;

  // Bisection fallback on an expanding bracket around the previous branch
  // point; the branch step is small, so the nearest bracketed root is the
  // continued one.
  for (double w = 0.05; w <= 0.8; w *= 2.0) {
    double lo = phi_prev - w, hi = phi_prev + w;
    double flo = flux_residual(lo, phi_b, beta_l);
    double fhi = flux_residual(hi, phi_b, beta_l);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi < 0.0) {
      return brent([&](double x) { return flux_residual(x, phi_b, beta_l); }, lo, hi, 1e-15);
    }
  }
  throw non_convergence("flux solve: no bracket around continued branch");
}

} // namespace

FluxSolution solve_total_flux(double phi_b, double beta_l) {
  if (beta_l < 0) throw invalid_geometry("beta_l must be >= 0");
  if (beta_l == 0.0) return {phi_b, false};

  // Continuation in beta from 0 keeps the solution on the branch connected
  // to phi = phi_b.
  const int n_steps = std::max(4, static_cast<int>(std::ceil(beta_l / 0.1)));
  double phi = phi_b;
  for (int k = 1; k <= n_steps; ++k) {
    double b = beta_l * static_cast<double>(k) / n_steps;
    phi = flux_step(phi_b, b, phi);
  }

  // Newton polish to the contract tolerance.
  for (int it = 0; it < 50; ++it) {
    double f = flux_residual(phi, phi_b, beta_l);
    if (std::abs(f) < 1e-13) break;
    double fp = 1.0 + 0.5 * pi * beta_l * std::cos(pi * phi);
    if (fp <= 1e-12) break; // at a fold; keep the continued value
    phi -= f / fp;
  }
  if (std::abs(flux_residual(phi, phi_b, beta_l)) > 1e-12)
    throw non_convergence("flux solve: residual above 1e-12");

  // Additional branches exist only where the balance becomes non-monotone
  // (beta_l > 2/pi), in windows around odd multiples of flux_quantum/ (in
  // these units, odd integers). Count sign alternation across the local
  // extrema of the residual.
  bool multi = false;
  if (beta_l > 2.0 / pi) {
    double cstar = -2.0 / (beta_l * pi);
    double a = std::acos(cstar) / pi; // in (1/2, 1)
    long k0 = std::lround((phi_b - 1.0) / 2.0);
    for (long k = k0 - 1; k <= k0 + 1 && !multi; ++k) {
      double pmax = 2.0 * static_cast<double>(k) + a;       // local max of residual
      double pmin = 2.0 * static_cast<double>(k) + 2.0 - a; // local min
      if (flux_residual(pmax, phi_b, beta_l) > 0.0 && flux_residual(pmin, phi_b, beta_l) < 0.0)
        multi = true;
    }
  }
  return {phi, multi};
}

double josephson_inductance(const SquidParams& sq, double phi) {
  double c = std::cos(pi * phi);
  if (std::abs(c) < 1e-9) throw singular_inductance("josephson inductance diverges");
  return sq.l_j0() / c;
}

ModeInductances mode_inductances(const CircuitNetwork& net, double phi_total) {
  double l_j = josephson_inductance(net.squid, phi_total);
  double l_p = l_j + net.squid.l_lin + net.squid.l_arm();
  double l_loop = net.squid.l_loop;
  ModeInductances mi;
  mi.l_p = l_p;
  mi.l_hf = net.l1 + 0.5 * (l_p + net.l2);
  mi.l_lf = 2.0 * net.l2 + 1.6 * l_p * l_loop / (2.0 * l_p + 0.8 * l_loop);
  return mi;
}

ModeFrequencies mode_frequencies(const CircuitNetwork& net, double phi_b) {
  FluxSolution fs = solve_total_flux(fold_flux(phi_b), net.squid.beta_l());
  ModeInductances mi = mode_inductances(net, fs.phi);
  ModeFrequencies mf;
  mf.ind = mi;
  mf.flux = fs;
  mf.omega_hf = 1.0 / std::sqrt(mi.l_hf * net.c_tot());
  mf.omega_lf = 1.0 / std::sqrt(mi.l_lf * net.c_sigma());
  return mf;
}

ModeInductances bare_inductances(const CircuitNetwork& net) {
  double l_arm = net.squid.l_arm();
  double l_loop = net.squid.l_loop;
  ModeInductances mi;
  mi.l_p = l_arm;
  mi.l_hf = net.l_hf_bare.value_or(net.l1 + 0.5 * (l_arm + net.l2));
  mi.l_lf =
      net.l_lf_bare.value_or(2.0 * net.l2 + 1.6 * l_arm * l_loop / (2.0 * l_arm + 0.8 * l_loop));
  return mi;
}

double external_decay_theory(const CircuitNetwork& net, Mode mode) {
  ModeInductances mi = bare_inductances(net);
  if (mode == Mode::hf) {
    double ct = net.c_tot();
    return net.z0 * net.c_c * net.c_c / (mi.l_hf * ct * ct);
  }
  double cs = net.c_sigma();
  return net.z0 * net.c_c0 * net.c_c0 / (mi.l_lf * cs * cs);
}

double idc_capacitance(const IdcGeometry& g) {
  if (g.n < 4) throw invalid_geometry("idc: needs at least 4 fingers");
  if (!(g.length > 0) || !(g.width > 0) || !(g.gap > 0) || !(g.eps_r >= 1))
    throw invalid_geometry("idc: bad geometry");
  double a = g.width, b = g.gap;
  double eps_eff = 0.5 * (g.eps_r + 1.0);
  double k1 = std::sin(pi * a / (2.0 * (a + b)));
  double k2 = 2.0 * std::sqrt(a * (a + b)) / (2.0 * a + b);
  for (double k : {k1, k2})
    if (!(k > 0.0) || !(k < 1.0)) throw invalid_geometry("idc: modulus outside (0, 1)");
  auto cap = [&](double k) {
    double kp = std::sqrt((1.0 - k) * (1.0 + k));
    return 2.0 * eps0 * eps_eff * g.length * elliptic_k(k) / elliptic_k(kp);
  };
  double c1 = cap(k1), c2 = cap(k2);
  return 0.5 * (g.n - 3) * c1 + 2.0 * c1 * c2 / (c1 + c2);
}

double ppc_capacitance(double area, double gap, double eps_r) {
  if (!(area > 0) || !(gap > 0) || !(eps_r >= 1)) throw invalid_geometry("ppc: bad geometry");
  return eps0 * eps_r * area / gap;
}

ZeroPointFluctuations zero_point_flux(const CircuitNetwork& net, double phi_b) {
  ModeFrequencies mf = mode_frequencies(net, phi_b);
  double l_loop = net.squid.l_loop;
  double l_tilde = l_loop + 2.0 * net.squid.l_lin;
  ZeroPointFluctuations z;
  z.omega_lf = mf.omega_lf;
  z.i_zpf = std::sqrt(hbar * mf.omega_lf / (2.0 * mf.ind.l_lf));
  z.alpha_l = (4.0 * (net.squid.l_lin + net.squid.l_arm()) - l_tilde) / l_tilde;
  // l_tilde (1 - alpha_l) / 2 == l_loop - 2 l_arm == 0.8 l_loop identically.
  z.phi_zpf = 0.8 * l_loop * z.i_zpf;
  return z;
}

ArcLinewidths arc_linewidths(const ArcModel& arc, double phi_b) {
  return {arc.kappa_int.eval(phi_b), arc.kappa_ext.eval(phi_b), arc.gamma_int.eval(phi_b),
          arc.gamma_ext};
}

ModeState hf_mode_state(const CircuitNetwork& net, const ArcModel& arc, double phi_b) {
  ModeFrequencies mf = mode_frequencies(net, phi_b);
  ArcLinewidths lw = arc_linewidths(arc, phi_b);
  return {mf.omega_hf / two_pi, lw.kappa_int / two_pi, lw.kappa_ext / two_pi};
}

ModeState lf_mode_state(const CircuitNetwork& net, const ArcModel& arc, double phi_b) {
  ModeFrequencies mf = mode_frequencies(net, phi_b);
  ArcLinewidths lw = arc_linewidths(arc, phi_b);
  return {mf.omega_lf / two_pi, lw.gamma_int / two_pi, lw.gamma_ext / two_pi};
}

FluxPointCouplings single_photon_couplings(const CircuitNetwork& net, const ArcModel& arc,
                                           double phi_b) {
  const double h = 1e-5;
  double phi_zpf = zero_point_flux(net, phi_b).phi_zpf / flux_quantum;

  auto omega_of = [&](double p) { return mode_frequencies(net, p).omega_hf; };
  auto kappa0_of = [&](double p) {
    return arc.kappa_int.eval(p) + arc.kappa_ext.eval(p);
  };
  auto kappa_ext_of = [&](double p) { return arc.kappa_ext.eval(p); };

  FluxPointCouplings g;
  g.g0_omega = -derivative_richardson(omega_of, phi_b, h) * phi_zpf;
  g.g0_kappa = -derivative_richardson(kappa0_of, phi_b, h) * phi_zpf;
  g.g0_kappa_ext = -derivative_richardson(kappa_ext_of, phi_b, h) * phi_zpf;
  return g;
}

} // namespace ppc
