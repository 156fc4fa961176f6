#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppc/device.hpp"
#include "ppc/trace.hpp"

namespace ppc {

// params/stderrs share keys; frequencies are cyclic Hz (keys carry _hz),
// angles radians, inductances H, currents A. stderrs come from the local
// quadratic model at the optimum with the noise variance estimated from the
// off-resonance residual tail.
struct FitResult {
  std::map<std::string, double> params;
  std::map<std::string, double> stderrs;
  double residual_rms = 0.0;
  bool converged = false;
  int n_iter = 0;
  bool degenerate = false; // resonance fits: stderr(kappa_ext) > kappa_ext
  std::string note;
};

// Normalize a probe trace against a high-power background trace:
// 1. pointwise complex division (grids must agree),
// 2. resonance located by a prefit, +-window_linewidths * kappa0 removed,
//    smooth amplitude/phase polynomial fitted to the remainder,
// 3. division by the polynomial and rotation (S - 1) e^{-i theta0} + 1.
// Throws grid_mismatch, window_too_wide (window swallows the trace).
ComplexTrace background_correct(const ComplexTrace& probe, const ComplexTrace& background,
                                double theta0, double window_linewidths = 7.5);

struct ResonanceFitOptions {
  bool theta_free = true;
  double theta0 = 0.0; // used when theta is fixed
  std::optional<double> mask_above_hz; // drop spurious-mode region
  std::optional<std::pair<double, double>> exclude_window_hz;
  // Fit the instrument background along with the resonance. Off for traces
  // that were already background-corrected.
  bool fit_background = true;
};

// Three-stage single-resonance fit: coarse location from the data, linearized
// refinement, full trust-region pass. Requires >= 16 points.
// params: f0_hz, kappa0_hz, kappa_ext_hz, theta, a0, a1, a2, phi0, phi1.
FitResult fit_resonance(const ComplexTrace& trace, const ResonanceFitOptions& opt = {});

struct PpitFitOptions {
  // Fixed resonance rotation for the embedded cavity fits. Traces are
  // expected background-corrected, hence 0 by default.
  double theta0 = 0.0;
  double window_linewidths = 7.5;      // interference window half-width, units of gamma_eff
  std::optional<double> mask_above_hz; // defaults to 8.6 GHz for hf traces
  double min_contrast_snr = 3.0;       // weak_signature threshold
};

// Wide + zoom interference fit:
// 1. wide cavity fit with the interference window removed -> f0p, kappa0p, kappa_extp
// 2. zoom local-resonance fit -> gamma_eff, f_eff
// 3. merged fit of the full model, only {g_omega, g_kappa} free.
// Requires zoom.meta.pump_freq_hz. Throws weak_signature when the window
// contrast is below min_contrast_snr times the noise floor.
// params: f0p_hz, kappa0p_hz, kappa_extp_hz, f_eff_hz, gamma_eff_hz,
//         g_omega_hz, g_kappa_hz.
FitResult fit_ppit(const ComplexTrace& wide, const ComplexTrace& zoom,
                   const PpitFitOptions& opt = {});

struct ArcData {
  std::vector<double> phi_b;  // flux_quantum units
  std::vector<double> f0_hz;  // resonance frequency per point
};

struct ArcFitOptions {
  double lf_weight = 19.0; // complex-stack weight of the LF arc
  int max_iter = 200;
};

// Simultaneous flux-arc fit of omega0(phi_b) + i * lf_weight * Omega0(phi_b)
// with {l, l0, l_loop, l_lin, i0} free and c_tot, c_sigma fixed. l, l0 are
// junction-free totals; partials follow from l2 = (l0 - 0.16 l_loop)/2,
// l1 = l - (0.1 l_loop + l2)/2. Throws unidentifiable on a rank-deficient
// Jacobian at the solution.
// params: l, l0, l_loop, l_lin, i0 (+ derived l1, l2, beta_l).
FitResult fit_flux_arcs(const ArcData& lf_arc, const ArcData& hf_arc, double c_tot,
                        double c_sigma, const ArcFitOptions& opt = {});

enum class BasisKind {
  plain,        // x^e
  even,         // x^(2e), arcs in flux
  half_integer, // x^(e/2), multiphoton series in n_c
};

// Weighted linear series fit, coefficients keyed c0..c{k-1} in exponent
// order. sigma may be empty (unit weights). Throws rank_deficient.
FitResult fit_basis_series(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& sigma, const std::vector<int>& exponents,
                           BasisKind kind);

struct DuffingFitOptions {
  bool fit_background = true;
  // Below |kerr_lf| n_beta < gamma_eff * linear_fallback the cubic term is
  // unidentifiable; the fit reports the linear result with kerr_lf = 0.
  double linear_fallback = 0.01;
};

// LF response fit with the cubic steady state; probe power sets the input
// photon rate. params: f_eff_hz, gamma_eff_hz, gamma_ext_hz, kerr_lf_hz.
FitResult fit_lf_duffing(const ComplexTrace& trace, double probe_power_watt,
                         const DuffingFitOptions& opt = {});

struct BackactionObs {
  double omega_p;     // rad/s
  double p_sg_watt;   // signal-generator power feeding the attenuation model
  double gamma_eff;   // measured, rad/s
  double omega_eff;   // measured, rad/s
  double sigma_gamma; // 1-sigma uncertainties, rad/s
  double sigma_omega;
};

// Joint weighted fit of all powers/detunings at once with
// {gamma0, f_lf, cross_kerr, cross_kappa} free and the pump/coupling chain
// taken from the bundle. params: gamma0_hz, f_lf_hz, cross_kerr_hz,
// cross_kappa_hz.
FitResult fit_backaction_joint(const std::vector<BackactionObs>& points,
                               const DeviceBundle& dev);

} // namespace ppc
