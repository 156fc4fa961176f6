#include "ppc/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include <Eigen/Dense>

#include "ppc/backaction.hpp"
#include "ppc/constants.hpp"
#include "ppc/errors.hpp"
#include "ppc/lsq.hpp"
#include "ppc/pump.hpp"
#include "ppc/response.hpp"

namespace ppc {

namespace {

struct NormGrid {
  double wc = 0.0; // center, rad/s
  double ws = 1.0; // span, rad/s

  static NormGrid of(const std::vector<double>& omega) {
    NormGrid g;
    g.wc = 0.5 * (omega.front() + omega.back());
    g.ws = omega.back() - omega.front();
    if (!(g.ws > 0)) throw error("fit: degenerate frequency span");
    return g;
  }
  double u(double omega) const { return (omega - wc) / ws; }
  double omega(double u) const { return wc + u * ws; }
};

std::vector<double> unwrap(std::vector<double> ph) {
  for (std::size_t i = 1; i < ph.size(); ++i) {
    double d = ph[i] - ph[i - 1];
    d -= two_pi * std::round(d / two_pi);
    ph[i] = ph[i - 1] + d;
  }
  return ph;
}

// Noise level per residual component from the far-detuned quartile.
double tail_sigma(const std::vector<double>& dist, const std::vector<double>& res) {
  std::vector<std::size_t> idx(dist.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  std::size_t keep = std::max<std::size_t>(4, dist.size() / 4);
  double ss = 0.0;
  for (std::size_t k = 0; k < keep; ++k) {
    double re = res[2 * idx[k]], im = res[2 * idx[k] + 1];
    ss += re * re + im * im;
  }
  return std::sqrt(ss / (2.0 * static_cast<double>(keep)));
}

// var(h(x)) from sparse gradient rows over the internal covariance.
double var_of(const std::vector<std::pair<int, double>>& grad, const std::vector<double>& cov,
              int p) {
  double v = 0.0;
  for (const auto& [j, gj] : grad)
    for (const auto& [k, gk] : grad) v += gj * gk * cov[static_cast<std::size_t>(j * p + k)];
  return std::max(v, 0.0);
}

struct ResonanceInternal {
  NormGrid grid;
  std::vector<double> omega; // masked, rad/s
  std::vector<std::complex<double>> s;
  // parameter layout
  int iu0 = 0, ik0 = 1, ike = 2;
  int ith = -1;
  int ib0 = -1; // b0 b1 b2 f0 f1 contiguous when present
  int np = 3;
  bool theta_free = true;
  double theta_fixed = 0.0;
  bool fit_bg = true;

  std::complex<double> model(const std::vector<double>& x, double u) const {
    double k0 = std::exp(x[static_cast<std::size_t>(ik0)]);
    double ke = std::exp(x[static_cast<std::size_t>(ike)]);
    double th = theta_free ? x[static_cast<std::size_t>(ith)] : theta_fixed;
    std::complex<double> lor =
        2.0 * ke / std::complex<double>(k0, 2.0 * (u - x[static_cast<std::size_t>(iu0)]));
    std::complex<double> res = 1.0 - lor * std::polar(1.0, th);
    if (!fit_bg) return res;
    auto b = static_cast<std::size_t>(ib0);
    double amp = x[b] * (1.0 + u * (x[b + 1] + u * x[b + 2]));
    double ph = x[b + 3] + u * x[b + 4];
    return std::polar(amp, ph) * res;
  }

  residual_fn make_residuals() const {
    return [this](const std::vector<double>& x, std::vector<double>& r) {
      r.resize(2 * omega.size());
      for (std::size_t i = 0; i < omega.size(); ++i) {
        std::complex<double> d = model(x, grid.u(omega[i])) - s[i];
        r[2 * i] = d.real();
        r[2 * i + 1] = d.imag();
      }
    };
  }
};

ResonanceInternal prepare_resonance(const ComplexTrace& trace, const ResonanceFitOptions& opt) {
  trace.validate(16);
  ResonanceInternal in;
  in.theta_free = opt.theta_free;
  in.theta_fixed = opt.theta0;
  in.fit_bg = opt.fit_background;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    double f = trace.freq_hz[i];
    if (opt.mask_above_hz && f > *opt.mask_above_hz) continue;
    if (opt.exclude_window_hz && f >= opt.exclude_window_hz->first &&
        f <= opt.exclude_window_hz->second)
      continue;
    in.omega.push_back(two_pi * f);
    in.s.push_back(trace.s[i]);
  }
  if (in.omega.size() < 16) throw error("fit: fewer than 16 points after masking");
  in.grid = NormGrid::of(in.omega);

  in.np = 3;
  if (in.theta_free) in.ith = in.np++;
  if (in.fit_bg) {
    in.ib0 = in.np;
    in.np += 5;
  }
  return in;
}

std::vector<double> seed_resonance(const ResonanceInternal& in) {
  const std::size_t n = in.omega.size();
  std::vector<double> x(static_cast<std::size_t>(in.np), 0.0);

  // Outer-band background estimate.
  std::size_t edge = std::max<std::size_t>(3, n / 8);
  std::vector<double> ue, ampe, phe;
  std::vector<double> ph_all(n);
  for (std::size_t i = 0; i < n; ++i) ph_all[i] = std::arg(in.s[i]);
  ph_all = unwrap(ph_all);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= edge && i < n - edge) continue;
    ue.push_back(in.grid.u(in.omega[i]));
    ampe.push_back(std::abs(in.s[i]));
    phe.push_back(ph_all[i]);
  }
  double b0 = 1.0, b1 = 0.0, f0 = 0.0, f1 = 0.0;
  {
    // amp ~ b0 (1 + b1 u), phase ~ f0 + f1 u over the edges
    double su = 0, sa = 0, sua = 0, suu = 0, sp = 0, sup = 0;
    double m = static_cast<double>(ue.size());
    for (std::size_t i = 0; i < ue.size(); ++i) {
      su += ue[i];
      sa += ampe[i];
      sua += ue[i] * ampe[i];
      suu += ue[i] * ue[i];
      sp += phe[i];
      sup += ue[i] * phe[i];
    }
    double det = m * suu - su * su;
    if (std::abs(det) > 1e-12) {
      double a_lin = (m * sua - su * sa) / det; // d(amp)/du
      b0 = (sa - a_lin * su) / m;
      f1 = (m * sup - su * sp) / det;
      f0 = (sp - f1 * su) / m;
      if (b0 > 1e-12) b1 = a_lin / b0;
    } else {
      b0 = sa / std::max(1.0, m);
    }
    if (!(b0 > 1e-12)) b0 = 1.0;
  }

  // Divide out the seed background, locate the extremum of |S - 1|.
  std::size_t kmax = 0;
  double dmax = -1.0;
  std::complex<double> t_peak = 0.0;
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = in.grid.u(in.omega[i]);
    std::complex<double> t =
        in.s[i] / std::polar(b0 * (1.0 + b1 * u), f0 + f1 * u);
    dev[i] = std::abs(t - 1.0);
    if (dev[i] > dmax) {
      dmax = dev[i];
      kmax = i;
      t_peak = t;
    }
  }
  double u0 = in.grid.u(in.omega[kmax]);

  // FWHM of |S-1| is sqrt(3) kappa0 for an ideal dip.
  double half = 0.5 * dmax;
  double ulo = u0, uhi = u0;
  for (std::size_t i = kmax; i-- > 0;) {
    if (dev[i] < half) break;
    ulo = in.grid.u(in.omega[i]);
  }
  for (std::size_t i = kmax + 1; i < n; ++i) {
    if (dev[i] < half) break;
    uhi = in.grid.u(in.omega[i]);
  }
  double width = std::max(uhi - ulo, 2.0 / static_cast<double>(n));
  double k0n = std::clamp(width / std::sqrt(3.0), 1e-4, 2.0);
  double ken = std::clamp(0.5 * dmax * k0n, 1e-6, 2.0);

  x[static_cast<std::size_t>(in.iu0)] = u0;
  x[static_cast<std::size_t>(in.ik0)] = std::log(k0n);
  x[static_cast<std::size_t>(in.ike)] = std::log(ken);
  // Excursion direction relative to a dip: 0 for an ordinary resonance,
  // near pi for a transparency peak. Without this the free-theta fit can
  // stall in the kappa_ext -> 0 plateau on inverted features.
  if (in.theta_free) x[static_cast<std::size_t>(in.ith)] = std::arg(1.0 - t_peak);
  if (in.fit_bg) {
    auto b = static_cast<std::size_t>(in.ib0);
    x[b] = b0;
    x[b + 1] = b1;
    x[b + 2] = 0.0;
    x[b + 3] = f0;
    x[b + 4] = f1;
  }
  return x;
}

} // namespace

FitResult fit_resonance(const ComplexTrace& trace, const ResonanceFitOptions& opt) {
  ResonanceInternal in = prepare_resonance(trace, opt);
  std::vector<double> x = seed_resonance(in);
  residual_fn res = in.make_residuals();

  // Refinement with the background frozen, then the full pass.
  if (in.fit_bg) {
    auto b = static_cast<std::size_t>(in.ib0);
    std::vector<double> bg(x.begin() + static_cast<std::ptrdiff_t>(b), x.end());
    int nres = in.theta_free ? 4 : 3;
    std::vector<double> xr(x.begin(), x.begin() + nres);
    residual_fn frozen = [&](const std::vector<double>& p, std::vector<double>& r) {
      std::vector<double> full(p);
      full.insert(full.end(), bg.begin(), bg.end());
      res(full, r);
    };
    LsqOptions o2;
    o2.max_iter = 60;
    LsqResult r2 = levmar(frozen, xr, o2);
    std::copy(r2.x.begin(), r2.x.end(), x.begin());
  }

  LsqOptions o3;
  o3.max_iter = 300;
  LsqResult fin = levmar(res, x, o3);

  // Noise floor from the far-detuned quartile of the final residuals.
  std::vector<double> r_fin;
  res(fin.x, r_fin);
  std::vector<double> dist(in.omega.size());
  double u0 = fin.x[static_cast<std::size_t>(in.iu0)];
  for (std::size_t i = 0; i < in.omega.size(); ++i)
    dist[i] = std::abs(in.grid.u(in.omega[i]) - u0);
  double sigma = tail_sigma(dist, r_fin);

  const double ws = in.grid.ws, wc = in.grid.wc, c = wc / ws;
  double k0 = std::exp(fin.x[static_cast<std::size_t>(in.ik0)]);
  double ke = std::exp(fin.x[static_cast<std::size_t>(in.ike)]);

  FitResult out;
  out.converged = fin.converged;
  out.n_iter = fin.n_iter;
  out.residual_rms = fin.rms;

  auto set = [&](const std::string& key, double value,
                 const std::vector<std::pair<int, double>>& grad) {
    out.params[key] = value;
    out.stderrs[key] = sigma * std::sqrt(var_of(grad, fin.cov, in.np));
  };

  set("f0_hz", in.grid.omega(u0) / two_pi, {{in.iu0, ws / two_pi}});
  set("kappa0_hz", k0 * ws / two_pi, {{in.ik0, k0 * ws / two_pi}});
  set("kappa_ext_hz", ke * ws / two_pi, {{in.ike, ke * ws / two_pi}});
  if (in.theta_free)
    set("theta", fin.x[static_cast<std::size_t>(in.ith)], {{in.ith, 1.0}});
  else {
    out.params["theta"] = in.theta_fixed;
    out.stderrs["theta"] = 0.0;
  }

  if (in.fit_bg) {
    auto b = static_cast<std::size_t>(in.ib0);
    int ib = in.ib0;
    double b0 = fin.x[b], b1 = fin.x[b + 1], b2 = fin.x[b + 2];
    double f0 = fin.x[b + 3], f1 = fin.x[b + 4];
    set("a0", b0 * (1.0 - b1 * c + b2 * c * c),
        {{ib, 1.0 - b1 * c + b2 * c * c}, {ib + 1, -b0 * c}, {ib + 2, b0 * c * c}});
    set("a1", b0 * (b1 - 2.0 * b2 * c) / ws,
        {{ib, (b1 - 2.0 * b2 * c) / ws}, {ib + 1, b0 / ws}, {ib + 2, -2.0 * b0 * c / ws}});
    set("a2", b0 * b2 / (ws * ws), {{ib, b2 / (ws * ws)}, {ib + 2, b0 / (ws * ws)}});
    set("phi0", f0 - f1 * c, {{ib + 3, 1.0}, {ib + 4, -c}});
    set("phi1", f1 / ws, {{ib + 4, 1.0 / ws}});
  } else {
    out.params["a0"] = 1.0;
    out.params["a1"] = out.params["a2"] = out.params["phi0"] = out.params["phi1"] = 0.0;
    out.stderrs["a0"] = out.stderrs["a1"] = out.stderrs["a2"] = 0.0;
    out.stderrs["phi0"] = out.stderrs["phi1"] = 0.0;
  }

  out.degenerate = out.stderrs["kappa_ext_hz"] > out.params["kappa_ext_hz"];
  if (!fin.converged) out.note = "resonance fit did not converge";
  return out;
}

ComplexTrace background_correct(const ComplexTrace& probe, const ComplexTrace& background,
                                double theta0, double window_linewidths) {
  probe.validate(16);
  background.validate(16);
  if (probe.size() != background.size()) throw grid_mismatch("trace sizes differ");
  for (std::size_t i = 0; i < probe.size(); ++i) {
    double rel = std::abs(probe.freq_hz[i] - background.freq_hz[i]) /
                 std::max(1.0, std::abs(probe.freq_hz[i]));
    if (rel > 1e-9) throw grid_mismatch("frequency grids differ");
  }

  ComplexTrace div = probe;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    if (std::abs(background.s[i]) < 1e-300) throw error("background trace has a zero sample");
    div.s[i] = probe.s[i] / background.s[i];
  }

  ResonanceFitOptions pre;
  pre.theta_free = true;
  pre.fit_background = true;
  FitResult prefit = fit_resonance(div, pre);
  double f0 = prefit.params["f0_hz"];
  double k0 = prefit.params["kappa0_hz"];

  double lo = f0 - window_linewidths * k0;
  double hi = f0 + window_linewidths * k0;

  std::vector<std::size_t> off;
  for (std::size_t i = 0; i < div.size(); ++i)
    if (div.freq_hz[i] < lo || div.freq_hz[i] > hi) off.push_back(i);
  if (off.size() < 16) throw window_too_wide("resonance window swallows the trace");

  // Residual ripple: quadratic amplitude, linear phase over the off-window part.
  std::vector<double> omega_all(div.size());
  for (std::size_t i = 0; i < div.size(); ++i) omega_all[i] = two_pi * div.freq_hz[i];
  NormGrid grid = NormGrid::of(omega_all);

  std::vector<double> ph(div.size());
  for (std::size_t i = 0; i < div.size(); ++i) ph[i] = std::arg(div.s[i]);
  ph = unwrap(ph);

  std::vector<double> a_mat, y_amp, y_ph, w(off.size(), 1.0), a_lin;
  for (std::size_t k : off) {
    double u = grid.u(omega_all[k]);
    a_mat.insert(a_mat.end(), {1.0, u, u * u});
    a_lin.insert(a_lin.end(), {1.0, u});
    y_amp.push_back(std::abs(div.s[k]));
    y_ph.push_back(ph[k]);
  }
  LinearLsqResult amp_fit = linear_lsq(a_mat, y_amp, w, static_cast<int>(off.size()), 3);
  LinearLsqResult ph_fit = linear_lsq(a_lin, y_ph, w, static_cast<int>(off.size()), 2);

  ComplexTrace out = div;
  std::complex<double> rot = std::polar(1.0, -theta0);
  for (std::size_t i = 0; i < div.size(); ++i) {
    double u = grid.u(omega_all[i]);
    double amp = amp_fit.coeffs[0] + u * (amp_fit.coeffs[1] + u * amp_fit.coeffs[2]);
    double phase = ph_fit.coeffs[0] + u * ph_fit.coeffs[1];
    if (!(std::abs(amp) > 1e-300)) throw error("background polynomial vanished");
    std::complex<double> flat = div.s[i] / std::polar(amp, phase);
    out.s[i] = (flat - 1.0) * rot + 1.0;
  }
  return out;
}

FitResult fit_ppit(const ComplexTrace& wide, const ComplexTrace& zoom,
                   const PpitFitOptions& opt) {
  if (!zoom.meta.pump_freq_hz) throw error("ppit fit: zoom trace lacks pump frequency");
  const double omega_p = two_pi * *zoom.meta.pump_freq_hz;

  // Cavity prefit over the full wide trace. The interference window is a
  // few percent deep over a small slice of the span, so it barely moves the
  // prefit; the definitive cavity fit below excludes it.
  ResonanceFitOptions wopt;
  wopt.theta_free = false;
  wopt.theta0 = opt.theta0;
  wopt.fit_background = true;
  wopt.mask_above_hz = opt.mask_above_hz ? *opt.mask_above_hz : 8.6e9;
  FitResult wpre = fit_resonance(wide, wopt);
  BackgroundModel bg_pre;
  bg_pre.a0 = wpre.params["a0"];
  bg_pre.a1 = wpre.params["a1"];
  bg_pre.a2 = wpre.params["a2"];
  bg_pre.phi0 = wpre.params["phi0"];
  bg_pre.phi1 = wpre.params["phi1"];
  bg_pre.theta = opt.theta0;
  auto cavity_pre = [&](double f_hz) {
    return s11_single_mode(two_pi * f_hz, two_pi * wpre.params["f0_hz"],
                           two_pi * wpre.params["kappa0_hz"],
                           two_pi * wpre.params["kappa_ext_hz"], bg_pre);
  };

  // Interference window from the zoom trace divided by the cavity model:
  // the residual is a single complex Lorentzian riding on 1, which survives
  // contrasts far too weak for a direct resonance fit on the raw zoom.
  ComplexTrace zres = zoom;
  for (std::size_t i = 0; i < zoom.size(); ++i) zres.s[i] = zoom.s[i] / cavity_pre(zoom.freq_hz[i]);
  ResonanceFitOptions zopt;
  zopt.theta_free = true;
  zopt.fit_background = true;
  FitResult zfit = fit_resonance(zres, zopt);
  double f_eff = zfit.params["f0_hz"];
  double gamma_eff_hz = zfit.params["kappa0_hz"];

  double wide_span = wide.freq_hz.back() - wide.freq_hz.front();
  if (2.0 * opt.window_linewidths * gamma_eff_hz > 0.5 * wide_span)
    throw weak_signature("ppit: interference window not localized");

  // Cavity parameters with the window removed.
  wopt.exclude_window_hz = {{f_eff - opt.window_linewidths * gamma_eff_hz,
                             f_eff + opt.window_linewidths * gamma_eff_hz}};
  FitResult wfit = fit_resonance(wide, wopt);

  const double f0p = wfit.params["f0_hz"];
  const double kappa0p = two_pi * wfit.params["kappa0_hz"];
  const double kappa_extp = two_pi * wfit.params["kappa_ext_hz"];
  BackgroundModel bg;
  bg.a0 = wfit.params["a0"];
  bg.a1 = wfit.params["a1"];
  bg.a2 = wfit.params["a2"];
  bg.phi0 = wfit.params["phi0"];
  bg.phi1 = wfit.params["phi1"];
  bg.theta = opt.theta0;

  // Contrast against the cavity-only model at the window center.
  auto cavity_only = [&](double f_hz) {
    return s11_single_mode(two_pi * f_hz, two_pi * f0p, kappa0p, kappa_extp, bg);
  };
  std::size_t kc = 0;
  double best = 1e300;
  for (std::size_t i = 0; i < zoom.size(); ++i) {
    double d = std::abs(zoom.freq_hz[i] - f_eff);
    if (d < best) {
      best = d;
      kc = i;
    }
  }
  std::complex<double> contrast = zoom.s[kc] - cavity_only(zoom.freq_hz[kc]);
  // zfit residuals live in cavity-divided units; rescale to raw amplitude.
  double noise = zfit.residual_rms * std::sqrt(2.0) * std::abs(cavity_pre(zoom.freq_hz[kc]));
  if (std::abs(contrast) < opt.min_contrast_snr * noise)
    throw weak_signature("ppit: window contrast below the noise floor");

  PpitConfig cfg;
  cfg.omega_p = omega_p;
  cfg.omega0p = two_pi * f0p;
  cfg.kappa0p = kappa0p;
  cfg.kappa_extp = kappa_extp;
  cfg.omega_eff = two_pi * f_eff - omega_p;
  cfg.gamma_eff = two_pi * gamma_eff_hz;

  // Seed the couplings from the complex window contrast.
  double gs = 0.5 * std::sqrt(cfg.kappa0p * cfg.gamma_eff);
  double gw_seed = 0.5 * gs, gk_seed = -gs;
  {
    double Om = two_pi * zoom.freq_hz[kc] - omega_p;
    std::complex<double> chi_c = chi_cavity(Om, cfg.kappa0p, cfg.delta_p_primed());
    std::complex<double> chi0 = chi_lf(Om, cfg.gamma_eff, cfg.omega_eff);
    std::complex<double> denom =
        cfg.kappa_extp * chi_c * chi_c * chi0 * bg.amp_phase(two_pi * zoom.freq_hz[kc]);
    if (std::abs(denom) > 1e-300) {
      std::complex<double> gg = contrast / denom; // g_omega * (g_omega + i g_kappa / 2)
      if (gg.real() > 0.0) {
        gw_seed = std::sqrt(gg.real());
        gk_seed = 2.0 * gg.imag() / gw_seed;
      }
    }
  }
  gw_seed = std::clamp(gw_seed, 1e-3 * gs, 1e3 * gs);

  // Merged pass over wide (masked) plus zoom points. The couplings are free
  // together with the window position and width: freezing the zoom-prefit
  // window would push its error straight into the couplings.
  std::vector<double> omega_m;
  std::vector<std::complex<double>> s_m;
  for (std::size_t i = 0; i < wide.size(); ++i) {
    if (wide.freq_hz[i] > *wopt.mask_above_hz) continue;
    omega_m.push_back(two_pi * wide.freq_hz[i]);
    s_m.push_back(wide.s[i]);
  }
  for (std::size_t i = 0; i < zoom.size(); ++i) {
    omega_m.push_back(two_pi * zoom.freq_hz[i]);
    s_m.push_back(zoom.s[i]);
  }

  residual_fn res = [&](const std::vector<double>& x, std::vector<double>& r) {
    PpitConfig c = cfg;
    c.g_omega = x[0] * gs;
    c.g_kappa = x[1] * gs;
    c.omega_eff = cfg.omega_eff + x[2] * cfg.gamma_eff;
    c.gamma_eff = cfg.gamma_eff * std::exp(x[3]);
    r.resize(2 * omega_m.size());
    for (std::size_t i = 0; i < omega_m.size(); ++i) {
      std::complex<double> raw = s11_ppit(omega_m[i] - omega_p, c);
      std::complex<double> m =
          bg.amp_phase(omega_m[i]) * (1.0 + (raw - 1.0) * std::polar(1.0, bg.theta));
      std::complex<double> d = m - s_m[i];
      r[2 * i] = d.real();
      r[2 * i + 1] = d.imag();
    }
  };
  LsqOptions o;
  o.max_iter = 200;
  o.lower = {-1e300, -1e300, -3.0, -2.0};
  o.upper = {1e300, 1e300, 3.0, 2.0};
  LsqResult fin = levmar(res, {gw_seed / gs, gk_seed / gs, 0.0, 0.0}, o);

  double f_eff_fin = f_eff + fin.x[2] * cfg.gamma_eff / two_pi;
  double gamma_eff_fin = gamma_eff_hz * std::exp(fin.x[3]);

  std::vector<double> r_fin;
  res(fin.x, r_fin);
  std::vector<double> dist(omega_m.size());
  for (std::size_t i = 0; i < omega_m.size(); ++i)
    dist[i] = std::abs(omega_m[i] - two_pi * f_eff_fin);
  double sigma = tail_sigma(dist, r_fin);
  auto perr = [&](int k) { return sigma * std::sqrt(std::max(fin.cov[5 * k], 0.0)); };

  FitResult out;
  out.converged = zfit.converged && wfit.converged && fin.converged;
  out.n_iter = fin.n_iter;
  out.residual_rms = fin.rms;
  out.degenerate = wfit.degenerate;

  out.params["f0p_hz"] = f0p;
  out.stderrs["f0p_hz"] = wfit.stderrs["f0_hz"];
  out.params["kappa0p_hz"] = wfit.params["kappa0_hz"];
  out.stderrs["kappa0p_hz"] = wfit.stderrs["kappa0_hz"];
  out.params["kappa_extp_hz"] = wfit.params["kappa_ext_hz"];
  out.stderrs["kappa_extp_hz"] = wfit.stderrs["kappa_ext_hz"];
  out.params["f_eff_hz"] = f_eff_fin;
  out.stderrs["f_eff_hz"] = perr(2) * cfg.gamma_eff / two_pi;
  out.params["gamma_eff_hz"] = gamma_eff_fin;
  out.stderrs["gamma_eff_hz"] = perr(3) * gamma_eff_fin;
  out.params["g_omega_hz"] = fin.x[0] * gs / two_pi;
  out.stderrs["g_omega_hz"] = perr(0) * gs / two_pi;
  out.params["g_kappa_hz"] = fin.x[1] * gs / two_pi;
  out.stderrs["g_kappa_hz"] = perr(1) * gs / two_pi;
  if (!out.converged) out.note = "one of the ppit stages did not converge";
  return out;
}

FitResult fit_flux_arcs(const ArcData& lf_arc, const ArcData& hf_arc, double c_tot,
                        double c_sigma, const ArcFitOptions& opt) {
  if (lf_arc.phi_b.size() != lf_arc.f0_hz.size() || hf_arc.phi_b.size() != hf_arc.f0_hz.size())
    throw error("arc fit: flux/frequency size mismatch");
  if (lf_arc.phi_b.size() < 5 || hf_arc.phi_b.size() < 5)
    throw error("arc fit: need at least 5 points per arc");
  if (!(c_tot > 0) || !(c_sigma > 0)) throw invalid_geometry("arc fit: capacitances must be > 0");

  const double scale = two_pi * 1e6; // residuals in MHz-equivalent units

  // Forward model from the junction-free totals.
  auto model = [&](const std::vector<double>& v, bool lf, double phi_b, bool& ok) {
    double l = v[0], l0 = v[1], l_loop = v[2], l_lin = v[3], i0 = v[4];
    double l2 = 0.5 * (l0 - 0.16 * l_loop);
    double l1 = l - 0.5 * (0.1 * l_loop + l2);
    if (!(l1 > 0) || !(l2 > 0) || !(i0 > 0) || !(l_loop > 0) || !(l_lin >= 0)) {
      ok = false;
      return 0.0;
    }
    CircuitNetwork net;
    net.squid = {i0, l_loop, l_lin};
    net.l1 = l1;
    net.l2 = l2;
    net.c = c_tot; // placeholder split; only the totals matter here
    net.c_c = 0.0;
    net.c0 = c_sigma;
    net.c_c0 = 0.0;
    ok = true;
    try {
      ModeFrequencies mf = mode_frequencies(net, phi_b);
      return lf ? mf.omega_lf : mf.omega_hf;
    } catch (const error&) {
      ok = false;
      return 0.0;
    }
  };

  auto residuals_for = [&](const std::vector<double>& v, std::vector<double>& r) {
    r.resize(hf_arc.phi_b.size() + lf_arc.phi_b.size());
    std::size_t k = 0;
    bool ok = true;
    for (std::size_t i = 0; i < hf_arc.phi_b.size(); ++i, ++k) {
      double w = model(v, false, hf_arc.phi_b[i], ok);
      r[k] = ok ? (w - two_pi * hf_arc.f0_hz[i]) / scale : 1e6;
    }
    for (std::size_t i = 0; i < lf_arc.phi_b.size(); ++i, ++k) {
      double w = model(v, true, lf_arc.phi_b[i], ok);
      r[k] = ok ? opt.lf_weight * (w - two_pi * lf_arc.f0_hz[i]) / scale : 1e6;
    }
  };

  // Coarse grid over the weakly constrained parameters; sweet-spot
  // frequencies pin the totals for each candidate.
  double w_hf_max = two_pi * *std::max_element(hf_arc.f0_hz.begin(), hf_arc.f0_hz.end());
  double w_lf_max = two_pi * *std::max_element(lf_arc.f0_hz.begin(), lf_arc.f0_hz.end());
  double l_hf_ss = 1.0 / (w_hf_max * w_hf_max * c_tot);
  double l_lf_ss = 1.0 / (w_lf_max * w_lf_max * c_sigma);

  std::vector<double> seed;
  double best_cost = 1e300;
  for (double i0 : {1e-6, 2e-6, 3.5e-6, 6e-6, 1e-5}) {
    for (double l_loop : {8e-12, 15e-12, 21e-12, 30e-12, 45e-12}) {
      for (double l_lin : {2e-13, 6e-13, 1.5e-12, 4e-12}) {
        double lj0 = flux_quantum / (two_pi * i0);
        double lp = lj0 + l_lin + 0.1 * l_loop;
        double l = l_hf_ss - 0.5 * (lj0 + l_lin);
        double l0 = l_lf_ss - 1.6 * lp * l_loop / (2.0 * lp + 0.8 * l_loop) + 0.16 * l_loop;
        if (!(l > 0) || !(l0 > 0)) continue;
        std::vector<double> cand = {l, l0, l_loop, l_lin, i0};
        std::vector<double> r;
        residuals_for(cand, r);
        double cost = 0.0;
        for (double ri : r) cost += ri * ri;
        if (cost < best_cost) {
          best_cost = cost;
          seed = cand;
        }
      }
    }
  }
  if (seed.empty()) throw unidentifiable("arc fit: no feasible starting point");

  // Normalized parameters, all starting at 1.
  std::vector<double> seeds = seed;
  residual_fn res = [&](const std::vector<double>& x, std::vector<double>& r) {
    std::vector<double> v(5);
    for (int j = 0; j < 5; ++j)
      v[static_cast<std::size_t>(j)] =
          x[static_cast<std::size_t>(j)] * seeds[static_cast<std::size_t>(j)];
    residuals_for(v, r);
  };

  LsqOptions o;
  o.max_iter = opt.max_iter;
  o.lower.assign(5, 1e-3);
  o.upper.assign(5, 1e3);
  LsqResult fin = levmar(res, std::vector<double>(5, 1.0), o);
  if (!fin.converged) throw non_convergence("arc fit did not converge");

  std::vector<double> v(5);
  for (int j = 0; j < 5; ++j)
    v[static_cast<std::size_t>(j)] =
        fin.x[static_cast<std::size_t>(j)] * seeds[static_cast<std::size_t>(j)];

  // Identifiability at the solution: numerical Jacobian rank.
  {
    std::vector<double> r0, r1;
    res(fin.x, r0);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(r0.size()), 5);
    for (int j = 0; j < 5; ++j) {
      std::vector<double> xp = fin.x;
      double h = 1e-6 * std::max(std::abs(xp[static_cast<std::size_t>(j)]), 1.0);
      xp[static_cast<std::size_t>(j)] += h;
      res(xp, r1);
      for (std::size_t i = 0; i < r0.size(); ++i)
        jac(static_cast<Eigen::Index>(i), j) = (r1[i] - r0[i]) / h;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    qr.setThreshold(1e-10);
    if (qr.rank() < 5) throw unidentifiable("arc fit: rank-deficient Jacobian at the solution");
  }

  std::size_t m = hf_arc.phi_b.size() + lf_arc.phi_b.size();
  double sig = std::sqrt(2.0 * fin.cost / static_cast<double>(std::max<std::size_t>(m - 5, 1)));

  // Covariance of the physical values: Cov_v = S Cov_x S with S = diag(seeds).
  std::vector<double> cov_v(25);
  for (int j = 0; j < 5; ++j)
    for (int k = 0; k < 5; ++k)
      cov_v[static_cast<std::size_t>(j * 5 + k)] =
          seeds[static_cast<std::size_t>(j)] * seeds[static_cast<std::size_t>(k)] *
          fin.cov[static_cast<std::size_t>(j * 5 + k)];

  FitResult out;
  out.converged = fin.converged;
  out.n_iter = fin.n_iter;
  out.residual_rms = fin.rms;

  const char* names[5] = {"l", "l0", "l_loop", "l_lin", "i0"};
  for (int j = 0; j < 5; ++j) {
    out.params[names[j]] = v[static_cast<std::size_t>(j)];
    out.stderrs[names[j]] =
        sig * std::sqrt(std::max(cov_v[static_cast<std::size_t>(j * 5 + j)], 0.0));
  }

  auto var_from = [&](const std::vector<std::pair<int, double>>& grad) {
    double s = var_of(grad, cov_v, 5);
    return sig * std::sqrt(s);
  };
  double l2 = 0.5 * (v[1] - 0.16 * v[2]);
  double l1 = v[0] - 0.5 * (0.1 * v[2] + l2);
  double beta = 2.0 * v[4] * (v[2] + 2.0 * v[3]) / flux_quantum;
  out.params["l2"] = l2;
  out.stderrs["l2"] = var_from({{1, 0.5}, {2, -0.08}});
  out.params["l1"] = l1;
  out.stderrs["l1"] = var_from({{0, 1.0}, {1, -0.25}, {2, -0.01}});
  out.params["beta_l"] = beta;
  out.stderrs["beta_l"] = var_from({{2, 2.0 * v[4] / flux_quantum},
                                    {3, 4.0 * v[4] / flux_quantum},
                                    {4, 2.0 * (v[2] + 2.0 * v[3]) / flux_quantum}});
  return out;
}

FitResult fit_basis_series(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<double>& sigma, const std::vector<int>& exponents,
                           BasisKind kind) {
  const std::size_t m = x.size();
  const std::size_t n = exponents.size();
  if (y.size() != m) throw error("series fit: x/y size mismatch");
  if (!sigma.empty() && sigma.size() != m) throw error("series fit: sigma size mismatch");
  if (n == 0 || m < n) throw error("series fit: underdetermined");

  auto term = [&](double xi, int e) {
    switch (kind) {
      case BasisKind::plain: return std::pow(xi, e);
      case BasisKind::even: return std::pow(xi, 2 * e);
      case BasisKind::half_integer:
        if (xi < 0) throw error("series fit: negative abscissa with half-integer basis");
        return std::pow(xi, 0.5 * e);
    }
    return 0.0;
  };

  // Column scaling keeps the normal matrix well conditioned for wide
  // dynamic-range abscissae (occupations up to ~1e4).
  std::vector<double> a(m * n), colmax(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double t = term(x[i], exponents[j]);
      a[i * n + j] = t;
      colmax[j] = std::max(colmax[j], std::abs(t));
    }
  for (std::size_t j = 0; j < n; ++j)
    if (colmax[j] == 0.0) colmax[j] = 1.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= colmax[j];

  std::vector<double> w(m, 1.0);
  if (!sigma.empty())
    for (std::size_t i = 0; i < m; ++i) {
      if (!(sigma[i] > 0)) throw error("series fit: sigma must be > 0");
      w[i] = 1.0 / sigma[i];
    }

  LinearLsqResult lin = linear_lsq(a, y, w, static_cast<int>(m), static_cast<int>(n));

  double scale = 1.0;
  if (sigma.empty() && m > n) {
    double ssr = lin.rms * lin.rms * static_cast<double>(m);
    scale = std::sqrt(ssr / static_cast<double>(m - n));
  }

  FitResult out;
  out.converged = true;
  out.n_iter = 1;
  out.residual_rms = lin.rms;
  for (std::size_t j = 0; j < n; ++j) {
    std::string key = "c" + std::to_string(j);
    out.params[key] = lin.coeffs[j] / colmax[j];
    out.stderrs[key] = scale * std::sqrt(std::max(lin.cov[j * n + j], 0.0)) / colmax[j];
  }
  return out;
}

FitResult fit_lf_duffing(const ComplexTrace& trace, double probe_power_watt,
                         const DuffingFitOptions& opt) {
  trace.validate(16);
  if (!(probe_power_watt > 0)) throw error("duffing fit: probe power must be > 0");

  ResonanceFitOptions lopt;
  lopt.theta_free = false;
  lopt.theta0 = 0.0;
  lopt.fit_background = opt.fit_background;
  FitResult lin = fit_resonance(trace, lopt);

  std::vector<double> omega(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) omega[i] = two_pi * trace.freq_hz[i];
  NormGrid grid = NormGrid::of(omega);

  const double gamma0 = two_pi * lin.params["kappa0_hz"];
  const double gext0 = two_pi * lin.params["kappa_ext_hz"];
  const double u0_seed = grid.u(two_pi * lin.params["f0_hz"]);

  auto n_in_at = [&](double w) { return probe_power_watt / (hbar * w); };
  double n_res0 = 4.0 * gext0 * n_in_at(grid.wc) / (gamma0 * gamma0);
  double k_scale = 0.5 * gamma0 / std::max(n_res0, 1e-30);

  // Background seeds from the linear stage, recentred on this grid.
  double c = grid.wc, s = grid.ws;
  double amp_c = lin.params["a0"] + c * (lin.params["a1"] + c * lin.params["a2"]);
  if (!(std::abs(amp_c) > 1e-300)) amp_c = 1.0;
  double b0 = amp_c;
  double b1 = (lin.params["a1"] + 2.0 * lin.params["a2"] * c) * s / amp_c;
  double b2 = lin.params["a2"] * s * s / amp_c;
  double f0 = lin.params["phi0"] + lin.params["phi1"] * c;
  double f1 = lin.params["phi1"] * s;

  const bool fit_bg = opt.fit_background;
  int np = fit_bg ? 9 : 4;
  std::vector<double> x0 = {u0_seed, std::log(gamma0 / s), std::log(gext0 / s), 0.0};
  if (fit_bg) x0.insert(x0.end(), {b0, b1, b2, f0, f1});

  residual_fn res = [&](const std::vector<double>& x, std::vector<double>& r) {
    double w0 = grid.omega(x[0]);
    double gamma = std::exp(x[1]) * s;
    double gext = std::exp(x[2]) * s;
    double kerr = x[3] * k_scale;
    r.resize(2 * omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
      std::complex<double> m;
      try {
        DuffingResponse d = lf_duffing_response(omega[i] - w0, kerr, gamma, gext, n_in_at(omega[i]));
        m = d.s11;
      } catch (const error&) {
        r[2 * i] = r[2 * i + 1] = 1e3;
        continue;
      }
      if (fit_bg) {
        double u = grid.u(omega[i]);
        m *= std::polar(x[4] * (1.0 + u * (x[5] + u * x[6])), x[7] + u * x[8]);
      }
      std::complex<double> d = m - trace.s[i];
      r[2 * i] = d.real();
      r[2 * i + 1] = d.imag();
    }
  };

  LsqOptions o;
  o.max_iter = 300;
  LsqResult fin = levmar(res, x0, o);

  double gamma = std::exp(fin.x[1]) * s;
  double gext = std::exp(fin.x[2]) * s;
  double kerr = fin.x[3] * k_scale;

  // Peak occupation estimate, probing near the shifted resonance.
  double n0 = 0.0;
  try {
    double n_lin = 4.0 * gext * n_in_at(grid.wc) / (gamma * gamma);
    n0 = lf_duffing_response(kerr * n_lin, kerr, gamma, gext, n_in_at(grid.wc)).n_beta;
  } catch (const error&) {
    n0 = 0.0;
  }

  if (std::abs(kerr) * n0 < gamma * opt.linear_fallback) {
    FitResult out = lin;
    out.params.erase("theta");
    out.stderrs.erase("theta");
    out.params["f_eff_hz"] = lin.params["f0_hz"];
    out.stderrs["f_eff_hz"] = lin.stderrs["f0_hz"];
    out.params["gamma_eff_hz"] = lin.params["kappa0_hz"];
    out.stderrs["gamma_eff_hz"] = lin.stderrs["kappa0_hz"];
    out.params["gamma_ext_hz"] = lin.params["kappa_ext_hz"];
    out.stderrs["gamma_ext_hz"] = lin.stderrs["kappa_ext_hz"];
    out.params["kerr_lf_hz"] = 0.0;
    out.stderrs["kerr_lf_hz"] = 0.0;
    for (const char* k : {"f0_hz", "kappa0_hz", "kappa_ext_hz", "a0", "a1", "a2", "phi0", "phi1"}) {
      out.params.erase(k);
      out.stderrs.erase(k);
    }
    out.note = "cubic term unresolved; linear response reported";
    return out;
  }

  std::vector<double> r_fin;
  res(fin.x, r_fin);
  std::vector<double> dist(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) dist[i] = std::abs(grid.u(omega[i]) - fin.x[0]);
  double sigma = tail_sigma(dist, r_fin);

  FitResult out;
  out.converged = fin.converged;
  out.n_iter = fin.n_iter;
  out.residual_rms = fin.rms;
  auto set = [&](const std::string& key, double value, int j, double jac) {
    out.params[key] = value;
    out.stderrs[key] =
        sigma * std::sqrt(std::max(fin.cov[static_cast<std::size_t>(j * np + j)], 0.0)) *
        std::abs(jac);
  };
  set("f_eff_hz", grid.omega(fin.x[0]) / two_pi, 0, s / two_pi);
  set("gamma_eff_hz", gamma / two_pi, 1, gamma / two_pi);
  set("gamma_ext_hz", gext / two_pi, 2, gext / two_pi);
  set("kerr_lf_hz", kerr / two_pi, 3, k_scale / two_pi);
  if (!fin.converged) out.note = "duffing fit did not converge";
  return out;
}

FitResult fit_backaction_joint(const std::vector<BackactionObs>& points,
                               const DeviceBundle& dev) {
  if (points.size() < 8) throw error("joint fit: need at least 8 points");

  struct Pre {
    double n_c, kappa0p, delta_p_primed;
    MultiphotonRates rates;
    double gamma_obs, omega_obs, sig_g, sig_w;
  };
  std::vector<Pre> pre;
  std::size_t dropped = 0;
  for (const BackactionObs& ob : points) {
    if (!(ob.sigma_gamma > 0) || !(ob.sigma_omega > 0))
      throw error("joint fit: uncertainties must be > 0");
    PumpChainPoint ch = pump_chain_point(dev, ob.omega_p, ob.p_sg_watt);
    if (!ch.valid) {
      ++dropped;
      continue;
    }
    pre.push_back({ch.n_c, ch.kappa0p, ch.delta_p_primed, ch.rates, ob.gamma_eff, ob.omega_eff,
                   ob.sigma_gamma, ob.sigma_omega});
  }
  if (pre.size() < 4) throw non_convergence("joint fit: too few valid pump points");

  const double g_seed = std::max(dev.gamma0_op, two_pi * 1e3);
  const double w_seed = dev.omega_lf_op;
  const double w_unit = two_pi * 1e4;      // LF frequency offset unit
  const double kerr_unit = two_pi * 100.0; // per-photon units
  const double kap_unit = two_pi * 10.0;

  residual_fn res = [&](const std::vector<double>& x, std::vector<double>& r) {
    double gamma0 = x[0] * g_seed;
    double omega_lf = w_seed + x[1] * w_unit;
    NonlinearCoeffs c = dev.nonlin;
    c.cross_kerr = x[2] * kerr_unit;
    c.cross_kappa = x[3] * kap_unit;
    r.resize(2 * pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
      const Pre& p = pre[i];
      double w_pre = omega_lf + c.cross_kerr * p.n_c;
      BackactionRates ba =
          dynamical_backaction_at(p.rates, p.kappa0p, p.delta_p_primed, w_pre);
      double g_model = gamma0 + c.cross_kappa * p.n_c + ba.gamma_pp;
      double w_model = omega_lf + c.cross_kerr * p.n_c + ba.domega_pp;
      r[2 * i] = (g_model - p.gamma_obs) / p.sig_g;
      r[2 * i + 1] = (w_model - p.omega_obs) / p.sig_w;
    }
  };

  std::vector<double> x0 = {1.0, 0.0, dev.nonlin.cross_kerr / kerr_unit,
                            dev.nonlin.cross_kappa / kap_unit};
  LsqOptions o;
  o.max_iter = 300;
  LsqResult fin = levmar(res, x0, o);
  if (!fin.converged) throw non_convergence("joint backaction fit did not converge");

  FitResult out;
  out.converged = true;
  out.n_iter = fin.n_iter;
  out.residual_rms = fin.rms;
  auto set = [&](const std::string& key, double value, int j, double jac) {
    out.params[key] = value;
    out.stderrs[key] =
        std::sqrt(std::max(fin.cov[static_cast<std::size_t>(j * 4 + j)], 0.0)) * std::abs(jac);
  };
  set("gamma0_hz", fin.x[0] * g_seed / two_pi, 0, g_seed / two_pi);
  set("f_lf_hz", (w_seed + fin.x[1] * w_unit) / two_pi, 1, w_unit / two_pi);
  set("cross_kerr_hz", fin.x[2] * kerr_unit / two_pi, 2, kerr_unit / two_pi);
  set("cross_kappa_hz", fin.x[3] * kap_unit / two_pi, 3, kap_unit / two_pi);
  if (dropped > 0)
    out.note = std::to_string(dropped) + " pump points dropped (chain solver failure)";
  return out;
}

} // namespace ppc
