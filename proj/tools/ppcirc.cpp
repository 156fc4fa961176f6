// ppcirc: file-based front end for the photon-pressure circuit toolkit.
//
// Subcommands wrap the library into reproducible pipelines: synthetic
// dataset generation, per-trace fits, power calibration, and the full
// arcs -> couplings -> calibration -> PPIT -> backaction chain with a
// truth-vs-fit report at the end. All frequencies in files are plain Hz;
// everything is deterministic for a fixed config + seed.
//
// Exit codes: 0 success, 2 fit failure (non-convergence, validation,
// model domain), 3 I/O or parse error.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppc/backaction.hpp"
#include "ppc/circuit.hpp"
#include "ppc/constants.hpp"
#include "ppc/coupling.hpp"
#include "ppc/device.hpp"
#include "ppc/errors.hpp"
#include "ppc/fitting.hpp"
#include "ppc/io.hpp"
#include "ppc/lsq.hpp"
#include "ppc/pump.hpp"
#include "ppc/response.hpp"
#include "ppc/synth.hpp"
#include "ppc/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ppc;

namespace {

// ---------------------------------------------------------------------------
// Dataset access: manifest.json + per-trace CSV. The CSV carries no metadata,
// so the manifest row is the source of record for pump/power/flux settings.

struct TraceRef {
  std::string name, kind, csv, truth;
  double probe_power_dbm = 0.0;
  std::optional<double> flux_phi0, pump_freq_hz, pump_power_dbm;
  bool skipped = false;
};

struct Dataset {
  fs::path dir;
  std::string suite;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::vector<TraceRef> traces;
};

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  json m = json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
  ds.suite = m.at("suite").get<std::string>();
  ds.snr_db = m.at("snr_db").get<double>();
  ds.seed = m.at("seed").get<std::uint64_t>();
  for (const json& row : m.at("traces")) {
    TraceRef r;
    r.name = row.at("name").get<std::string>();
    if (row.contains("skipped")) {
      r.skipped = true;
      ds.traces.push_back(r);
      continue;
    }
    r.kind = row.at("kind").get<std::string>();
    r.csv = row.at("csv").get<std::string>();
    r.truth = row.at("truth").get<std::string>();
    r.probe_power_dbm = row.at("probe_power_dbm").get<double>();
    if (row.contains("flux_phi0")) r.flux_phi0 = row.at("flux_phi0").get<double>();
    if (row.contains("pump_freq_hz")) r.pump_freq_hz = row.at("pump_freq_hz").get<double>();
    if (row.contains("pump_power_dbm"))
      r.pump_power_dbm = row.at("pump_power_dbm").get<double>();
    ds.traces.push_back(r);
  }
  return ds;
}

ComplexTrace load_trace(const Dataset& ds, const TraceRef& r) {
  ComplexTrace t = read_trace_csv((ds.dir / r.csv).string());
  t.meta.probe_power_dbm = r.probe_power_dbm;
  t.meta.flux_phi0 = r.flux_phi0;
  t.meta.pump_freq_hz = r.pump_freq_hz;
  t.meta.pump_power_dbm = r.pump_power_dbm;
  t.meta.kind = trace_kind_from_string(r.kind);
  return t;
}

// Index-addressed parallel loop; results land in caller-owned slots, so the
// outcome is independent of the thread count.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  int nt = std::min<int>(jobs, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

json fit_json(const FitResult& fr) { return json::parse(to_json(fr)); }

// Exact paired-trace normalization: pointwise division by a measured
// background, then the rotation (S - 1) e^{-i theta0} + 1. Unlike the
// prefit-window path this needs no off-resonance tail, so it works on
// zoom traces narrower than a linewidth.
ComplexTrace normalize_by_background(const ComplexTrace& probe, const ComplexTrace& bg,
                                     double theta0) {
  if (probe.size() != bg.size()) throw grid_mismatch("background grid differs from probe");
  ComplexTrace out = probe;
  std::complex<double> rot = std::polar(1.0, -theta0);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    if (std::abs(probe.freq_hz[i] - bg.freq_hz[i]) > 1e-6 * std::abs(probe.freq_hz[i]))
      throw grid_mismatch("background grid differs from probe");
    out.s[i] = (probe.s[i] / bg.s[i] - 1.0) * rot + 1.0;
  }
  return out;
}

void write_json_file(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  write_text_file(p.string(), j.dump(2) + "\n");
}

double param(const FitResult& fr, const std::string& key) {
  auto it = fr.params.find(key);
  if (it == fr.params.end()) throw error("fit result lacks parameter " + key);
  return it->second;
}

double stderr_of(const FitResult& fr, const std::string& key, double fallback) {
  auto it = fr.stderrs.find(key);
  if (it == fr.stderrs.end() || !(it->second > 0)) return fallback;
  return it->second;
}

// ---------------------------------------------------------------------------
// Stage: flux arcs. Per-trace resonance fits over the flux sweep, then the
// simultaneous two-arc network fit and the even linewidth polynomials.

struct ArcsStage {
  FitResult network;
  CircuitNetwork net; // fitted inductances on the reference capacitances
  ArcModel arcs;
  double f_hf_op = 0, f_lf_op = 0;   // Hz, fitted model at phi_b_op
  double gamma0_op = 0;              // rad/s
  int n_hf = 0, n_lf = 0;
};

ArcsStage run_arcs_stage(const Dataset& flux, const DeviceBundle& ref, int jobs,
                         const fs::path& out) {
  std::vector<const TraceRef*> rows;
  for (const TraceRef& r : flux.traces)
    if (!r.skipped && (r.kind == "hf" || r.kind == "lf")) rows.push_back(&r);

  std::vector<FitResult> fits(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    try {
      fits[i] = fit_resonance(load_trace(flux, *rows[i]));
    } catch (const error&) {
      fits[i].converged = false;
    }
  });

  ArcData lf_arc, hf_arc;
  std::vector<double> u_hf, ki_hf, ski_hf, ke_hf, ske_hf;
  std::vector<double> u_lf, gi_lf, sgi_lf, ge_lf, sge_lf;
  std::string table = "arc,flux_phi0,f0_hz,k_int_hz,k_ext_hz\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const TraceRef& r = *rows[i];
    const FitResult& f = fits[i];
    if (!f.converged || !r.flux_phi0) continue;
    double phi = *r.flux_phi0;
    double f0 = param(f, "f0_hz");
    double ke = param(f, "kappa_ext_hz");
    double ki = param(f, "kappa0_hz") - ke;
    double ui = fold_flux(phi);
    if (r.kind == "hf") {
      hf_arc.phi_b.push_back(phi);
      hf_arc.f0_hz.push_back(f0);
      u_hf.push_back(ui);
      ki_hf.push_back(ki);
      ski_hf.push_back(stderr_of(f, "kappa0_hz", 0.02 * ki));
      ke_hf.push_back(ke);
      ske_hf.push_back(stderr_of(f, "kappa_ext_hz", 0.02 * ke));
    } else {
      lf_arc.phi_b.push_back(phi);
      lf_arc.f0_hz.push_back(f0);
      u_lf.push_back(ui);
      gi_lf.push_back(ki);
      sgi_lf.push_back(stderr_of(f, "kappa0_hz", 0.02 * ki));
      ge_lf.push_back(ke);
      sge_lf.push_back(stderr_of(f, "kappa_ext_hz", 0.02 * ke));
    }
    table += r.kind + "," + format_double(phi) + "," + format_double(f0) + "," +
             format_double(ki) + "," + format_double(ke) + "\n";
  }
  if (hf_arc.phi_b.size() < 8 || lf_arc.phi_b.size() < 8)
    throw error("arcs stage: too few converged per-trace fits");

  ArcsStage st;
  st.n_hf = static_cast<int>(hf_arc.phi_b.size());
  st.n_lf = static_cast<int>(lf_arc.phi_b.size());
  st.network = fit_flux_arcs(lf_arc, hf_arc, ref.net.c_tot(), ref.net.c_sigma());

  st.net = ref.net;
  st.net.squid.l_loop = param(st.network, "l_loop");
  st.net.squid.l_lin = param(st.network, "l_lin");
  st.net.squid.i0 = param(st.network, "i0");
  st.net.l1 = param(st.network, "l1");
  st.net.l2 = param(st.network, "l2");

  // Even sextics in the folded flux for the internal rates; the external
  // rates carry no flux dependence worth a polynomial.
  auto poly_fit = [](const std::vector<double>& u, const std::vector<double>& y,
                     const std::vector<double>& s) {
    FitResult f = fit_basis_series(u, y, s, {0, 1, 2, 3}, BasisKind::even);
    ArcPoly p;
    p.x_ss = two_pi * param(f, "c0");
    p.x2 = two_pi * param(f, "c1");
    p.x4 = two_pi * param(f, "c2");
    p.x6 = two_pi * param(f, "c3");
    return p;
  };
  auto wmean = [](const std::vector<double>& y, const std::vector<double>& s) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      double w = 1.0 / std::max(s[i] * s[i], 1e-30);
      num += w * y[i];
      den += w;
    }
    return num / den;
  };
  st.arcs.kappa_int = poly_fit(u_hf, ki_hf, ski_hf);
  st.arcs.gamma_int = poly_fit(u_lf, gi_lf, sgi_lf);
  st.arcs.kappa_ext = ArcPoly{two_pi * wmean(ke_hf, ske_hf), 0, 0, 0};
  st.arcs.gamma_ext = two_pi * wmean(ge_lf, sge_lf);

  ModeFrequencies mf = mode_frequencies(st.net, ref.phi_b_op);
  st.f_hf_op = mf.omega_hf / two_pi;
  st.f_lf_op = mf.omega_lf / two_pi;
  ArcLinewidths lw = arc_linewidths(st.arcs, ref.phi_b_op);
  st.gamma0_op = lw.gamma_int + lw.gamma_ext;

  json out_j;
  out_j["network"] = fit_json(st.network);
  out_j["net"] = json::parse(to_json(st.net));
  out_j["arcs"] = json::parse(to_json(st.arcs));
  out_j["f_hf_op_hz"] = st.f_hf_op;
  out_j["f_lf_op_hz"] = st.f_lf_op;
  out_j["gamma0_op_hz"] = st.gamma0_op / two_pi;
  out_j["n_hf_points"] = st.n_hf;
  out_j["n_lf_points"] = st.n_lf;
  write_json_file(out / "fits" / "arcs_fit.json", out_j);
  fs::create_directories(out / "tables");
  write_text_file((out / "tables" / "arc_points.csv").string(), table);
  std::printf("arcs: %d hf + %d lf points, beta_l = %.4f, converged = %d\n", st.n_hf, st.n_lf,
              param(st.network, "beta_l"), st.network.converged ? 1 : 0);
  if (!st.network.converged) throw non_convergence("arcs stage: network fit did not converge");
  return st;
}

// ---------------------------------------------------------------------------
// Stage: single-photon couplings from the fitted arcs (flux derivatives at
// the operating point times the zero-point flux).

FluxPointCouplings run_couplings_stage(const ArcsStage& a, double phi_b_op,
                                       const fs::path& out) {
  FluxPointCouplings g = single_photon_couplings(a.net, a.arcs, phi_b_op);
  ZeroPointFluctuations z = zero_point_flux(a.net, phi_b_op);
  json j;
  j["g0_omega_hz"] = g.g0_omega / two_pi;
  j["g0_kappa_hz"] = g.g0_kappa / two_pi;
  j["g0_kappa_ext_hz"] = g.g0_kappa_ext / two_pi;
  j["phi_zpf_wb"] = z.phi_zpf;
  j["i_zpf_a"] = z.i_zpf;
  write_json_file(out / "fits" / "couplings_fit.json", j);
  std::printf("couplings: g0_omega = %.2f kHz, g0_kappa = %.2f kHz\n", g.g0_omega / two_pi / 1e3,
              g.g0_kappa / two_pi / 1e3);
  return g;
}

// ---------------------------------------------------------------------------
// Stage: power calibration. Wide+zoom PPIT fits per (power, detuning) pair,
// then a joint fit of {attenuation, omega0, kappa0, K, kappa1..3} through the
// pump steady state, then the multiphoton coupling series in sqrt(n).

struct PairPoint {
  std::string name;
  double pump_freq_hz = 0, pump_power_dbm = 0;
  double f0p_hz = 0, kappa0p_hz = 0, kappa_extp_hz = 0;
  double f_eff_hz = 0, gamma_eff_hz = 0;
  double g_omega_hz = 0, g_kappa_hz = 0, sg_omega_hz = 0, sg_kappa_hz = 0;
  double sf0p_hz = 0, skappa0p_hz = 0;
  double n_c = 0; // filled after the joint fit
};

struct CalibStage {
  double atten = 0; // linear power gain (constant model)
  double omega0 = 0, kappa0 = 0, kappa_ext = 0; // rad/s
  NonlinearCoeffs nonlin;                       // kerr, kappa1..3
  FitResult series_omega, series_kappa;         // multiphoton series in sqrt(n)
  std::vector<PairPoint> pairs;
  bool converged = false;
  double residual_rms = 0;
  int n_iter = 0;
};

// The anchors (rad/s) pin the photon-number scale: the dispersive
// multiphoton rate gw = sqrt(n) (g0_omega + g0_kerr n) enters the joint fit
// with g0_omega held at the arc-derived value and g0_kerr at the device
// sheet's, which breaks the otherwise flat attenuation <-> Kerr direction.
// Neither coefficient is identifiable from the pump family itself: sqrt(n)
// and n^1.5 are collinear enough over the measured photon range that a free
// shape lets the scale slide by tens of percent.
CalibStage run_calibrate_stage(const Dataset& power, double theta0, double g0_omega_anchor,
                               double g0_kerr_anchor, int jobs, const fs::path& out) {
  // Group manifest rows into pw_### pairs.
  struct Group {
    const TraceRef *wide = nullptr, *wide_bg = nullptr, *zoom = nullptr, *zoom_bg = nullptr;
  };
  std::map<std::string, Group> groups;
  auto stem_of = [](const std::string& name, const char* suffix) {
    std::size_t n = name.size(), m = std::string(suffix).size();
    if (n > m && name.compare(n - m, m, suffix) == 0) return name.substr(0, n - m);
    return std::string();
  };
  for (const TraceRef& r : power.traces) {
    if (r.skipped) continue;
    std::string s;
    if (!(s = stem_of(r.name, "_wide_bg")).empty()) groups[s].wide_bg = &r;
    else if (!(s = stem_of(r.name, "_zoom_bg")).empty()) groups[s].zoom_bg = &r;
    else if (!(s = stem_of(r.name, "_wide")).empty()) groups[s].wide = &r;
    else if (!(s = stem_of(r.name, "_zoom")).empty()) groups[s].zoom = &r;
  }
  std::vector<std::pair<std::string, Group>> complete;
  for (const auto& [stem, g] : groups)
    if (g.wide && g.wide_bg && g.zoom && g.zoom_bg) complete.emplace_back(stem, g);
  if (complete.size() < 6) throw error("calibrate: too few complete power/detuning pairs");

  std::vector<std::optional<PairPoint>> pts(complete.size());
  parallel_for(complete.size(), jobs, [&](std::size_t i) {
    const auto& [stem, g] = complete[i];
    try {
      // Raw traces; fit_ppit absorbs the instrument background itself and
      // only needs the mismatch rotation.
      ComplexTrace wide = load_trace(power, *g.wide);
      ComplexTrace zoom = load_trace(power, *g.zoom);
      PpitFitOptions po;
      po.theta0 = theta0;
      FitResult f = fit_ppit(wide, zoom, po);
      if (!f.converged) return;
      PairPoint p;
      p.name = stem;
      p.pump_freq_hz = *g.wide->pump_freq_hz;
      p.pump_power_dbm = *g.wide->pump_power_dbm;
      p.f0p_hz = param(f, "f0p_hz");
      p.kappa0p_hz = param(f, "kappa0p_hz");
      p.kappa_extp_hz = param(f, "kappa_extp_hz");
      p.f_eff_hz = param(f, "f_eff_hz");
      p.gamma_eff_hz = param(f, "gamma_eff_hz");
      p.g_omega_hz = param(f, "g_omega_hz");
      p.g_kappa_hz = param(f, "g_kappa_hz");
      p.sg_omega_hz = stderr_of(f, "g_omega_hz", 0.05 * std::abs(p.g_omega_hz));
      p.sg_kappa_hz = stderr_of(f, "g_kappa_hz", 0.05 * std::abs(p.g_kappa_hz));
      p.sf0p_hz = stderr_of(f, "f0p_hz", 5e3);
      p.skappa0p_hz = stderr_of(f, "kappa0p_hz", 2e4);
      pts[i] = p;
    } catch (const error&) {
      // pair dropped; the joint fit runs on the survivors
    }
  });

  CalibStage st;
  for (auto& p : pts)
    if (p) st.pairs.push_back(*p);
  if (st.pairs.size() < 6) throw error("calibrate: too few converged pair fits");

  // Joint pump-family fit. The photon number of each pair comes analytically
  // from its observed pulled-line shift, so the model needs no steady-state
  // root solve and the attenuation <-> Kerr trade stays visible as an exact
  // flat direction that the anchored dispersive rate then breaks.
  std::sort(st.pairs.begin(), st.pairs.end(), [](const PairPoint& a, const PairPoint& b) {
    return a.name < b.name;
  });
  double ke_sum = 0;
  for (const PairPoint& p : st.pairs) ke_sum += p.kappa_extp_hz;
  const double kappa_ext = two_pi * ke_sum / static_cast<double>(st.pairs.size());
  st.kappa_ext = kappa_ext;
  if (!(g0_omega_anchor > 0))
    throw error("calibrate: dispersive anchor coupling must be positive");

  // Anchor photon numbers n_a = (gw / g0_omega)^2 carry the pair-fit scatter
  // but are unbiased, which is all the seeding needs.
  std::vector<double> n_anchor(st.pairs.size());
  for (std::size_t i = 0; i < st.pairs.size(); ++i) {
    double q = two_pi * std::abs(st.pairs[i].g_omega_hz) / g0_omega_anchor;
    n_anchor[i] = q * q;
  }

  // Weighted regression of kappa0'(n) on {1, 2n, 3n^2, 4n^3}, constrained
  // to the balance model's domain: nonlinear damping coefficients must be
  // nonnegative, so any column whose coefficient comes out negative is
  // dropped and the remainder refit rather than clamped.
  auto fit_damping_ladder = [](const std::vector<double>& n_c, const std::vector<double>& y,
                               const std::vector<double>& w) {
    const double S = 1e3; // kilophotons keep the polynomial columns comparable
    std::array<bool, 4> active{true, true, true, true};
    for (;;) {
      std::vector<int> cols;
      for (int j = 0; j < 4; ++j)
        if (active[static_cast<std::size_t>(j)]) cols.push_back(j);
      std::vector<double> a;
      a.reserve(n_c.size() * cols.size());
      for (double n : n_c) {
        double ns = n / S;
        std::array<double, 4> row = {1.0, 2.0 * ns, 3.0 * ns * ns, 4.0 * ns * ns * ns};
        for (int j : cols) a.push_back(row[static_cast<std::size_t>(j)]);
      }
      LinearLsqResult r =
          linear_lsq(a, y, w, static_cast<int>(n_c.size()), static_cast<int>(cols.size()));
      int worst = -1;
      double worst_val = 0.0;
      for (std::size_t k = 0; k < cols.size(); ++k)
        if (cols[k] > 0 && r.coeffs[k] < worst_val) {
          worst = cols[k];
          worst_val = r.coeffs[k];
        }
      if (worst < 0) {
        std::array<double, 4> out{};
        for (std::size_t k = 0; k < cols.size(); ++k)
          out[static_cast<std::size_t>(cols[k])] = r.coeffs[k];
        return std::array<double, 4>{out[0], out[1] / S, out[2] / (S * S),
                                     out[3] / (S * S * S)};
      }
      active[static_cast<std::size_t>(worst)] = false;
    }
  };

  // Seed the bare pump mode and Kerr from the pulled line, which to leading
  // order is w0p = w0 + 2 K n, and the linewidth ladder from its polynomial.
  double w0_seed = 0, k_seed = 0, k0_seed = 0, k1_seed = 0, k2_seed = 0, k3_seed = 0;
  {
    const double S = 1e3; // kilophotons keep the polynomial columns comparable
    std::vector<double> bw, yw, yk, wt(st.pairs.size(), 1.0);
    for (std::size_t i = 0; i < st.pairs.size(); ++i) {
      double n = n_anchor[i] / S;
      bw.insert(bw.end(), {1.0, 2.0 * n});
      yw.push_back(two_pi * st.pairs[i].f0p_hz);
      yk.push_back(two_pi * st.pairs[i].kappa0p_hz);
    }
    LinearLsqResult rw = linear_lsq(bw, yw, wt, static_cast<int>(st.pairs.size()), 2);
    w0_seed = rw.coeffs[0];
    k_seed = rw.coeffs[1] / S;
    std::array<double, 4> lad = fit_damping_ladder(n_anchor, yk, wt);
    k0_seed = lad[0];
    k1_seed = lad[1];
    k2_seed = lad[2];
    k3_seed = lad[3];
  }
  if (!(std::abs(k_seed) > two_pi * 1.0))
    throw error("calibrate: no resolvable Kerr shift across the power ladder");

  // Only {attenuation, w0, K} are free in the joint fit. The linewidth
  // ladder is exactly flat along the attenuation <-> Kerr rescale and its
  // coefficients are collinear over the measured photon range; freeing it
  // just trades scale for shape noise. It is refit linearly at the
  // resulting photon numbers and fed back.
  const double W = two_pi * 1e6, KU = two_pi * 1e3;
  double k0_f = k0_seed, k1_f = k1_seed, k2_f = k2_seed, k3_f = k3_seed;
  const double g0k_f = g0_kerr_anchor;

  // Inverts (d - dp)^2 = (dp - K n)(dp - 3 K n) - kappa_nl^2 n^2 / 4 for the
  // photon number, d being the observed pulled-line offset from w0. The
  // leading term is linear in n; the percent-level quadratic correction
  // converges in a couple of fixed-point rounds.
  auto n_of = [&](const std::vector<double>& x, const PairPoint& p) {
    double w0 = w0_seed + x[1] * W;
    double K = x[2] * KU;
    double dp = two_pi * p.pump_freq_hz - w0;
    double d = two_pi * p.f0p_hz - w0;
    double lhs = d * (2.0 * dp - d);
    double n = std::max(lhs / (4.0 * K * dp), 1e-9);
    for (int it = 0; it < 3; ++it) {
      double knl = k1_f + 2.0 * k2_f * n + 3.0 * k3_f * n * n;
      n = std::max((lhs + (3.0 * K * K - 0.25 * knl * knl) * n * n) / (4.0 * K * dp), 1e-9);
    }
    return n;
  };
  residual_fn fn = [&](const std::vector<double>& x, std::vector<double>& r) {
    double a = std::exp(x[0]);
    double w0 = w0_seed + x[1] * W;
    double K = x[2] * KU;
    r.assign(2 * st.pairs.size(), 0.0);
    for (std::size_t i = 0; i < st.pairs.size(); ++i) {
      const PairPoint& p = st.pairs[i];
      double n = n_of(x, p);
      double wp = two_pi * p.pump_freq_hz;
      double dp = wp - w0;
      double n_in = a * dbm_to_watt(p.pump_power_dbm) / (hbar * wp);
      double ke = k0_f + k1_f * n + k2_f * n * n + k3_f * n * n * n;
      double balance = ((dp - K * n) * (dp - K * n) + 0.25 * ke * ke) * n;
      double gw = std::sqrt(n) * (g0_omega_anchor + g0k_f * n);
      r[2 * i] = std::log(balance / (kappa_ext * n_in)) / 0.05;
      r[2 * i + 1] = (gw - two_pi * p.g_omega_hz) / (two_pi * std::max(p.sg_omega_hz, 50.0));
    }
  };

  // Attenuation seed from the per-pair power balance at the seed geometry.
  double a_seed;
  {
    double lna = 0;
    for (std::size_t i = 0; i < st.pairs.size(); ++i) {
      const PairPoint& p = st.pairs[i];
      double n = n_anchor[i];
      double wp = two_pi * p.pump_freq_hz;
      double dp = wp - w0_seed;
      double ke = k0_seed + k1_seed * n + k2_seed * n * n + k3_seed * n * n * n;
      double balance = ((dp - k_seed * n) * (dp - k_seed * n) + 0.25 * ke * ke) * n;
      lna += std::log(balance * hbar * wp / (kappa_ext * dbm_to_watt(p.pump_power_dbm)));
    }
    a_seed = std::exp(lna / static_cast<double>(st.pairs.size()));
  }

  // The pulled lines all sit on the Kerr-shift side of the bare mode; bound
  // w0 so the inversion never crosses a pulled line, and hold the sign of K.
  double x1_lo = -300.0, x1_hi = 300.0;
  {
    double edge = two_pi * st.pairs.front().f0p_hz;
    for (const PairPoint& p : st.pairs)
      edge = k_seed < 0 ? std::max(edge, two_pi * p.f0p_hz) : std::min(edge, two_pi * p.f0p_hz);
    if (k_seed < 0)
      x1_lo = (edge - w0_seed) / W + 0.2;
    else
      x1_hi = (edge - w0_seed) / W - 0.2;
  }

  std::vector<double> x0 = {std::log(a_seed), 0.0, k_seed / KU};
  LsqOptions lo;
  lo.max_iter = 400;
  // The weighted residuals bottom out near 1; progress below a part in 1e9
  // of the cost is noise chasing.
  lo.ftol = 1e-9;
  lo.lower = {std::log(a_seed) - 6, x1_lo, k_seed < 0 ? -1e5 : 1e-3};
  lo.upper = {std::log(a_seed) + 6, x1_hi, k_seed < 0 ? -1e-3 : 1e5};
  for (std::size_t j = 0; j < x0.size(); ++j)
    x0[j] = std::clamp(x0[j], lo.lower[j] + 1e-6, lo.upper[j] - 1e-6);

  LsqResult res;
  for (int round = 0; round < 2; ++round) {
    res = levmar(fn, x0, lo);
    for (PairPoint& p : st.pairs) p.n_c = n_of(res.x, p);
    std::vector<double> nv, yk, wk;
    for (const PairPoint& p : st.pairs) {
      nv.push_back(p.n_c);
      yk.push_back(two_pi * p.kappa0p_hz);
      wk.push_back(1.0 / (two_pi * std::max(p.skappa0p_hz, 0.005 * p.kappa0p_hz)));
    }
    std::array<double, 4> lad = fit_damping_ladder(nv, yk, wk);
    k0_f = lad[0];
    k1_f = lad[1];
    k2_f = lad[2];
    k3_f = lad[3];
    x0 = res.x;
    st.n_iter += res.n_iter;
  }

  st.atten = std::exp(res.x[0]);
  st.omega0 = w0_seed + res.x[1] * W;
  st.kappa0 = k0_f;
  st.nonlin.kerr = res.x[2] * KU;
  st.nonlin.kappa1 = k1_f;
  st.nonlin.kappa2 = k2_f;
  st.nonlin.kappa3 = k3_f;
  st.converged = res.converged;
  st.residual_rms = res.rms;

  // Multiphoton series: g_omega over {sqrt(n), sqrt(n)^3}, g_kappa over the
  // full odd ladder.
  std::vector<double> n_c, gw, sgw, gk, sgk;
  for (const PairPoint& p : st.pairs) {
    if (!(p.n_c > 0)) continue;
    n_c.push_back(p.n_c);
    gw.push_back(p.g_omega_hz);
    sgw.push_back(std::max(p.sg_omega_hz, 1.0));
    gk.push_back(p.g_kappa_hz);
    sgk.push_back(std::max(p.sg_kappa_hz, 1.0));
  }
  st.series_omega = fit_basis_series(n_c, gw, sgw, {1, 3}, BasisKind::half_integer);
  st.series_kappa = fit_basis_series(n_c, gk, sgk, {1, 3, 5, 7}, BasisKind::half_integer);

  json j;
  j["attenuation"] = st.atten;
  j["attenuation_db"] = 10.0 * std::log10(st.atten);
  j["f0_hz"] = st.omega0 / two_pi;
  j["kappa0_hz"] = st.kappa0 / two_pi;
  j["kappa_ext_hz"] = st.kappa_ext / two_pi;
  j["kerr_hz"] = st.nonlin.kerr / two_pi;
  j["kappa1_hz"] = st.nonlin.kappa1 / two_pi;
  j["kappa2_hz"] = st.nonlin.kappa2 / two_pi;
  j["kappa3_hz"] = st.nonlin.kappa3 / two_pi;
  j["converged"] = st.converged;
  j["n_iter"] = st.n_iter;
  j["residual_rms"] = st.residual_rms;
  j["series_omega"] = fit_json(st.series_omega);
  j["series_kappa"] = fit_json(st.series_kappa);
  json pairs = json::array();
  std::string table =
      "name,pump_power_dbm,pump_freq_hz,n_c,f0p_hz,kappa0p_hz,g_omega_hz,g_kappa_hz\n";
  for (const PairPoint& p : st.pairs) {
    json q;
    q["name"] = p.name;
    q["pump_power_dbm"] = p.pump_power_dbm;
    q["pump_freq_hz"] = p.pump_freq_hz;
    q["n_c"] = p.n_c;
    q["f0p_hz"] = p.f0p_hz;
    q["kappa0p_hz"] = p.kappa0p_hz;
    q["kappa_extp_hz"] = p.kappa_extp_hz;
    q["f_eff_hz"] = p.f_eff_hz;
    q["gamma_eff_hz"] = p.gamma_eff_hz;
    q["g_omega_hz"] = p.g_omega_hz;
    q["g_kappa_hz"] = p.g_kappa_hz;
    q["sf0p_hz"] = p.sf0p_hz;
    q["skappa0p_hz"] = p.skappa0p_hz;
    q["sg_omega_hz"] = p.sg_omega_hz;
    q["sg_kappa_hz"] = p.sg_kappa_hz;
    pairs.push_back(q);
    table += p.name + "," + format_double(p.pump_power_dbm) + "," +
             format_double(p.pump_freq_hz) + "," + format_double(p.n_c) + "," +
             format_double(p.f0p_hz) + "," + format_double(p.kappa0p_hz) + "," +
             format_double(p.g_omega_hz) + "," + format_double(p.g_kappa_hz) + "\n";
  }
  j["pairs"] = pairs;
  write_json_file(out / "fits" / "calib_fit.json", j);
  fs::create_directories(out / "tables");
  write_text_file((out / "tables" / "multiphoton.csv").string(), table);
  std::printf("calibrate: %zu pairs, K = %.3f kHz, attenuation = %.2f dB, converged = %d\n",
              st.pairs.size(), st.nonlin.kerr / two_pi / 1e3, 10.0 * std::log10(st.atten),
              st.converged ? 1 : 0);
  if (!st.converged) throw non_convergence("calibrate: joint pump-family fit did not converge");
  return st;
}

// ---------------------------------------------------------------------------
// Stage: PPIT interference angle table from the calibrated pairs.

void run_ppit_stage(const CalibStage& c, const fs::path& out) {
  const double n_ref = 1570.0;
  std::string table = "n_c,ratio,gamma_deg\n";
  json rows = json::array();
  for (const PairPoint& p : c.pairs) {
    double gamma = fano_angle(two_pi * p.g_omega_hz, two_pi * p.g_kappa_hz);
    json q;
    q["n_c"] = p.n_c;
    q["ratio"] = p.g_kappa_hz / p.g_omega_hz;
    q["gamma_deg"] = gamma * 180.0 / pi;
    rows.push_back(q);
    table += format_double(p.n_c) + "," + format_double(p.g_kappa_hz / p.g_omega_hz) + "," +
             format_double(gamma * 180.0 / pi) + "\n";
  }
  auto series_eval = [](const FitResult& f, const std::vector<int>& e, double n) {
    double y = 0;
    for (std::size_t i = 0; i < e.size(); ++i)
      y += param(f, "c" + std::to_string(i)) * std::pow(n, 0.5 * e[i]);
    return y;
  };
  double gw = series_eval(c.series_omega, {1, 3}, n_ref);
  double gk = series_eval(c.series_kappa, {1, 3, 5, 7}, n_ref);
  json j;
  j["n_ref"] = n_ref;
  j["ratio_at_ref"] = gk / gw;
  j["gamma_deg_at_ref"] = fano_angle(two_pi * gw, two_pi * gk) * 180.0 / pi;
  j["points"] = rows;
  write_json_file(out / "fits" / "ppit_fit.json", j);
  fs::create_directories(out / "tables");
  write_text_file((out / "tables" / "fano_vs_n.csv").string(), table);
  std::printf("ppit: gamma(%g) = %.2f deg\n", n_ref, j["gamma_deg_at_ref"].get<double>());
}

// ---------------------------------------------------------------------------
// Stage: backaction. Per-trace LF Duffing fits over the pump grid, then the
// joint {gamma0, Omega0, K_c, kappa_c} fit through the full pump chain.

struct BackactionStage {
  FitResult joint;
  int n_obs = 0;
};

BackactionStage run_backaction_stage(const Dataset& ba, const DeviceBundle& work, int jobs,
                                     const fs::path& out) {
  std::vector<const TraceRef*> rows;
  for (const TraceRef& r : ba.traces)
    if (!r.skipped && r.pump_freq_hz && r.pump_power_dbm) rows.push_back(&r);

  std::vector<std::optional<BackactionObs>> obs(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const TraceRef& r = *rows[i];
    try {
      ComplexTrace t = load_trace(ba, r);
      FitResult f = fit_lf_duffing(t, dbm_to_watt(r.probe_power_dbm));
      if (!f.converged) return;
      BackactionObs o;
      o.omega_p = two_pi * *r.pump_freq_hz;
      o.p_sg_watt = dbm_to_watt(*r.pump_power_dbm);
      o.gamma_eff = two_pi * param(f, "gamma_eff_hz");
      o.omega_eff = two_pi * param(f, "f_eff_hz");
      o.sigma_gamma = two_pi * stderr_of(f, "gamma_eff_hz", 0.02 * param(f, "gamma_eff_hz"));
      o.sigma_omega = two_pi * stderr_of(f, "f_eff_hz", 1e2);
      obs[i] = o;
    } catch (const error&) {
      // dropped; the joint fit runs on the survivors
    }
  });

  std::vector<BackactionObs> pts;
  std::string table = "pump_freq_hz,pump_power_dbm,gamma_eff_hz,f_eff_hz,sigma_gamma_hz\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!obs[i]) continue;
    pts.push_back(*obs[i]);
    table += format_double(*rows[i]->pump_freq_hz) + "," +
             format_double(*rows[i]->pump_power_dbm) + "," +
             format_double(obs[i]->gamma_eff / two_pi) + "," +
             format_double(obs[i]->omega_eff / two_pi) + "," +
             format_double(obs[i]->sigma_gamma / two_pi) + "\n";
  }

  BackactionStage st;
  st.n_obs = static_cast<int>(pts.size());
  st.joint = fit_backaction_joint(pts, work);
  json j;
  j["joint"] = fit_json(st.joint);
  j["n_obs"] = st.n_obs;
  write_json_file(out / "fits" / "backaction_fit.json", j);
  fs::create_directories(out / "tables");
  write_text_file((out / "tables" / "backaction_points.csv").string(), table);
  std::printf("backaction: %d observations, K_c = %.1f Hz, kappa_c = %.1f Hz, converged = %d\n",
              st.n_obs, param(st.joint, "cross_kerr_hz"), param(st.joint, "cross_kappa_hz"),
              st.joint.converged ? 1 : 0);
  if (!st.joint.converged)
    throw non_convergence("backaction stage: joint fit did not converge");
  return st;
}

// ---------------------------------------------------------------------------
// Stage: report. Reads the per-stage fit files back from disk (shared with
// the standalone `report` subcommand) and emits the truth-vs-fit table.
// No paths or timestamps inside, so equal runs produce equal bytes.

struct ReportRow {
  std::string name;
  double fitted = 0, truth = 0, tol = 0;
};

void run_report_stage(const fs::path& fits_dir, const DeviceBundle& ref,
                      const std::map<std::string, double>& tol_override, const fs::path& out) {
  json arcs = json::parse(read_text_file((fits_dir / "arcs_fit.json").string()));
  json coup = json::parse(read_text_file((fits_dir / "couplings_fit.json").string()));
  json calib = json::parse(read_text_file((fits_dir / "calib_fit.json").string()));
  json ppit = json::parse(read_text_file((fits_dir / "ppit_fit.json").string()));
  json ba = json::parse(read_text_file((fits_dir / "backaction_fit.json").string()));

  auto tol = [&](const std::string& name, double dflt) {
    auto it = tol_override.find(name);
    return it == tol_override.end() ? dflt : it->second;
  };
  std::vector<ReportRow> rows;
  auto add = [&](const std::string& name, double fitted, double truth, double dflt_tol) {
    rows.push_back({name, fitted, truth, tol(name, dflt_tol)});
  };

  const json& netp = arcs["network"]["params"];
  add("l_loop", netp["l_loop"].get<double>(), ref.net.squid.l_loop, 0.05);
  add("l_lin", netp["l_lin"].get<double>(), ref.net.squid.l_lin, 0.05);
  add("i0", netp["i0"].get<double>(), ref.net.squid.i0, 0.05);
  add("l1", netp["l1"].get<double>(), ref.net.l1, 0.05);
  add("l2", netp["l2"].get<double>(), ref.net.l2, 0.05);

  ModeFrequencies mf = mode_frequencies(ref.net, ref.phi_b_op);
  add("f_hf_op_hz", arcs["f_hf_op_hz"].get<double>(), mf.omega_hf / two_pi, 1e-3);
  add("f_lf_op_hz", arcs["f_lf_op_hz"].get<double>(), mf.omega_lf / two_pi, 1e-3);
  add("gamma0_op_hz", arcs["gamma0_op_hz"].get<double>(), ref.gamma0_op / two_pi, 0.10);

  add("g0_omega_hz", coup["g0_omega_hz"].get<double>(), ref.couplings.g0_omega / two_pi, 0.05);
  add("g0_kappa_hz", coup["g0_kappa_hz"].get<double>(), ref.couplings.g0_kappa / two_pi, 0.05);

  add("attenuation", calib["attenuation"].get<double>(),
      ref.attenuation.eval(mf.omega_hf - two_pi * arcs["f_lf_op_hz"].get<double>()), 0.10);
  add("pump_f0_hz", calib["f0_hz"].get<double>(), mf.omega_hf / two_pi, 1e-3);
  add("kerr_hz", calib["kerr_hz"].get<double>(), ref.nonlin.kerr / two_pi, 0.10);

  // Individual ladder and dissipative-series coefficients are collinear over
  // the measured photon range; only the curve values inside that range are
  // identified, so those are what the report scores.
  {
    auto k0p_fit = [&](double n) {
      return calib["kappa0_hz"].get<double>() + 2.0 * calib["kappa1_hz"].get<double>() * n +
             3.0 * calib["kappa2_hz"].get<double>() * n * n +
             4.0 * calib["kappa3_hz"].get<double>() * n * n * n;
    };
    auto k0p_truth = [&](double n) {
      return (ref.kappa0_pump + 2.0 * ref.nonlin.kappa1 * n + 3.0 * ref.nonlin.kappa2 * n * n +
              4.0 * ref.nonlin.kappa3 * n * n * n) / two_pi;
    };
    for (double n : {500.0, 1000.0, 2000.0})
      add("kappa0p_at_" + std::to_string(static_cast<int>(n)) + "_hz", k0p_fit(n),
          k0p_truth(n), 0.02);
  }
  const json& sw = calib["series_omega"];
  const json& sk = calib["series_kappa"];
  {
    auto gk_fit = [&](double n) {
      const json& p = sk["params"];
      return p["c0"].get<double>() * std::sqrt(n) + p["c1"].get<double>() * std::pow(n, 1.5) +
             p["c2"].get<double>() * std::pow(n, 2.5) + p["c3"].get<double>() * std::pow(n, 3.5);
    };
    auto gk_truth = [&](double n) {
      return (ref.couplings.g0_kappa * std::sqrt(n) + ref.couplings.g_nl1 * std::pow(n, 1.5) +
              ref.couplings.g_nl2 * std::pow(n, 2.5) + ref.couplings.g_nl3 * std::pow(n, 3.5)) /
             two_pi;
    };
    for (double n : {600.0, 1600.0})
      add("g_kappa_at_" + std::to_string(static_cast<int>(n)) + "_hz", gk_fit(n), gk_truth(n),
          0.05);
  }
  add("series_g0_omega_hz", sw["params"]["c0"].get<double>(),
      ref.couplings.g0_omega / two_pi, 0.10);
  add("series_g0_kerr_hz", sw["params"]["c1"].get<double>(), ref.couplings.g0_kerr / two_pi,
      0.50);

  {
    MultiphotonRates r = multiphoton_rates(ref.couplings, ppit["n_ref"].get<double>());
    double truth_deg = fano_angle(r) * 180.0 / pi;
    // Angle rows compare absolutely, one-degree scale folded into tol.
    double fitted_deg = ppit["gamma_deg_at_ref"].get<double>();
    rows.push_back({"fano_deg_at_ref", fitted_deg, truth_deg, tol("fano_deg_at_ref", 1.0) /
                        std::max(std::abs(truth_deg), 1.0)});
  }

  const json& bj = ba["joint"]["params"];
  add("gamma0_hz", bj["gamma0_hz"].get<double>(), ref.gamma0_op / two_pi, 0.10);
  add("f_lf_hz", bj["f_lf_hz"].get<double>(), ref.omega_lf_op / two_pi, 1e-4);
  add("cross_kerr_hz", bj["cross_kerr_hz"].get<double>(), ref.nonlin.cross_kerr / two_pi, 0.15);
  add("cross_kappa_hz", bj["cross_kappa_hz"].get<double>(), ref.nonlin.cross_kappa / two_pi,
      0.15);

  std::string csv = "param,fitted,truth,rel_err,tol,score,ok\n";
  json jrows = json::array();
  int n_ok = 0;
  for (const ReportRow& r : rows) {
    double rel = std::abs(r.fitted - r.truth) / std::max(std::abs(r.truth), 1e-300);
    double score = rel / r.tol;
    bool ok = score <= 1.0;
    n_ok += ok ? 1 : 0;
    csv += r.name + "," + format_double(r.fitted) + "," + format_double(r.truth) + "," +
           format_double(rel) + "," + format_double(r.tol) + "," + format_double(score) + "," +
           (ok ? "1" : "0") + "\n";
    json q;
    q["param"] = r.name;
    q["fitted"] = r.fitted;
    q["truth"] = r.truth;
    q["rel_err"] = rel;
    q["tol"] = r.tol;
    q["score"] = score;
    q["ok"] = ok;
    jrows.push_back(q);
  }
  json j;
  j["rows"] = jrows;
  j["n_rows"] = rows.size();
  j["n_ok"] = n_ok;
  fs::create_directories(out / "report");
  write_text_file((out / "report" / "report.csv").string(), csv);
  write_json_file(out / "report" / "report.json", j);
  std::printf("report: %d/%zu rows within tolerance\n", n_ok, rows.size());
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

struct CommonOpts {
  std::string config, out;
  std::uint64_t seed = 1;
  double snr_db = 30.0;
  double theta0 = 0.08;
  int jobs = 1;
};

DeviceBundle load_bundle(const std::string& path) {
  if (path.empty()) throw io_error("missing --config");
  return bundle_from_json(read_text_file(path));
}

int cmd_synth(const CommonOpts& o, const std::string& suite) {
  DeviceBundle dev = load_bundle(o.config);
  NoiseSpec noise{o.snr_db, o.seed};
  fs::path out = o.out.empty() ? fs::path("synth_out") : fs::path(o.out);
  auto one = [&](Suite s, const char* name, std::uint64_t seed_shift) {
    NoiseSpec n = noise;
    n.seed = noise.seed + seed_shift;
    SuiteResult r = synth_experiment_suite(dev, s, n, (out / name).string());
    std::printf("synth %s: %d traces -> %s\n", name, r.n_traces, r.manifest_path.c_str());
  };
  if (suite == "flux" || suite == "all") one(Suite::flux_sweep, "flux_sweep", 0);
  if (suite == "power" || suite == "all") one(Suite::power_sweep, "power_sweep", 1);
  if (suite == "backaction" || suite == "all") one(Suite::backaction_sweep, "backaction_sweep", 2);
  return 0;
}

void emit_fit(const FitResult& fr, const std::string& out_path) {
  std::string text = to_json(fr);
  if (out_path.empty())
    std::fputs((text + "\n").c_str(), stdout);
  else
    write_text_file(out_path, text + "\n");
}

int fit_exit(const FitResult& fr) {
  if (!fr.converged) {
    std::fprintf(stderr, "fit did not converge: %s\n", fr.note.c_str());
    return 2;
  }
  return 0;
}

int cmd_fit_resonance(const CommonOpts& o, const std::string& trace_path,
                      const std::string& bg_path, bool theta_fixed) {
  ComplexTrace t = read_trace_csv(trace_path);
  ResonanceFitOptions opt;
  if (!bg_path.empty()) {
    t = normalize_by_background(t, read_trace_csv(bg_path), o.theta0);
    opt.theta_free = false;
    opt.fit_background = false;
  } else if (theta_fixed) {
    opt.theta_free = false;
    opt.theta0 = o.theta0;
  }
  FitResult fr = fit_resonance(t, opt);
  emit_fit(fr, o.out);
  return fit_exit(fr);
}

int cmd_fit_ppit(const CommonOpts& o, const std::string& wide_path, const std::string& zoom_path,
                 double pump_freq_hz, const std::string& bgw_path, const std::string& bgz_path) {
  ComplexTrace wide = read_trace_csv(wide_path);
  ComplexTrace zoom = read_trace_csv(zoom_path);
  PpitFitOptions opt;
  opt.theta0 = o.theta0; // raw traces carry the mismatch rotation
  if (!bgw_path.empty()) {
    wide = normalize_by_background(wide, read_trace_csv(bgw_path), o.theta0);
    opt.theta0 = 0.0;
  }
  if (!bgz_path.empty()) zoom = normalize_by_background(zoom, read_trace_csv(bgz_path), o.theta0);
  wide.meta.pump_freq_hz = pump_freq_hz;
  zoom.meta.pump_freq_hz = pump_freq_hz;
  zoom.meta.kind = TraceKind::ppit_zoom;
  FitResult fr = fit_ppit(wide, zoom, opt);
  emit_fit(fr, o.out);
  return fit_exit(fr);
}

int cmd_fit_duffing(const CommonOpts& o, const std::string& trace_path, double probe_dbm) {
  ComplexTrace t = read_trace_csv(trace_path);
  FitResult fr = fit_lf_duffing(t, dbm_to_watt(probe_dbm));
  emit_fit(fr, o.out);
  return fit_exit(fr);
}

int cmd_fit_arcs(const CommonOpts& o, const std::string& dataset) {
  DeviceBundle ref = load_bundle(o.config);
  Dataset ds = load_dataset(dataset);
  fs::path out = o.out.empty() ? fs::path(dataset) : fs::path(o.out);
  run_arcs_stage(ds, ref, o.jobs, out);
  return 0;
}

int cmd_calibrate(const CommonOpts& o, const std::string& dataset) {
  DeviceBundle ref = load_bundle(o.config);
  Dataset ds = load_dataset(dataset);
  fs::path out = o.out.empty() ? fs::path(dataset) : fs::path(o.out);
  run_calibrate_stage(ds, ref.theta0, ref.couplings.g0_omega, ref.couplings.g0_kerr,
                      o.jobs, out);
  return 0;
}

int cmd_backaction(const CommonOpts& o, double power_dbm, double fmin_hz, double fmax_hz,
                   int points) {
  DeviceBundle dev = load_bundle(o.config);
  std::vector<double> wp(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    wp[static_cast<std::size_t>(i)] =
        two_pi * (fmin_hz + (fmax_hz - fmin_hz) * i / std::max(points - 1, 1));
  std::string csv = backaction_csv(backaction_sweep(dev, wp, dbm_to_watt(power_dbm)));
  if (o.out.empty())
    std::fputs(csv.c_str(), stdout);
  else
    write_text_file(o.out, csv);
  return 0;
}

int cmd_fit_backaction(const CommonOpts& o, const std::string& dataset) {
  DeviceBundle work = load_bundle(o.config);
  Dataset ds = load_dataset(dataset);
  fs::path out = o.out.empty() ? fs::path(dataset) : fs::path(o.out);
  BackactionStage st = run_backaction_stage(ds, work, o.jobs, out);
  return st.joint.converged ? 0 : 2;
}

int cmd_convert(const std::string& in_path, const std::string& out_path) {
  ConvertResult r = convert_trace_file(in_path, out_path);
  std::printf("wrote %s and %s\n", r.csv_path.c_str(), r.meta_path.c_str());
  return 0;
}

std::map<std::string, double> parse_tolerances(const json& cfg) {
  std::map<std::string, double> t;
  if (cfg.contains("tolerances"))
    for (const auto& [k, v] : cfg.at("tolerances").items()) t[k] = v.get<double>();
  return t;
}

int cmd_report(const CommonOpts& o, const std::string& fits_dir, const std::string& truth_path) {
  DeviceBundle ref = load_bundle(truth_path.empty() ? o.config : truth_path);
  fs::path out = o.out.empty() ? fs::path(fits_dir).parent_path() : fs::path(o.out);
  run_report_stage(fits_dir, ref, {}, out);
  return 0;
}

// Full chain on one dataset directory. Stage toggles come from the pipeline
// config; disabled stages must already have their outputs on disk.
int cmd_pipeline(const CommonOpts& o) {
  if (o.config.empty()) throw io_error("pipeline: missing --config");
  json cfg = json::parse(read_text_file(o.config));
  std::string device_path = cfg.at("device").get<std::string>();
  {
    // Relative device paths resolve against the config file.
    fs::path p(device_path);
    if (p.is_relative()) device_path = (fs::path(o.config).parent_path() / p).string();
  }
  DeviceBundle ref = bundle_from_json(read_text_file(device_path));

  fs::path out = !o.out.empty() ? fs::path(o.out)
                                : fs::path(cfg.value("out", std::string("pipeline_out")));
  std::uint64_t seed = cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : o.seed;
  double snr_db = cfg.value("snr_db", o.snr_db);
  double theta0 = cfg.value("theta0", ref.theta0);
  auto stage_on = [&](const char* name) {
    return !cfg.contains("stages") || cfg.at("stages").value(name, true);
  };

  fs::path data = cfg.contains("data_dir")
                      ? fs::path(cfg.at("data_dir").get<std::string>())
                      : out / "data";
  if (stage_on("synth")) {
    NoiseSpec noise{snr_db, seed};
    for (auto [suite, name, shift] :
         {std::tuple{Suite::flux_sweep, "flux_sweep", 0u}, {Suite::power_sweep, "power_sweep", 1u},
          {Suite::backaction_sweep, "backaction_sweep", 2u}}) {
      NoiseSpec n = noise;
      n.seed = noise.seed + shift;
      SuiteResult r = synth_experiment_suite(ref, suite, n, (data / name).string());
      std::printf("synth %s: %d traces\n", name, r.n_traces);
    }
  }

  ArcsStage arcs;
  if (stage_on("arcs"))
    arcs = run_arcs_stage(load_dataset((data / "flux_sweep").string()), ref, o.jobs, out);
  else {
    json a = json::parse(read_text_file((out / "fits" / "arcs_fit.json").string()));
    arcs.net = network_from_json(a.at("net").dump());
    arcs.arcs = arc_model_from_json(a.at("arcs").dump());
    arcs.f_hf_op = a.at("f_hf_op_hz").get<double>();
    arcs.f_lf_op = a.at("f_lf_op_hz").get<double>();
    arcs.gamma0_op = two_pi * a.at("gamma0_op_hz").get<double>();
  }

  FluxPointCouplings coup;
  if (stage_on("couplings"))
    coup = run_couplings_stage(arcs, ref.phi_b_op, out);
  else {
    json c = json::parse(read_text_file((out / "fits" / "couplings_fit.json").string()));
    coup.g0_omega = two_pi * c.at("g0_omega_hz").get<double>();
    coup.g0_kappa = two_pi * c.at("g0_kappa_hz").get<double>();
    coup.g0_kappa_ext = two_pi * c.at("g0_kappa_ext_hz").get<double>();
  }

  CalibStage calib;
  if (stage_on("calibrate"))
    calib = run_calibrate_stage(load_dataset((data / "power_sweep").string()), theta0,
                                coup.g0_omega, ref.couplings.g0_kerr, o.jobs, out);
  else {
    json c = json::parse(read_text_file((out / "fits" / "calib_fit.json").string()));
    calib.atten = c.at("attenuation").get<double>();
    calib.omega0 = two_pi * c.at("f0_hz").get<double>();
    calib.kappa0 = two_pi * c.at("kappa0_hz").get<double>();
    calib.kappa_ext = two_pi * c.at("kappa_ext_hz").get<double>();
    calib.nonlin.kerr = two_pi * c.at("kerr_hz").get<double>();
    calib.nonlin.kappa1 = two_pi * c.at("kappa1_hz").get<double>();
    calib.nonlin.kappa2 = two_pi * c.at("kappa2_hz").get<double>();
    calib.nonlin.kappa3 = two_pi * c.at("kappa3_hz").get<double>();
    calib.series_omega =
        fit_result_from_json(c.at("series_omega").dump());
    calib.series_kappa = fit_result_from_json(c.at("series_kappa").dump());
  }

  if (stage_on("ppit")) run_ppit_stage(calib, out);

  if (stage_on("backaction")) {
    // Working bundle assembled from fitted stages only; the reference
    // contributes fabrication constants (capacitances, probe settings).
    DeviceBundle work = ref;
    work.net = arcs.net;
    work.arcs = arcs.arcs;
    work.gamma0_op = arcs.gamma0_op;
    work.omega_lf_op = two_pi * arcs.f_lf_op;
    work.kappa0_pump = calib.kappa0;
    work.nonlin.kerr = calib.nonlin.kerr;
    work.nonlin.kappa1 = calib.nonlin.kappa1;
    work.nonlin.kappa2 = calib.nonlin.kappa2;
    work.nonlin.kappa3 = calib.nonlin.kappa3;
    work.nonlin.cross_kerr = 0;
    work.nonlin.cross_kappa = 0;
    work.couplings.g0_omega = two_pi * param(calib.series_omega, "c0");
    work.couplings.g0_kerr = two_pi * param(calib.series_omega, "c1");
    work.couplings.g0_kappa = two_pi * param(calib.series_kappa, "c0");
    work.couplings.g_nl1 = two_pi * param(calib.series_kappa, "c1");
    work.couplings.g_nl2 = two_pi * param(calib.series_kappa, "c2");
    work.couplings.g_nl3 = two_pi * param(calib.series_kappa, "c3");
    work.couplings.g0_kappa_ext = coup.g0_kappa_ext;
    work.attenuation.coeffs_fghz = {calib.atten, 0, 0, 0, 0};
    run_backaction_stage(load_dataset((data / "backaction_sweep").string()), work, o.jobs, out);
  }

  if (stage_on("report")) run_report_stage(out / "fits", ref, parse_tolerances(cfg), out);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"photon-pressure circuit toolkit"};
  app.require_subcommand(1);

  CommonOpts o;
  std::function<int()> task;

  auto add_common = [&](CLI::App* c, bool with_seed = false) {
    c->add_option("--config", o.config, "device bundle (pipeline: pipeline config) JSON");
    c->add_option("--out", o.out, "output file or directory");
    c->add_option("--theta0", o.theta0, "impedance-mismatch rotation, rad")
        ->default_val(0.08);
    c->add_option("--jobs", o.jobs, "parallel fit workers")->default_val(1);
    if (with_seed) {
      c->add_option("--seed", o.seed, "RNG seed")->default_val(1);
      c->add_option("--snr-db", o.snr_db, "trace signal-to-noise, dB")->default_val(30.0);
    }
  };

  {
    auto* c = app.add_subcommand("synth", "generate a synthetic experiment suite");
    add_common(c, true);
    static std::string suite = "all";
    c->add_option("--suite", suite, "flux | power | backaction | all")
        ->check(CLI::IsMember({"flux", "power", "backaction", "all"}));
    c->callback([&] { task = [&] { return cmd_synth(o, suite); }; });
  }
  {
    auto* c = app.add_subcommand("fit-resonance", "single-resonance reflection fit");
    add_common(c);
    static std::string trace, bg;
    static bool theta_fixed = false;
    c->add_option("trace", trace, "trace CSV")->required();
    c->add_option("--background", bg, "paired background trace CSV");
    c->add_flag("--theta-fixed", theta_fixed, "fix theta at --theta0 instead of fitting it");
    c->callback([&] { task = [&] { return cmd_fit_resonance(o, trace, bg, theta_fixed); }; });
  }
  {
    auto* c = app.add_subcommand("fit-ppit", "wide+zoom interference-window fit");
    add_common(c);
    static std::string wide, zoom, bgw, bgz;
    static double pump_hz = 0;
    c->add_option("wide", wide, "wide trace CSV")->required();
    c->add_option("zoom", zoom, "zoom trace CSV")->required();
    c->add_option("--pump-freq-hz", pump_hz, "pump frequency, Hz")->required();
    c->add_option("--background-wide", bgw, "background for the wide trace");
    c->add_option("--background-zoom", bgz, "background for the zoom trace");
    c->callback([&] { task = [&] { return cmd_fit_ppit(o, wide, zoom, pump_hz, bgw, bgz); }; });
  }
  {
    auto* c = app.add_subcommand("fit-arcs", "flux-arc network fit over a flux_sweep dataset");
    add_common(c);
    static std::string dataset;
    c->add_option("dataset", dataset, "flux_sweep dataset directory")->required();
    c->callback([&] { task = [&] { return cmd_fit_arcs(o, dataset); }; });
  }
  {
    auto* c = app.add_subcommand("fit-duffing", "LF Duffing response fit");
    add_common(c);
    static std::string trace;
    static double probe_dbm = -97.0;
    c->add_option("trace", trace, "trace CSV")->required();
    c->add_option("--probe-dbm", probe_dbm, "probe power at the device, dBm");
    c->callback([&] { task = [&] { return cmd_fit_duffing(o, trace, probe_dbm); }; });
  }
  {
    auto* c = app.add_subcommand("calibrate",
                                 "photon-number + attenuation calibration on a power_sweep");
    add_common(c);
    static std::string dataset;
    c->add_option("dataset", dataset, "power_sweep dataset directory")->required();
    c->callback([&] { task = [&] { return cmd_calibrate(o, dataset); }; });
  }
  {
    auto* c = app.add_subcommand("backaction", "forward dynamical-backaction sweep");
    add_common(c);
    static double p_dbm = 1.0, fmin = 7.80e9, fmax = 8.33e9;
    static int points = 213;
    c->add_option("--power-dbm", p_dbm, "signal-generator power, dBm");
    c->add_option("--fmin-hz", fmin, "sweep start, Hz");
    c->add_option("--fmax-hz", fmax, "sweep end, Hz");
    c->add_option("--points", points, "sweep points");
    c->callback([&] { task = [&] { return cmd_backaction(o, p_dbm, fmin, fmax, points); }; });
  }
  {
    auto* c = app.add_subcommand("fit-backaction",
                                 "joint backaction fit over a backaction_sweep dataset");
    add_common(c);
    static std::string dataset;
    c->add_option("dataset", dataset, "backaction_sweep dataset directory")->required();
    c->callback([&] { task = [&] { return cmd_fit_backaction(o, dataset); }; });
  }
  {
    auto* c = app.add_subcommand("pipeline", "full arcs->couplings->calibrate->ppit->backaction"
                                             " chain with report");
    add_common(c, true);
    c->callback([&] { task = [&] { return cmd_pipeline(o); }; });
  }
  {
    auto* c = app.add_subcommand("report", "truth-vs-fit comparison table from stage outputs");
    add_common(c);
    static std::string fits, truth;
    c->add_option("fits", fits, "directory holding the stage fit JSONs")->required();
    c->add_option("--truth", truth, "truth device bundle JSON");
    c->callback([&] { task = [&] { return cmd_report(o, fits, truth); }; });
  }
  {
    auto* c = app.add_subcommand("convert", "normalize a trace file to CSV + metadata sidecar");
    static std::string in, out_csv;
    c->add_option("input", in, "CSV or one-port touchstone file")->required();
    c->add_option("output", out_csv, "output CSV path")->required();
    c->callback([&] { task = [&] { return cmd_convert(in, out_csv); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    return task ? task() : 0;
  } catch (const parse_error& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 3;
  } catch (const io_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
