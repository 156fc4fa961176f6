#include "ppc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "ppc/backaction.hpp"
#include "ppc/constants.hpp"
#include "ppc/errors.hpp"
#include "ppc/io.hpp"
#include "ppc/numerics.hpp"
#include "ppc/response.hpp"

namespace ppc {

namespace {

using nlohmann::json;

std::vector<double> grid_of(const SynthSettings& s) {
  if (s.n_points < 2) throw error("synth: need at least 2 points");
  if (!(s.f_span_hz > 0) || !(s.f_center_hz > 0)) throw error("synth: bad grid");
  std::vector<double> f(static_cast<std::size_t>(s.n_points));
  double f0 = s.f_center_hz - 0.5 * s.f_span_hz;
  double df = s.f_span_hz / static_cast<double>(s.n_points - 1);
  for (int i = 0; i < s.n_points; ++i) f[static_cast<std::size_t>(i)] = f0 + df * i;
  return f;
}

// Effective LF parameters at one pump point, as the sweep computes them.
struct PumpedLf {
  PumpChainPoint chain;
  double gamma_eff, omega_eff;
  bool unstable;
};

PumpedLf pumped_lf(const DeviceBundle& dev, double pump_freq_hz, double pump_power_dbm) {
  PumpedLf p{};
  p.chain = pump_chain_point(dev, two_pi * pump_freq_hz, dbm_to_watt(pump_power_dbm));
  if (!p.chain.valid) throw error("synth: pump chain failed: " + p.chain.note);
  double w_pre = dev.omega_lf_op + dev.nonlin.cross_kerr * p.chain.n_c;
  BackactionRates ba = dynamical_backaction_at(p.chain.rates, p.chain.kappa0p,
                                               p.chain.delta_p_primed, w_pre);
  EffectiveLfParams eff =
      effective_lf_params(dev.gamma0_op, dev.omega_lf_op, dev.nonlin, p.chain.n_c, ba);
  p.gamma_eff = eff.gamma_eff;
  p.omega_eff = eff.omega_eff;
  p.unstable = eff.unstable;
  return p;
}

} // namespace

SynthOutput synth_trace(const DeviceBundle& dev, Experiment ex, const SynthSettings& s,
                        const NoiseSpec& noise) {
  std::vector<double> freq = grid_of(s);
  double phi_b = s.phi_b.value_or(dev.phi_b_op);

  std::vector<std::complex<double>> clean(freq.size());
  json truth;
  truth["phi_b"] = phi_b;
  truth["probe_power_dbm"] = s.probe_power_dbm;
  truth["snr_db"] = noise.snr_db;
  truth["seed"] = noise.seed;

  TraceKind kind = TraceKind::hf;

  if (s.background_only) {
    const BackgroundModel& bg =
        (ex == Experiment::lf || ex == Experiment::duffing) ? dev.background_lf
                                                            : dev.background_hf;
    for (std::size_t i = 0; i < freq.size(); ++i) clean[i] = bg.amp_phase(two_pi * freq[i]);
    kind = TraceKind::hf_background;
    truth["experiment"] = "background";
  } else if (ex == Experiment::hf) {
    ModeState m = hf_mode_state(dev.net, dev.arcs, phi_b);
    for (std::size_t i = 0; i < freq.size(); ++i)
      clean[i] = s11_single_mode(two_pi * freq[i], two_pi * m.f0, two_pi * m.k_tot(),
                                 two_pi * m.k_ext, dev.background_hf);
    kind = TraceKind::hf;
    truth["experiment"] = "hf";
    truth["f0_hz"] = m.f0;
    truth["kappa0_hz"] = m.k_tot();
    truth["kappa_int_hz"] = m.k_int;
    truth["kappa_ext_hz"] = m.k_ext;
    truth["theta"] = dev.background_hf.theta;
  } else if (ex == Experiment::lf) {
    ModeState m = lf_mode_state(dev.net, dev.arcs, phi_b);
    for (std::size_t i = 0; i < freq.size(); ++i)
      clean[i] = s11_single_mode(two_pi * freq[i], two_pi * m.f0, two_pi * m.k_tot(),
                                 two_pi * m.k_ext, dev.background_lf);
    kind = TraceKind::lf;
    truth["experiment"] = "lf";
    truth["f0_hz"] = m.f0;
    truth["gamma0_hz"] = m.k_tot();
    truth["gamma_int_hz"] = m.k_int;
    truth["gamma_ext_hz"] = m.k_ext;
  } else if (ex == Experiment::ppit) {
    if (!s.pump_freq_hz || !s.pump_power_dbm) throw error("synth: ppit needs pump settings");
    PumpedLf p = pumped_lf(dev, *s.pump_freq_hz, *s.pump_power_dbm);
    if (p.unstable) throw error("synth: operating point is parametrically unstable");

    PpitConfig cfg;
    cfg.omega_p = two_pi * *s.pump_freq_hz;
    cfg.omega0p = p.chain.omega0p;
    cfg.kappa0p = p.chain.kappa0p;
    cfg.kappa_extp = dev.arcs.kappa_ext.eval(dev.phi_b_op);
    cfg.omega_eff = p.omega_eff;
    cfg.gamma_eff = p.gamma_eff;
    cfg.g_omega = p.chain.rates.g_omega;
    cfg.g_kappa = p.chain.rates.g_kappa;

    std::complex<double> rot = std::polar(1.0, dev.background_hf.theta);
    for (std::size_t i = 0; i < freq.size(); ++i) {
      std::complex<double> raw = s11_ppit(two_pi * freq[i] - cfg.omega_p, cfg);
      clean[i] = dev.background_hf.amp_phase(two_pi * freq[i]) * (1.0 + (raw - 1.0) * rot);
    }
    // Narrow windows around the interference feature count as zooms.
    kind = s.f_span_hz < cfg.kappa0p / two_pi ? TraceKind::ppit_zoom : TraceKind::hf;
    truth["experiment"] = "ppit";
    truth["n_c"] = p.chain.n_c;
    truth["f0p_hz"] = cfg.omega0p / two_pi;
    truth["kappa0p_hz"] = cfg.kappa0p / two_pi;
    truth["kappa_extp_hz"] = cfg.kappa_extp / two_pi;
    truth["f_eff_hz"] = (cfg.omega_p + cfg.omega_eff) / two_pi;
    truth["gamma_eff_hz"] = cfg.gamma_eff / two_pi;
    truth["g_omega_hz"] = cfg.g_omega / two_pi;
    truth["g_kappa_hz"] = cfg.g_kappa / two_pi;
    truth["delta_p_primed_hz"] = p.chain.delta_p_primed / two_pi;
    truth["theta"] = dev.background_hf.theta;
  } else { // duffing
    double gamma_eff = dev.gamma0_op;
    double omega_eff = dev.omega_lf_op;
    if (s.pump_freq_hz && s.pump_power_dbm) {
      PumpedLf p = pumped_lf(dev, *s.pump_freq_hz, *s.pump_power_dbm);
      if (p.unstable) throw error("synth: operating point is parametrically unstable");
      gamma_eff = p.gamma_eff;
      omega_eff = p.omega_eff;
      truth["n_c"] = p.chain.n_c;
    }
    double gamma_ext = dev.arcs.gamma_ext;
    double p_probe = dbm_to_watt(s.probe_power_dbm);
    for (std::size_t i = 0; i < freq.size(); ++i) {
      double w = two_pi * freq[i];
      DuffingResponse d = lf_duffing_response(w - omega_eff, dev.nonlin.kerr_lf, gamma_eff,
                                              gamma_ext, p_probe / (hbar * w));
      clean[i] = dev.background_lf.amp_phase(w) * d.s11;
    }
    kind = TraceKind::lf;
    truth["experiment"] = "duffing";
    truth["f_eff_hz"] = omega_eff / two_pi;
    truth["gamma_eff_hz"] = gamma_eff / two_pi;
    truth["gamma_ext_hz"] = gamma_ext / two_pi;
    truth["kerr_lf_hz"] = dev.nonlin.kerr_lf / two_pi;
  }

  double peak = 0.0;
  for (const std::complex<double>& v : clean) peak = std::max(peak, std::abs(v));
  double sigma = peak * std::pow(10.0, -noise.snr_db / 20.0);
  truth["noise_sigma"] = sigma;

  SynthOutput out;
  out.trace.freq_hz = std::move(freq);
  out.trace.s = std::move(clean);
  rng64 rng(noise.seed);
  for (std::complex<double>& v : out.trace.s) v += sigma * rng.cnormal();

  out.trace.meta.probe_power_dbm = s.probe_power_dbm;
  out.trace.meta.pump_freq_hz = s.pump_freq_hz;
  out.trace.meta.pump_power_dbm = s.pump_power_dbm;
  out.trace.meta.flux_phi0 = phi_b;
  out.trace.meta.kind = kind;
  out.truth_json = truth.dump(2) + "\n";
  return out;
}

namespace {

struct SuiteWriter {
  std::filesystem::path dir;
  json rows = json::array();
  int count = 0;
  const NoiseSpec& base;

  SuiteWriter(const std::string& out_dir, const NoiseSpec& noise) : dir(out_dir), base(noise) {
    std::filesystem::create_directories(dir / "truth");
  }

  void add(const DeviceBundle& dev, Experiment ex, SynthSettings s, const std::string& name) {
    NoiseSpec n = base;
    n.seed = base.seed * 1000003ull + static_cast<std::uint64_t>(count);
    SynthOutput o = synth_trace(dev, ex, s, n);
    write_trace_csv((dir / (name + ".csv")).string(), o.trace);
    write_text_file((dir / "truth" / (name + ".json")).string(), o.truth_json);

    json row;
    row["name"] = name;
    row["kind"] = to_string(o.trace.meta.kind);
    row["csv"] = name + ".csv";
    row["truth"] = "truth/" + name + ".json";
    row["probe_power_dbm"] = s.probe_power_dbm;
    if (o.trace.meta.flux_phi0) row["flux_phi0"] = *o.trace.meta.flux_phi0;
    if (s.pump_freq_hz) row["pump_freq_hz"] = *s.pump_freq_hz;
    if (s.pump_power_dbm) row["pump_power_dbm"] = *s.pump_power_dbm;
    rows.push_back(row);
    ++count;
  }

  void skip(const std::string& name, const std::string& reason) {
    json row;
    row["name"] = name;
    row["skipped"] = reason;
    rows.push_back(row);
  }

  SuiteResult finish(const std::string& suite_name) {
    json manifest;
    manifest["suite"] = suite_name;
    manifest["snr_db"] = base.snr_db;
    manifest["seed"] = base.seed;
    manifest["traces"] = rows;
    std::string path = (dir / "manifest.json").string();
    write_text_file(path, manifest.dump(2) + "\n");
    return {path, count};
  }
};

std::string indexed(const char* stem, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03d", stem, i);
  return buf;
}

// Pump frequency realizing a target detuning from the dressed resonance;
// fixed-point iteration on the full chain.
double solve_pump_for_detuning(const DeviceBundle& dev, double p_dbm, double frac) {
  double omega0 = mode_frequencies(dev.net, dev.phi_b_op).omega_hf;
  double wp = omega0 - dev.omega_lf_op; // red sideband start
  for (int it = 0; it < 30; ++it) {
    PumpedLf p = pumped_lf(dev, wp / two_pi, p_dbm);
    double target = frac * 0.25 * p.chain.kappa0p;
    double delta = wp - (p.chain.omega0p - p.omega_eff);
    double err = target - delta;
    wp += err;
    if (std::abs(err) < two_pi * 1e3) break;
  }
  return wp / two_pi;
}

} // namespace

SuiteResult synth_experiment_suite(const DeviceBundle& dev, Suite suite, const NoiseSpec& noise,
                                   const std::string& out_dir) {
  SuiteWriter w(out_dir, noise);

  if (suite == Suite::flux_sweep) {
    for (int k = 0; k <= 100; ++k) {
      double phi = -0.5 + static_cast<double>(k) / 100.0;
      ModeState hf = hf_mode_state(dev.net, dev.arcs, phi);
      SynthSettings sh;
      sh.f_center_hz = hf.f0;
      sh.f_span_hz = std::max(8.0 * hf.k_tot(), 2.5e8);
      sh.n_points = 241;
      sh.phi_b = phi;
      w.add(dev, Experiment::hf, sh, indexed("flux_hf", k));

      ModeState lf = lf_mode_state(dev.net, dev.arcs, phi);
      SynthSettings sl;
      sl.f_center_hz = lf.f0;
      sl.f_span_hz = 1.0e7;
      sl.n_points = 201;
      sl.phi_b = phi;
      w.add(dev, Experiment::lf, sl, indexed("flux_lf", k));
    }
    return w.finish("flux_sweep");
  }

  if (suite == Suite::power_sweep) {
    int idx = 0;
    for (int pi_ = 0; pi_ < 7; ++pi_) {
      double p_dbm = -5.0 + pi_;
      for (int di = 0; di < 5; ++di) {
        double frac = -1.0 + 0.5 * di;
        std::string stem = indexed("pw", idx++);
        try {
          double fp = solve_pump_for_detuning(dev, p_dbm, frac);
          PumpedLf p = pumped_lf(dev, fp, p_dbm);
          if (p.unstable) {
            w.skip(stem, "parametrically unstable");
            continue;
          }
          double f0p = p.chain.omega0p / two_pi;
          double k0p = p.chain.kappa0p / two_pi;
          double feff = (two_pi * fp + p.omega_eff) / two_pi;
          double geff = p.gamma_eff / two_pi;
          double zoom_span = std::clamp(30.0 * geff, 4e6, 4e7);

          SynthSettings wide;
          wide.f_center_hz = f0p;
          wide.f_span_hz = 6.0 * k0p;
          wide.n_points = 321;
          wide.pump_freq_hz = fp;
          wide.pump_power_dbm = p_dbm;
          w.add(dev, Experiment::ppit, wide, stem + "_wide");

          SynthSettings bgw = wide;
          bgw.background_only = true;
          w.add(dev, Experiment::ppit, bgw, stem + "_wide_bg");

          SynthSettings zoom = wide;
          zoom.f_center_hz = feff;
          zoom.f_span_hz = zoom_span;
          zoom.n_points = 161;
          w.add(dev, Experiment::ppit, zoom, stem + "_zoom");

          SynthSettings bgz = zoom;
          bgz.background_only = true;
          w.add(dev, Experiment::ppit, bgz, stem + "_zoom_bg");
        } catch (const error& e) {
          w.skip(stem, e.what());
        }
      }
    }
    return w.finish("power_sweep");
  }

  // backaction_sweep
  int idx = 0;
  for (int pi_ = 0; pi_ < 7; ++pi_) {
    double p_dbm = -5.0 + pi_;
    for (int k = 0; k < 116; ++k) {
      double fp = 7.80e9 + 4e6 * k;
      std::string stem = indexed(("ba_p" + std::to_string(pi_)).c_str(), idx++);
      try {
        PumpedLf p = pumped_lf(dev, fp, p_dbm);
        if (p.unstable || p.gamma_eff < two_pi * 500.0) {
          w.skip(stem, "parametrically unstable");
          continue;
        }
        SynthSettings s;
        s.f_center_hz = p.omega_eff / two_pi;
        s.f_span_hz = std::clamp(12.0 * p.gamma_eff / two_pi, 4e6, 1.6e7);
        s.n_points = 121;
        s.pump_freq_hz = fp;
        s.pump_power_dbm = p_dbm;
        w.add(dev, Experiment::duffing, s, stem);
      } catch (const error& e) {
        w.skip(stem, e.what());
      }
    }
  }
  return w.finish("backaction_sweep");
}

} // namespace ppc
