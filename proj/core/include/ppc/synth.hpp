#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ppc/device.hpp"
#include "ppc/trace.hpp"

namespace ppc {

// Identical spec (snr_db, seed) -> identical trace, bit for bit.
struct NoiseSpec {
  double snr_db = 30.0;
  std::uint64_t seed = 1;
};

enum class Experiment { lf, hf, ppit, duffing };

struct SynthSettings {
  double f_center_hz = 0.0;
  double f_span_hz = 0.0;
  int n_points = 0;
  double probe_power_dbm = -97.0;
  std::optional<double> phi_b;          // default: bundle operating flux
  std::optional<double> pump_freq_hz;   // ppit / duffing
  std::optional<double> pump_power_dbm; // signal-generator power
  // Saturated-resonance reference trace: instrument background only.
  bool background_only = false;
};

struct SynthOutput {
  ComplexTrace trace;
  std::string truth_json; // generating parameters; stored beside data, never inside it
};

SynthOutput synth_trace(const DeviceBundle& dev, Experiment ex, const SynthSettings& s,
                        const NoiseSpec& noise);

enum class Suite { flux_sweep, power_sweep, backaction_sweep };

// Dataset directory layout:
//   <out_dir>/manifest.json          trace table with per-trace metadata
//   <out_dir>/<name>.csv             freq_hz, re, im
//   <out_dir>/truth/<name>.json      generating parameters
struct SuiteResult {
  std::string manifest_path;
  int n_traces = 0;
};

SuiteResult synth_experiment_suite(const DeviceBundle& dev, Suite suite, const NoiseSpec& noise,
                                   const std::string& out_dir);

} // namespace ppc
