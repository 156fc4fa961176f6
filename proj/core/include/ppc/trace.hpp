#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace ppc {

enum class TraceKind { lf, hf, ppit_zoom, hf_background };

std::string to_string(TraceKind k);
TraceKind trace_kind_from_string(const std::string& s);

struct TraceMeta {
  double probe_power_dbm = 0.0;
  std::optional<double> pump_freq_hz;
  std::optional<double> pump_power_dbm;
  std::optional<double> flux_phi0;
  TraceKind kind = TraceKind::hf;
};

// Probe axis in cyclic Hz (instrument-facing); values are the complex
// reflection. Frequencies must be strictly increasing; fits require at
// least 16 points.
struct ComplexTrace {
  std::vector<double> freq_hz;
  std::vector<std::complex<double>> s;
  TraceMeta meta;

  std::size_t size() const { return freq_hz.size(); }
  void validate(std::size_t min_points = 0) const;
};

} // namespace ppc
