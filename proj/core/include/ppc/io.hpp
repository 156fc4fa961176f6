#pragma once

#include <string>
#include <vector>

#include "ppc/backaction.hpp"
#include "ppc/device.hpp"
#include "ppc/fitting.hpp"
#include "ppc/trace.hpp"

namespace ppc {

// All file frequencies are plain Hz. Numeric fields are written with
// 17-significant-digit round-trip formatting so identical inputs produce
// byte-identical files.

std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// CSV traces: header "freq_hz,re,im".
ComplexTrace read_trace_csv(const std::string& path);
void write_trace_csv(const std::string& path, const ComplexTrace& trace);

// Backaction sweep table, columns:
// omega_p_hz, n_c, gamma_pp_hz, domega_pp_hz, gamma_eff_hz, omega_eff_hz, unstable
std::string backaction_csv(const std::vector<BackactionPoint>& points);

// JSON codecs. Field names match the struct fields; SI units; flux in
// flux_quantum units; rates stored as cyclic Hz with _hz suffix.
std::string to_json(const CircuitNetwork& net);
CircuitNetwork network_from_json(const std::string& text);

std::string to_json(const ArcModel& arc);
ArcModel arc_model_from_json(const std::string& text);

std::string to_json(const DeviceBundle& dev);
DeviceBundle bundle_from_json(const std::string& text);

std::string to_json(const FitResult& fr);
FitResult fit_result_from_json(const std::string& text);

std::string to_json(const TraceMeta& meta);
TraceMeta trace_meta_from_json(const std::string& text);

// Input conversion: normalized CSV plus metadata sidecar (<out>.meta.json).
// Accepts our CSV and a one-port touchstone subset (# HZ/KHZ/MHZ/GHZ S
// RI/MA/DB R <z0>). Throws parse_error with the offending line number.
struct ConvertResult {
  std::string csv_path;
  std::string meta_path;
};
ConvertResult convert_trace_file(const std::string& in_path, const std::string& out_csv_path);

} // namespace ppc
