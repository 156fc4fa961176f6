#include "ppc/trace.hpp"

#include "ppc/errors.hpp"

namespace ppc {

std::string to_string(TraceKind k) {
  switch (k) {
    case TraceKind::lf: return "lf";
    case TraceKind::hf: return "hf";
    case TraceKind::ppit_zoom: return "ppit_zoom";
    case TraceKind::hf_background: return "hf_background";
  }
  return "hf";
}

TraceKind trace_kind_from_string(const std::string& s) {
  if (s == "lf") return TraceKind::lf;
  if (s == "hf") return TraceKind::hf;
  if (s == "ppit_zoom") return TraceKind::ppit_zoom;
  if (s == "hf_background") return TraceKind::hf_background;
  throw io_error("unknown trace kind: " + s);
}

void ComplexTrace::validate(std::size_t min_points) const {
  if (freq_hz.size() != s.size()) throw error("trace: frequency/value size mismatch");
  if (freq_hz.size() < min_points) throw error("trace: too few points");
  for (std::size_t i = 1; i < freq_hz.size(); ++i)
    if (!(freq_hz[i] > freq_hz[i - 1]))
      throw error("trace: frequencies must be strictly increasing");
}

} // namespace ppc
