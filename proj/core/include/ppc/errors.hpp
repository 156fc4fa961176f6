#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppc {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical solvers.
struct non_convergence : error {
  using error::error;
};
struct no_root : error {
  using error::error;
};
struct split_modes : error {
  using error::error;
};

// Domain violations.
struct singular_inductance : error {
  using error::error;
};
struct invalid_geometry : error {
  using error::error;
};
struct negative_photon_number : error {
  using error::error;
};
struct undefined_angle : error {
  using error::error;
};

// Fitting.
struct grid_mismatch : error {
  using error::error;
};
struct window_too_wide : error {
  using error::error;
};
struct weak_signature : error {
  using error::error;
};
struct unidentifiable : error {
  using error::error;
};
struct rank_deficient : error {
  using error::error;
};

// I/O.
struct io_error : error {
  using error::error;
};
struct parse_error : io_error {
  parse_error(const std::string& msg, std::size_t line_no)
      : io_error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
  std::size_t line;
};

} // namespace ppc
