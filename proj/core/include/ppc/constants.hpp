#pragma once

#include <cmath>

namespace ppc {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

// CODATA 2018
inline constexpr double hbar = 1.054571817e-34;         // J s
inline constexpr double flux_quantum = 2.067833848e-15; // Wb
inline constexpr double eps0 = 8.8541878128e-12;        // F/m

// Convention: every quantity named omega/kappa/gamma/delta is angular
// (rad/s). Cyclic frequencies carry f0/_hz names and appear only at I/O
// boundaries and in serialized records.

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

} // namespace ppc
