// Hot-path microbenchmarks: flux self-consistency, pump-polynomial roots,
// interference response evaluation, and the single-resonance fit.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ppc/circuit.hpp"
#include "ppc/constants.hpp"
#include "ppc/fitting.hpp"
#include "ppc/pump.hpp"
#include "ppc/response.hpp"
#include "ppc/trace.hpp"

using namespace ppc;

static void bm_total_flux(benchmark::State& state) {
  double phi_b = 0.2;
  for (auto _ : state) {
    FluxSolution s = solve_total_flux(phi_b, 0.62);
    benchmark::DoNotOptimize(s.phi);
    phi_b = (phi_b < 0.5) ? phi_b + 1e-6 : 0.2;
  }
}
BENCHMARK(bm_total_flux);

static void bm_pump_roots(benchmark::State& state) {
  NonlinearCoeffs c;
  c.kerr = -two_pi * 5.4e3;
  c.kappa1 = two_pi * 3.7e3;
  c.kappa3 = two_pi * 0.37e-3;
  const double kappa0 = two_pi * 70.7e6;
  const double kappa_ext = two_pi * 5.8e6;
  double n_in = 1e15;
  for (auto _ : state) {
    PumpRoots r = solve_pump_photon_number(-two_pi * 446e6, c, kappa0, kappa_ext, n_in);
    benchmark::DoNotOptimize(r.selected);
    n_in = (n_in < 1e17) ? n_in * 1.0001 : 1e15;
  }
}
BENCHMARK(bm_pump_roots);

static void bm_s11_ppit(benchmark::State& state) {
  PpitConfig cfg;
  cfg.omega_p = two_pi * 8.03e9;
  cfg.omega0p = two_pi * 8.476e9;
  cfg.kappa0p = two_pi * 88e6;
  cfg.kappa_extp = two_pi * 8e6;
  cfg.omega_eff = two_pi * 446e6;
  cfg.gamma_eff = two_pi * 200e3;
  cfg.g_omega = two_pi * 1.7e6;
  cfg.g_kappa = -two_pi * 3.6e6;
  double Omega = two_pi * 445e6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s11_ppit(Omega, cfg));
    Omega = (Omega < two_pi * 447e6) ? Omega + two_pi * 10.0 : two_pi * 445e6;
  }
}
BENCHMARK(bm_s11_ppit);

static void bm_fit_resonance(benchmark::State& state) {
  const double f0 = 8.476e9, k0 = 73.9e6, ke = 7.0e6;
  BackgroundModel bg;
  bg.theta = 0.08;
  ComplexTrace t;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 3e-3);
  for (int i = 0; i < 241; ++i) {
    double f = f0 - 4.0 * k0 + 8.0 * k0 * i / 240.0;
    t.freq_hz.push_back(f);
    std::complex<double> s = s11_single_mode(two_pi * f, two_pi * f0, two_pi * k0, two_pi * ke, bg);
    t.s.push_back(s + std::complex<double>(gauss(rng), gauss(rng)));
  }
  for (auto _ : state) {
    FitResult fr = fit_resonance(t);
    benchmark::DoNotOptimize(fr.residual_rms);
  }
}
BENCHMARK(bm_fit_resonance);

BENCHMARK_MAIN();
