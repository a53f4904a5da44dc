#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>

#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"
#include "roughdot/valley.hpp"

using namespace roughdot;

namespace {

RoughSurface flat_surface(double extent, double dx, double level = 0.0) {
  RoughSurface s;
  s.nx = s.ny = static_cast<int>(std::lround(extent / dx)) + 1;
  s.dx = dx;
  s.heights.assign(static_cast<std::size_t>(s.nx) * s.ny, level);
  return s;
}

HarmonicDot centered_dot(double extent) {
  HarmonicDot d;
  d.xc = d.yc = extent / 2;
  d.cx = d.cy = 0.3;
  d.ez = 28.0;
  return d;
}

RoughSurface rough_test_surface(std::uint64_t seed) {
  FractalParams p;
  p.hurst = 0.28;
  p.c0 = 1.4;
  p.lambda_min = kA0;
  return generate_surface(p, 512 * kMonolayer, 512 * kMonolayer, kMonolayer,
                          seed);
}

}  // namespace

TEST_CASE("flat-surface envelope reproduces the harmonic oscillator") {
  const double extent = 80.0;
  auto surf = flat_surface(extent, 0.5);
  auto dot = centered_dot(extent);
  auto env = solve_envelope(dot, surf);

  CHECK(env.confined);
  CHECK(env.cx == doctest::Approx(dot.xc).epsilon(1e-6));
  CHECK(env.cy == doctest::Approx(dot.yc).epsilon(1e-6));
  CHECK(env.spread_x ==
        doctest::Approx(harmonic_spread_x(dot)).epsilon(0.01));
  CHECK(env.energy ==
        doctest::Approx(harmonic_ground_energy(dot)).epsilon(0.01));

  double mass = 0.0;
  for (double v : env.density) mass += v * env.h * env.h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tilted plane displaces the dot by the analytic amount") {
  const double extent = 80.0;
  const double g = 0.01;  // nm height per nm
  auto surf = flat_surface(extent, 0.5);
  for (int j = 0; j < surf.ny; ++j)
    for (int i = 0; i < surf.nx; ++i) surf.at(i, j) = g * (i * surf.dx);
  auto dot = centered_dot(extent);
  auto env = solve_envelope(dot, surf);
  // completing the square: shift = -Ez*g/(2*cx)
  CHECK(env.cx - dot.xc ==
        doctest::Approx(-dot.ez * g / (2.0 * dot.cx)).epsilon(0.01));
  CHECK(env.cy == doctest::Approx(dot.yc).epsilon(1e-6));
}

TEST_CASE("rough-surface envelope obeys the shifted-floor bound") {
  auto surf = rough_test_surface(31);
  HarmonicDot dot;
  dot.xc = dot.yc = surf.extent_x() / 2;
  dot.cx = dot.cy = 0.3;
  dot.ez = 28.0;
  auto env = solve_envelope(dot, surf);
  double zmin = 1e300;
  for (int j = 0; j < env.n; ++j)
    for (int i = 0; i < env.n; ++i)
      zmin = std::min(zmin, sample_height(surf, env.x0 + i * env.h,
                                          env.y0 + j * env.h));
  CHECK(env.energy >= harmonic_ground_energy(dot) + dot.ez * zmin - 1e-6);
  double mass = 0.0;
  for (double v : env.density) mass += v * env.h * env.h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("squeezed window raises the confinement warning") {
  const double extent = 60.0;
  auto surf = flat_surface(extent, 0.5);
  auto dot = centered_dot(extent);
  EnvelopeOptions opts;
  opts.halfwidth_sigmas = 1.1;
  opts.margin = 0.0;
  auto env = solve_envelope(dot, surf, opts);
  CHECK_FALSE(env.confined);
  CHECK(env.boundary_mass > 0.01);
}

TEST_CASE("chain calibration places the valley minimum") {
  auto chain = build_chain(28.0, 0.0, 320);
  // scan the dispersion
  double kmin = 0.0, emin = 1e300;
  for (int i = 1; i < 40000; ++i) {
    double k = kPi / chain.a * i / 40000.0;
    double e = 2 * chain.t1 * std::cos(k * chain.a) +
               2 * chain.t2 * std::cos(2 * k * chain.a);
    if (e < emin) {
      emin = e;
      kmin = k;
    }
  }
  CHECK(std::abs(kmin - kValleyK0) / kValleyK0 < 0.01);
  const double d2 = -2 * chain.a * chain.a * chain.t1 * std::cos(kmin * chain.a) -
                    8 * chain.a * chain.a * chain.t2 * std::cos(2 * kmin * chain.a);
  CHECK(kHbar * kHbar / d2 / kElectronMass ==
        doctest::Approx(kMassLongitudinal).epsilon(0.05));
  CHECK_THROWS_AS(build_chain(28.0, 0.0, 64), ParameterError);
}

TEST_CASE("hard-wall degenerate chain oscillates at 2 k0") {
  // huge barrier, vanishing field: the two lowest states split weakly and
  // their density difference carries the pi/k0 beat
  auto chain = build_chain(0.05, 0.0, 360, 0.0);
  auto spec = chain_valley_splitting(chain);
  CHECK(spec.splitting < 0.05);
  const double dq = 2.0 * kPi / (chain.n_sites * chain.a);
  CHECK(std::abs(spec.peak_k - 2.0 * kValleyK0) < dq);
}

TEST_CASE("chain spectra converge with size") {
  auto c1 = build_chain(28.0, 0.0, 280);
  auto c2 = build_chain(28.0, 0.0, 560);
  auto s1 = chain_valley_splitting(c1);
  auto s2 = chain_valley_splitting(c2);
  CHECK(std::abs(s2.e0 - s1.e0) < 0.001 * std::abs(s1.e0) + 1e-6);
  CHECK(std::abs(s2.e1 - s1.e1) < 0.001 * std::abs(s1.e1) + 1e-6);
}

TEST_CASE("splitting sits in the expected decade and grows with field") {
  auto spec28 = chain_valley_splitting(build_chain(28.0, 0.0, 320));
  CHECK(spec28.splitting > 0.1);
  CHECK(spec28.splitting < 1.0);

  double prev = 0.0;
  for (double ez : {8.0, 16.0, 24.0, 32.0, 40.0}) {
    auto s = chain_valley_splitting(build_chain(ez, 0.0, 320));
    CHECK(s.splitting > prev);
    prev = s.splitting;
  }
}

TEST_CASE("interface translation by a0 preserves splitting and shifts phase") {
  auto s0 = chain_valley_splitting(build_chain(28.0, 0.0, 320));
  auto s1 = chain_valley_splitting(build_chain(28.0, kA0, 320));
  CHECK(s1.splitting == doctest::Approx(s0.splitting).epsilon(1e-9));
  double expect = s0.phase - 2.0 * kValleyK0 * kA0;
  double diff = std::remainder(s1.phase - expect, 2.0 * kPi);
  CHECK(std::abs(diff) < 0.05);
}

TEST_CASE("synthetic oscillation recovers phase and peak") {
  const int nz = 400;
  const double dz = 0.1;
  const double z0 = -nz / 2 * dz;
  for (double phi : {0.0, 0.7, -2.1}) {
    std::vector<double> plus(nz), minus(nz);
    for (int k = 0; k < nz; ++k) {
      const double z = z0 + k * dz;
      const double env = std::exp(-z * z / (2.0 * 36.0));
      const double osc = env * std::cos(2.0 * kValleyK0 * z + phi);
      plus[k] = env + osc;
      minus[k] = env - osc;
    }
    auto pk = extract_valley_phase(plus, minus, 1, 1, nz, dz, z0);
    CHECK(std::abs(std::remainder(pk.phase - phi, 2 * kPi)) < 0.01);
    CHECK(std::abs(pk.peak_k - 2.0 * kValleyK0) < 2.0 * kPi / (nz * dz));
  }
}

TEST_CASE("phase extraction error paths") {
  const int nz = 200;
  std::vector<double> plus(nz), minus(nz);
  for (int k = 0; k < nz; ++k) {
    double z = (k - nz / 2) * 0.1;
    plus[k] = std::exp(-z * z / 8.0);
    minus[k] = plus[k];  // no oscillation at all
  }
  CHECK_THROWS_AS(extract_valley_phase(plus, minus, 1, 1, nz, 0.1, -10.0),
                  NumericalError);
  CHECK_THROWS_AS(extract_valley_phase(plus, minus, 1, 1, nz, 0.4, -10.0),
                  ParameterError);  // dz too coarse for 2 k0
  CHECK_THROWS_AS(extract_valley_phase(plus, minus, 2, 1, nz, 0.1, -10.0),
                  ParameterError);  // shape mismatch
}

TEST_CASE("flat surface keeps the full 1D coupling") {
  const double extent = 80.0;
  auto surf = flat_surface(extent, 0.5);
  auto dot = centered_dot(extent);
  auto env = solve_envelope(dot, surf);
  auto chain = build_chain(dot.ez, 0.0, 320);
  auto ref = chain_valley_splitting(chain);
  auto res = dot_valley_observables(env, surf, chain);

  CHECK(res.splitting == doctest::Approx(ref.splitting).epsilon(1e-9));
  CHECK(res.suppression == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(std::remainder(res.phase - ref.phase, 2 * kPi)) < 1e-6);
  CHECK(std::abs(std::remainder(res.phase_local - res.phase, 2 * kPi)) < 1e-6);
}

TEST_CASE("half-envelope monolayer step suppresses by the two-term sum") {
  const double extent = 80.0;
  auto flat = flat_surface(extent, 0.5);
  auto dot = centered_dot(extent);
  // envelope of the unperturbed dot, symmetric about the centre
  auto env = solve_envelope(dot, flat);

  // one monolayer step through the dot centre, offset half a cell so the
  // envelope weights split exactly in two
  auto surf = flat;
  for (int j = 0; j < surf.ny; ++j)
    for (int i = 0; i < surf.nx; ++i)
      if (i * surf.dx > dot.xc + surf.dx / 4) surf.at(i, j) = kMonolayer;

  auto chain = build_chain(dot.ez, 0.0, 320);
  auto res = dot_valley_observables(env, surf, chain);

  // two-term sum with the envelope's own weight on each terrace
  double w_low = 0.0;
  for (int j = 0; j < env.n; ++j)
    for (int i = 0; i < env.n; ++i)
      if (env.x0 + i * env.h <= dot.xc + surf.dx / 4)
        w_low += env.at(i, j) * env.h * env.h;
  const std::complex<double> two_term =
      w_low + (1.0 - w_low) * std::exp(std::complex<double>(
                                  0.0, -2.0 * kValleyK0 * kMonolayer));
  CHECK(res.suppression == doctest::Approx(std::abs(two_term)).epsilon(1e-9));
  auto ref = chain_valley_splitting(chain);
  CHECK(res.splitting ==
        doctest::Approx(ref.splitting * std::abs(two_term)).epsilon(1e-9));
  // close to the ideal half-and-half suppression
  const std::complex<double> half =
      0.5 * (1.0 + std::exp(std::complex<double>(
                       0.0, -2.0 * kValleyK0 * kMonolayer)));
  CHECK(res.suppression == doctest::Approx(std::abs(half)).epsilon(0.35));
}

TEST_CASE("rigid height translation multiplies the coupling phase") {
  auto surf = rough_test_surface(17);
  HarmonicDot dot;
  dot.xc = dot.yc = surf.extent_x() / 2;
  dot.cx = dot.cy = 0.3;
  dot.ez = 28.0;
  auto chain = build_chain(dot.ez, 0.0, 320);

  auto env = solve_envelope(dot, surf);
  auto base = dot_valley_observables(env, surf, chain);
  CHECK(base.suppression <= 1.0 + 1e-12);

  const double dzshift = 0.037;
  RoughSurface shifted = surf;
  for (double& h : shifted.heights) h += dzshift;
  // same envelope (the envelope sees only a constant potential offset)
  auto res = dot_valley_observables(env, shifted, chain);
  CHECK(res.splitting == doctest::Approx(base.splitting).epsilon(1e-9));
  double expect = base.phase - 2.0 * kValleyK0 * dzshift;
  CHECK(std::abs(std::remainder(res.phase - expect, 2 * kPi)) < 1e-9);
  // the locally referenced phase is translation invariant
  CHECK(std::abs(std::remainder(res.phase_local - base.phase_local, 2 * kPi)) <
        1e-9);
}
