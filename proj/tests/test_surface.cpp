#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"
#include "roughdot/rng.hpp"
#include "roughdot/surface.hpp"

using namespace roughdot;

namespace {

FractalParams default_params() {
  FractalParams p;
  p.hurst = 0.28;
  p.c0 = 1.4;
  p.lambda_min = kA0;
  p.lambda_max = 0.0;
  return p;
}

// for tests that run on a coarse 0.5 nm grid
FractalParams coarse_params() {
  FractalParams p = default_params();
  p.lambda_min = 2.0;
  return p;
}

double vec_std(const std::vector<double>& v) {
  double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

}  // namespace

TEST_CASE("generation is deterministic and zero mean") {
  auto p = default_params();
  auto a = generate_surface(p, 64 * kMonolayer, 64 * kMonolayer, kMonolayer, 1);
  auto b = generate_surface(p, 64 * kMonolayer, 64 * kMonolayer, kMonolayer, 1);
  REQUIRE(a.heights.size() == b.heights.size());
  CHECK(std::memcmp(a.heights.data(), b.heights.data(),
                    a.heights.size() * sizeof(double)) == 0);
  double mean = std::accumulate(a.heights.begin(), a.heights.end(), 0.0) /
                a.heights.size();
  CHECK(std::abs(mean) < 1e-12);

  auto c = generate_surface(p, 64 * kMonolayer, 64 * kMonolayer, kMonolayer, 2);
  CHECK(std::memcmp(a.heights.data(), c.heights.data(),
                    a.heights.size() * sizeof(double)) != 0);
}

TEST_CASE("zero amplitude gives a flat surface") {
  auto p = default_params();
  p.c0 = 0.0;
  p.lambda_min = 2.0;
  auto s = generate_surface(p, 128 * 0.5, 128 * 0.5, 0.5, 7);
  for (double h : s.heights) CHECK(h == 0.0);
  auto rms = rms_of_segments(s, {5.0, 20.0});
  CHECK(rms.rms[0] == 0.0);
  CHECK(rms.rms[1] == 0.0);
}

TEST_CASE("parameter validation") {
  auto p = default_params();
  CHECK_THROWS_AS(generate_surface(p, 10 * kMonolayer, 10 * kMonolayer,
                                   kMonolayer, 1),
                  ParameterError);  // below 64x64
  // non-integer cell count: 100.37/0.75 = 133.83
  FractalParams q = default_params();
  q.lambda_min = 2.0;
  CHECK_THROWS_AS(generate_surface(q, 100.37, 100.37, 0.75, 1), ParameterError);
  p.hurst = 1.2;
  CHECK_THROWS_AS(generate_surface(p, 64, 64, 0.5, 1), ParameterError);
  p.hurst = -0.1;
  CHECK_THROWS_AS(generate_surface(p, 64, 64, 0.5, 1), ParameterError);
}

TEST_CASE("generated surface matches the target spectrum") {
  auto p = default_params();
  // 1024 monolayer cells = 139 nm extent; fit over [2, 100] nm
  auto s = generate_surface(p, 1024 * kMonolayer, 1024 * kMonolayer, kMonolayer, 1);
  auto est = estimate_psd_2d_average(s, 64);
  CHECK(est.fit_defined);
  CHECK(est.fit_hurst == doctest::Approx(0.28).epsilon(0.18));  // +-0.05
  CHECK(std::abs(est.fit_hurst - 0.28) < 0.05);
  CHECK(est.fit_c0 > 0.7);
  CHECK(est.fit_c0 < 2.8);
}

TEST_CASE("psd round trip over ten seeds") {
  auto p = default_params();
  double sum_h = 0.0, sum_logc = 0.0;
  const int n_seeds = 10;
  for (int seed = 1; seed <= n_seeds; ++seed) {
    auto s = generate_surface(p, 512 * kA0 / 2, 512 * kA0 / 2, kA0 / 2, seed);
    auto est = estimate_psd_2d_average(s, 48);
    sum_h += est.fit_hurst;
    sum_logc += std::log(est.fit_c0);
  }
  CHECK(std::abs(sum_h / n_seeds - 0.28) < 0.05);
  double c0 = std::exp(sum_logc / n_seeds);
  CHECK(c0 > 0.7);
  CHECK(c0 < 2.8);
}

TEST_CASE("pure sinusoid concentrates in one bin with Parseval power") {
  const int n = 4096;
  const double dx = 0.25, lam0 = 16.0, amp = 0.8;
  std::vector<double> prof(n);
  for (int i = 0; i < n; ++i)
    prof[i] = amp * std::sin(2.0 * kPi * i * dx / lam0);
  auto est = estimate_psd_1d(prof, dx);
  CHECK(est.total_power == doctest::Approx(amp * amp / 2).epsilon(0.05));
  // peak bin contains lam0
  std::size_t imax = 0;
  for (std::size_t i = 1; i < est.psd1d.size(); ++i)
    if (est.psd1d[i] > est.psd1d[imax]) imax = i;
  double lo = imax > 0 ? est.wavelengths[imax - 1] : est.wavelengths.front();
  double hi = imax + 1 < est.wavelengths.size() ? est.wavelengths[imax + 1]
                                                : est.wavelengths.back();
  CHECK(lo <= lam0);
  CHECK(hi >= lam0);
}

TEST_CASE("row extraction refits the generator exponent") {
  auto p = default_params();
  // long rows keep the single-line periodogram scatter inside the band
  auto s = generate_surface(p, 4096 * kMonolayer, 256 * kMonolayer, kMonolayer, 1);
  auto est = estimate_psd_1d(s.row(128), s.dx);
  CHECK(est.fit_defined);
  CHECK(est.fit_hurst > 0.23);
  CHECK(est.fit_hurst < 0.33);
  // averaged over rows the estimate tightens around the input
  double h = est.fit_hurst;
  for (int r : {64, 192}) h += estimate_psd_1d(s.row(r), s.dx).fit_hurst;
  CHECK(std::abs(h / 3 - 0.28) < 0.06);
}

TEST_CASE("flat and degenerate profiles") {
  std::vector<double> flat(256, 1.25);
  auto est = estimate_psd_1d(flat, 0.5);
  CHECK_FALSE(est.fit_defined);
  for (double v : est.psd1d) CHECK(v == 0.0);

  std::vector<double> tiny(8, 0.0);
  CHECK_THROWS_AS(estimate_psd_1d(tiny, 0.5), ParameterError);
  std::vector<double> bad(64, 0.0);
  bad[5] = std::nan("");
  CHECK_THROWS_AS(estimate_psd_1d(bad, 0.5), ParameterError);
}

TEST_CASE("n_lines reductions and validation") {
  auto p = coarse_params();
  auto s = generate_surface(p, 128 * 0.5, 128 * 0.5, 0.5, 5);
  CHECK_THROWS_AS(estimate_psd_2d_average(s, 0), ParameterError);
  CHECK_THROWS_AS(estimate_psd_2d_average(s, 1000), ParameterError);

  auto one = estimate_psd_2d_average(s, 1);
  auto ref = estimate_psd_1d(s.row(s.ny / 2), s.dx);
  REQUIRE(one.psd1d.size() == ref.psd1d.size());
  for (std::size_t i = 0; i < one.psd1d.size(); ++i)
    CHECK(one.psd1d[i] == doctest::Approx(ref.psd1d[i]));
  CHECK(one.fit_hurst == doctest::Approx(ref.fit_hurst));
}

TEST_CASE("anisotropic stretch separates row and column spectra") {
  auto p = coarse_params();
  auto base = generate_surface(p, 256, 256, 0.5, 9);
  // stretch x by 2: sample the original at x/2
  RoughSurface st = base;
  for (int j = 0; j < st.ny; ++j)
    for (int i = 0; i < st.nx; ++i)
      st.at(i, j) = sample_height(base, i * st.dx / 2.0, j * st.dx);
  auto rows = estimate_psd_2d_average(st, 32, 2.0, 100.0, PsdLineSet::kRows);
  auto cols = estimate_psd_2d_average(st, 32, 2.0, 100.0, PsdLineSet::kColumns);
  auto both = estimate_psd_2d_average(st, 32, 2.0, 100.0, PsdLineSet::kBoth);
  // probe the binned spectra at fixed wavelengths (nearest bin)
  auto probe = [](const PsdEstimate& e, double lam) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < e.wavelengths.size(); ++i)
      if (std::abs(std::log(e.wavelengths[i] / lam)) <
          std::abs(std::log(e.wavelengths[best] / lam)))
        best = i;
    return e.psd1d[best];
  };
  double mr = 0, mc = 0, mb = 0;
  for (double lam : {8.0, 16.0, 32.0}) {
    mr += std::log(probe(rows, lam));
    mc += std::log(probe(cols, lam));
    mb += std::log(probe(both, lam));
  }
  CHECK(std::abs(mr - mc) > 0.5);  // stretched axes separate clearly
  CHECK(mb > std::min(mr, mc));
  CHECK(mb < std::max(mr, mc));
}

TEST_CASE("windowed rms hits the monolayer scale and the fractal slope") {
  auto p = default_params();
  auto s = generate_surface(p, 1024 * kMonolayer, 1024 * kMonolayer, kMonolayer, 2);
  auto curve = rms_of_segments(s, {5.0, 10.0, 20.0, 50.0});
  // one monolayer within a dot-sized window, within a factor of 2
  CHECK(curve.rms[1] > 0.5 * kMonolayer);
  CHECK(curve.rms[1] < 2.0 * kMonolayer);
  // slope of log rms vs log(2*pi/lambda) is -H over one decade
  double x0 = std::log(2 * kPi / curve.lambdas[0]), y0 = std::log(curve.rms[0]);
  double x3 = std::log(2 * kPi / curve.lambdas[3]), y3 = std::log(curve.rms[3]);
  double slope = (y3 - y0) / (x3 - x0);
  CHECK(std::abs(-slope - 0.28) < 0.05);
  // monotone non-decreasing with lambda (allow tiny statistical slack)
  for (std::size_t i = 1; i < curve.rms.size(); ++i)
    CHECK(curve.rms[i] > 0.95 * curve.rms[i - 1]);
}

TEST_CASE("rms window validation and offset invariance") {
  auto p = coarse_params();
  auto s = generate_surface(p, 128 * 0.5, 128 * 0.5, 0.5, 4);
  CHECK_THROWS_AS(rms_of_segments(s, {0.5}), ParameterError);   // < 2*dx
  CHECK_THROWS_AS(rms_of_segments(s, {500.0}), ParameterError); // > extent

  auto before = rms_of_segments(s, {8.0, 24.0});
  RoughSurface shifted = s;
  for (double& h : shifted.heights) h += 3.7;
  auto after = rms_of_segments(shifted, {8.0, 24.0});
  for (std::size_t i = 0; i < before.rms.size(); ++i)
    CHECK(after.rms[i] == doctest::Approx(before.rms[i]).epsilon(1e-12));
}

TEST_CASE("linearity under height scaling") {
  auto p = coarse_params();
  auto s = generate_surface(p, 128 * 0.5, 128 * 0.5, 0.5, 6);
  RoughSurface t = s;
  for (double& h : t.heights) h *= 3.0;
  auto r1 = rms_of_segments(s, {10.0});
  auto r2 = rms_of_segments(t, {10.0});
  CHECK(r2.rms[0] == doctest::Approx(3.0 * r1.rms[0]).epsilon(1e-12));
  auto p1 = estimate_psd_1d(s.row(10), s.dx);
  auto p2 = estimate_psd_1d(t.row(10), t.dx);
  for (std::size_t i = 0; i < p1.psd1d.size(); ++i)
    if (p1.psd1d[i] > 0)
      CHECK(p2.psd1d[i] == doctest::Approx(9.0 * p1.psd1d[i]).epsilon(1e-9));
}

TEST_CASE("bilinear sampling") {
  RoughSurface s;
  s.nx = s.ny = 8;
  s.dx = 0.5;
  s.heights.resize(64);
  // plane z = 2x - 3y + 1
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i)
      s.at(i, j) = 2.0 * (i * s.dx) - 3.0 * (j * s.dx) + 1.0;

  CHECK(sample_height(s, 1.0, 1.5) ==
        doctest::Approx(2.0 * 1.0 - 3.0 * 1.5 + 1.0));
  // cell centre reproduces the plane exactly
  CHECK(sample_height(s, 0.75, 0.25) ==
        doctest::Approx(2.0 * 0.75 - 3.0 * 0.25 + 1.0));
  // grid node is exact
  CHECK(sample_height(s, 2 * s.dx, 3 * s.dx) == doctest::Approx(s.at(2, 3)));
  CHECK_THROWS_AS(sample_height(s, -0.1, 0.0), ParameterError);
  CHECK_THROWS_AS(sample_height(s, 0.0, 3.6), ParameterError);
}

TEST_CASE("random queries stay inside the local node bounds") {
  auto p = coarse_params();
  auto s = generate_surface(p, 128 * 0.5, 128 * 0.5, 0.5, 12);
  GaussianRng rng(99);
  for (int t = 0; t < 1000; ++t) {
    double x = rng.uniform() * s.max_x();
    double y = rng.uniform() * s.max_y();
    double v = sample_height(s, x, y);
    int i = std::min(static_cast<int>(x / s.dx), s.nx - 2);
    int j = std::min(static_cast<int>(y / s.dx), s.ny - 2);
    double lo = std::min(std::min(s.at(i, j), s.at(i + 1, j)),
                         std::min(s.at(i, j + 1), s.at(i + 1, j + 1)));
    double hi = std::max(std::max(s.at(i, j), s.at(i + 1, j)),
                         std::max(s.at(i, j + 1), s.at(i + 1, j + 1)));
    CHECK(v >= lo - 1e-12);
    CHECK(v <= hi + 1e-12);
  }
}

TEST_CASE("binary container round trip") {
  auto p = coarse_params();
  auto s = generate_surface(p, 64 * 0.5, 96 * 0.5, 0.5, 21);
  const std::string path = "/tmp/roughdot_test_surface.bin";
  save_surface(s, path);
  auto t = load_surface(path);
  CHECK(t.nx == s.nx);
  CHECK(t.ny == s.ny);
  CHECK(t.dx == s.dx);
  CHECK(t.seed == s.seed);
  CHECK(t.params.hurst == s.params.hurst);
  CHECK(std::memcmp(t.heights.data(), s.heights.data(),
                    s.heights.size() * sizeof(double)) == 0);
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_CASE("csv profile ingestion") {
  const std::string path = "/tmp/roughdot_test_profile.csv";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fprintf(f, "x_nm,z_nm\n");
    for (int i = 0; i < 64; ++i)
      std::fprintf(f, "%.6f,%.6f\n", i * 0.25, std::sin(0.3 * i));
    std::fclose(f);
  }
  double dx = 0.0;
  auto prof = load_profile_csv(path, &dx);
  CHECK(prof.size() == 64);
  CHECK(dx == doctest::Approx(0.25));
  CHECK(prof[3] == doctest::Approx(std::sin(0.9)));
  std::remove(path.c_str());
}
