#include "roughdot/surface.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"
#include "roughdot/rng.hpp"

namespace roughdot {

namespace {

// FFTW's planner is not thread-safe; executions on distinct plans are.
std::mutex g_fftw_mutex;

struct PlanGuard {
  fftw_plan plan = nullptr;
  ~PlanGuard() {
    if (plan) {
      std::lock_guard<std::mutex> lock(g_fftw_mutex);
      fftw_destroy_plan(plan);
    }
  }
};

int snap_cell_count(double extent, double dx, const char* axis) {
  if (!(dx > 0.0) || !std::isfinite(extent) || extent <= 0.0)
    throw ParameterError("surface: extent and dx must be positive");
  double cells = extent / dx;
  long n = std::lround(cells);
  if (std::abs(cells - static_cast<double>(n)) > 1e-3 * std::max(1.0, cells)) {
    std::ostringstream os;
    os << "surface: extent/" << axis << " does not give an integer cell count ("
       << cells << ")";
    throw ParameterError(os.str());
  }
  if (n < 64) throw ParameterError("surface: grid must be at least 64x64");
  return static_cast<int>(n);
}

// Isotropic 2D spectral density whose straight line cuts reproduce the 1D
// law C0 * q^(-1-2H). The radial exponent is -2-2H and the amplitude ratio
// is b(H) = 2*sqrt(pi)*Gamma(1+H)/Gamma(1/2+H).
double radial_amplitude(const FractalParams& p) {
  double b = 2.0 * std::sqrt(kPi) * std::tgamma(1.0 + p.hurst) /
             std::tgamma(0.5 + p.hurst);
  return b * p.c0 / kPsdNorm;
}

}  // namespace

void FractalParams::validate() const {
  if (!(hurst > 0.0) || !(hurst < 1.0))
    throw ParameterError("surface: Hurst exponent must lie in (0,1)");
  if (!(c0 >= 0.0) || !std::isfinite(c0))
    throw ParameterError("surface: C0 must be finite and non-negative");
  if (!(lambda_min > 0.0))
    throw ParameterError("surface: lambda_min must be positive");
  if (lambda_max != 0.0 && !(lambda_max > lambda_min))
    throw ParameterError("surface: lambda_max must exceed lambda_min");
}

std::vector<double> RoughSurface::row(int j) const {
  std::vector<double> out(nx);
  for (int i = 0; i < nx; ++i) out[i] = at(i, j);
  return out;
}

std::vector<double> RoughSurface::column(int i) const {
  std::vector<double> out(ny);
  for (int j = 0; j < ny; ++j) out[j] = at(i, j);
  return out;
}

RoughSurface generate_surface(const FractalParams& params, double extent_x,
                              double extent_y, double dx, std::uint64_t seed) {
  params.validate();
  const int nx = snap_cell_count(extent_x, dx, "dx");
  const int ny = snap_cell_count(extent_y, dx, "dx");
  if (params.lambda_min < 2.0 * dx)
    throw ParameterError("surface: lambda_min must be at least 2*dx");
  const double lam_max =
      params.lambda_max > 0.0 ? params.lambda_max : std::max(nx, ny) * dx;
  if (lam_max > std::max(nx, ny) * dx * (1.0 + 1e-9))
    throw ParameterError("surface: lambda_max exceeds the domain extent");

  RoughSurface surf;
  surf.nx = nx;
  surf.ny = ny;
  surf.dx = dx;
  surf.seed = seed;
  surf.params = params;
  surf.params.lambda_max = lam_max;
  surf.heights.assign(static_cast<std::size_t>(nx) * ny, 0.0);
  if (params.c0 == 0.0) return surf;  // flat limit

  const int nxc = nx / 2 + 1;
  const double q_lo = 2.0 * kPi / lam_max;
  const double q_hi = 2.0 * kPi / params.lambda_min;
  const double c2 = radial_amplitude(surf.params);
  const double cell_norm = static_cast<double>(nx) * ny / (dx * dx);

  fftw_complex* spec;
  double* real_out;
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    spec = fftw_alloc_complex(static_cast<std::size_t>(ny) * nxc);
    real_out = fftw_alloc_real(static_cast<std::size_t>(nx) * ny);
  }
  PlanGuard guard;
  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    guard.plan = fftw_plan_dft_c2r_2d(ny, nx, spec, real_out, FFTW_ESTIMATE);
  }

  GaussianRng rng(seed);
  const double inv_n2 = 1.0 / (static_cast<double>(nx) * ny);
  for (int ky = 0; ky < ny; ++ky) {
    const int ky_signed = ky <= ny / 2 ? ky : ky - ny;
    const double qy = 2.0 * kPi * ky_signed / (ny * dx);
    for (int kx = 0; kx < nxc; ++kx) {
      const double qx = 2.0 * kPi * kx / (nx * dx);
      const double q = std::hypot(qx, qy);
      std::size_t idx = static_cast<std::size_t>(ky) * nxc + kx;
      // the kx = 0 and kx = nx/2 columns of the half-spectrum contain their
      // own conjugate partners; fill ky <= ny/2 and mirror the rest
      const bool self_column = (kx == 0) || (2 * kx == nx);
      if (self_column && ky > ny / 2) continue;
      double g1 = rng.normal();
      double g2 = rng.normal();
      if (q < q_lo || q > q_hi) {
        spec[idx][0] = spec[idx][1] = 0.0;
        continue;
      }
      const double target = cell_norm * c2 * std::pow(q, -2.0 - 2.0 * params.hurst);
      const bool self_conj = self_column && (ky == 0 || 2 * ky == ny);
      if (self_conj) {
        spec[idx][0] = std::sqrt(target) * g1;
        spec[idx][1] = 0.0;
      } else {
        const double amp = std::sqrt(0.5 * target);
        spec[idx][0] = amp * g1;
        spec[idx][1] = amp * g2;
      }
    }
  }
  // mirror the self-conjugate columns: Z(ny-ky, kx) = conj(Z(ky, kx))
  for (int kx = 0; kx < nxc; ++kx) {
    if (!((kx == 0) || (2 * kx == nx))) continue;
    for (int ky = ny / 2 + 1; ky < ny; ++ky) {
      std::size_t src = static_cast<std::size_t>(ny - ky) * nxc + kx;
      std::size_t dst = static_cast<std::size_t>(ky) * nxc + kx;
      spec[dst][0] = spec[src][0];
      spec[dst][1] = -spec[src][1];
    }
  }
  spec[0][0] = spec[0][1] = 0.0;  // enforce zero mean at the DC mode

  fftw_execute(guard.plan);

  double mean = 0.0;
  const std::size_t total = static_cast<std::size_t>(nx) * ny;
  for (std::size_t i = 0; i < total; ++i) {
    real_out[i] *= inv_n2;  // FFTW backward transform is unnormalised
    mean += real_out[i];
  }
  mean /= static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i) surf.heights[i] = real_out[i] - mean;

  {
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_free(spec);
    fftw_free(real_out);
  }
  return surf;
}

namespace {

// Plain periodogram values in the project convention, excluding DC:
// pairs (q_k, PSD(q_k)) for k = 1..n/2. Adds the line's variance recovered
// from the spectrum (Parseval) to *power_acc.
void accumulate_periodogram(const std::vector<double>& profile, double dx,
                            std::vector<double>* qs, std::vector<double>* ps,
                            double* power_acc) {
  const int n = static_cast<int>(profile.size());
  double mean = 0.0;
  for (double v : profile) {
    if (!std::isfinite(v)) throw ParameterError("psd: non-finite sample");
    mean += v;
  }
  mean /= n;

  std::vector<double> buf(profile);
  for (double& v : buf) v -= mean;

  const int nc = n / 2 + 1;
  std::vector<double> spec_re(nc), spec_im(nc);
  {
    fftw_complex* out;
    PlanGuard guard;
    {
      std::lock_guard<std::mutex> lock(g_fftw_mutex);
      out = fftw_alloc_complex(nc);
      guard.plan = fftw_plan_dft_r2c_1d(n, buf.data(), out, FFTW_ESTIMATE);
    }
    fftw_execute(guard.plan);
    for (int k = 0; k < nc; ++k) {
      spec_re[k] = out[k][0];
      spec_im[k] = out[k][1];
    }
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_free(out);
  }

  const double scale = kPsdNorm * dx / n;
  double line_power = 0.0;
  for (int k = 1; k < nc; ++k) {
    const double q = 2.0 * kPi * k / (n * dx);
    const double s = scale * (spec_re[k] * spec_re[k] + spec_im[k] * spec_im[k]);
    qs->push_back(q);
    ps->push_back(s);
    line_power += s * ((2 * k == n) ? 1.0 : 2.0);
  }
  if (power_acc) *power_acc += line_power / (kPsdNorm * dx * n);
}

PsdEstimate bin_and_fit(const std::vector<double>& qs,
                        const std::vector<double>& ps, double lam_lo,
                        double lam_hi, double fit_min, double fit_max,
                        double mean_power) {
  PsdEstimate est;
  est.fit_min = fit_min;
  est.fit_max = fit_max;
  est.total_power = mean_power;

  const int n_bins = std::clamp(
      static_cast<int>(std::lround(12.0 * std::log10(lam_hi / lam_lo))), 8, 80);
  const double ratio = std::pow(lam_hi / lam_lo, 1.0 / n_bins);
  std::vector<double> sum(n_bins, 0.0), logq(n_bins, 0.0);
  std::vector<long> cnt(n_bins, 0);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const double lam = 2.0 * kPi / qs[i];
    int b = static_cast<int>(std::floor(std::log(lam / lam_lo) / std::log(ratio)));
    if (b < 0 || b >= n_bins) b = std::clamp(b, 0, n_bins - 1);
    sum[b] += ps[i];
    logq[b] += std::log(qs[i]);
    cnt[b] += 1;
  }

  // Fitting log(bin mean) of a periodogram is biased low when a bin holds
  // few modes: for k exponential samples E[ln(mean)] - ln(E) = psi(k)-ln k.
  auto log_mean_bias = [](long k) {
    double psi = -0.57721566490153286;  // psi(1)
    for (long i = 1; i < k; ++i) psi += 1.0 / i;
    return psi - std::log(static_cast<double>(k));
  };

  std::vector<double> fit_lq, fit_ls;
  for (int b = 0; b < n_bins; ++b) {
    if (cnt[b] == 0) continue;
    const double mean_p = sum[b] / cnt[b];
    const double mean_lq = logq[b] / cnt[b];
    const double lam = 2.0 * kPi / std::exp(mean_lq);
    est.wavelengths.push_back(lam);
    est.psd1d.push_back(mean_p);
    if (lam >= fit_min && lam <= fit_max && mean_p > 0.0) {
      fit_lq.push_back(mean_lq);
      fit_ls.push_back(std::log(mean_p) - log_mean_bias(cnt[b]));
    }
  }
  // bins come out in increasing wavelength already (b indexes lambda)

  if (fit_lq.size() < 3) {
    est.fit_defined = false;
    return est;
  }
  // unweighted least squares: log S = a + s*log q, s = -1-2H
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(fit_lq.size());
  for (std::size_t i = 0; i < fit_lq.size(); ++i) {
    sx += fit_lq[i];
    sy += fit_ls[i];
    sxx += fit_lq[i] * fit_lq[i];
    sxy += fit_lq[i] * fit_ls[i];
  }
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) {
    est.fit_defined = false;
    return est;
  }
  const double slope = (m * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / m;
  est.fit_hurst = 0.5 * (-1.0 - slope);
  est.fit_c0 = std::exp(intercept);
  return est;
}

}  // namespace

PsdEstimate estimate_psd_1d(const std::vector<double>& profile, double dx,
                            double fit_min, double fit_max) {
  if (profile.size() < 32)
    throw ParameterError("psd: profile must contain at least 32 samples");
  if (!(dx > 0.0)) throw ParameterError("psd: dx must be positive");

  double lo = profile[0], hi = profile[0];
  for (double v : profile) {
    if (!std::isfinite(v)) throw ParameterError("psd: non-finite sample");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo == 0.0) {
    // all-constant profile: zero spectrum, fit undefined
    PsdEstimate est;
    est.fit_defined = false;
    est.fit_min = fit_min;
    est.fit_max = fit_max;
    const int n = static_cast<int>(profile.size());
    for (int k = n / 2; k >= 1; --k) {
      est.wavelengths.push_back(n * dx / k);
      est.psd1d.push_back(0.0);
    }
    return est;
  }

  std::vector<double> qs, ps;
  double power = 0.0;
  accumulate_periodogram(profile, dx, &qs, &ps, &power);
  return bin_and_fit(qs, ps, 2.0 * dx, profile.size() * dx, fit_min, fit_max,
                     power);
}

PsdEstimate estimate_psd_2d_average(const RoughSurface& surface, int n_lines,
                                    double fit_min, double fit_max,
                                    PsdLineSet lines) {
  if (n_lines < 1) throw ParameterError("psd: n_lines must be at least 1");
  if (n_lines > surface.ny || n_lines > surface.nx)
    throw ParameterError("psd: n_lines exceeds the grid size");

  // single-line reduction: identical to estimate_psd_1d on the middle row
  if (n_lines == 1 && lines == PsdLineSet::kBoth)
    return estimate_psd_1d(surface.row(surface.ny / 2), surface.dx, fit_min,
                           fit_max);

  auto pick = [](int count, int total) {
    std::vector<int> idx(count);
    for (int i = 0; i < count; ++i)
      idx[i] = count == 1 ? total / 2
                          : static_cast<int>(std::lround(
                                i * static_cast<double>(total - 1) / (count - 1)));
    return idx;
  };

  std::vector<double> qs, ps;
  double power = 0.0;
  long count = 0;
  if (lines != PsdLineSet::kColumns)
    for (int j : pick(n_lines, surface.ny)) {
      accumulate_periodogram(surface.row(j), surface.dx, &qs, &ps, &power);
      ++count;
    }
  if (lines != PsdLineSet::kRows)
    for (int i : pick(n_lines, surface.nx)) {
      accumulate_periodogram(surface.column(i), surface.dx, &qs, &ps, &power);
      ++count;
    }

  const double lam_hi = std::max(surface.extent_x(), surface.extent_y());
  return bin_and_fit(qs, ps, 2.0 * surface.dx, lam_hi, fit_min, fit_max,
                     power / static_cast<double>(count));
}

namespace {

// mean RMS over mean-subtracted windows of w samples tiling a line
void accumulate_window_rms(const double* data, int n, int w, double* sum,
                           long* count) {
  int n_full = n / w;
  for (int k = 0; k < n_full; ++k) {
    const double* seg = data + static_cast<std::size_t>(k) * w;
    double mean = 0.0;
    for (int i = 0; i < w; ++i) mean += seg[i];
    mean /= w;
    double ss = 0.0;
    for (int i = 0; i < w; ++i) ss += (seg[i] - mean) * (seg[i] - mean);
    *sum += std::sqrt(ss / w);
    ++*count;
  }
  if (n_full * w < n) {  // end-aligned window covers the remainder
    const double* seg = data + (n - w);
    double mean = 0.0;
    for (int i = 0; i < w; ++i) mean += seg[i];
    mean /= w;
    double ss = 0.0;
    for (int i = 0; i < w; ++i) ss += (seg[i] - mean) * (seg[i] - mean);
    *sum += std::sqrt(ss / w);
    ++*count;
  }
}

int window_samples(double lambda, double dx, double extent) {
  if (!(lambda >= 2.0 * dx) || lambda > extent * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "rms: window " << lambda << " nm outside [2*dx, extent]";
    throw ParameterError(os.str());
  }
  return std::max(2, static_cast<int>(std::lround(lambda / dx)));
}

}  // namespace

RmsCurve rms_of_segments(const std::vector<double>& profile, double dx,
                         const std::vector<double>& lambdas) {
  RmsCurve curve;
  const int n = static_cast<int>(profile.size());
  for (double lam : lambdas) {
    const int w = window_samples(lam, dx, n * dx);
    double sum = 0.0;
    long cnt = 0;
    accumulate_window_rms(profile.data(), n, w, &sum, &cnt);
    curve.lambdas.push_back(lam);
    curve.rms.push_back(cnt > 0 ? sum / cnt : 0.0);
  }
  return curve;
}

RmsCurve rms_of_segments(const RoughSurface& surface,
                         const std::vector<double>& lambdas) {
  RmsCurve curve;
  std::vector<double> line;
  for (double lam : lambdas) {
    double sum = 0.0;
    long cnt = 0;
    const int wx = window_samples(lam, surface.dx, surface.extent_x());
    for (int j = 0; j < surface.ny; ++j) {
      line = surface.row(j);
      accumulate_window_rms(line.data(), surface.nx, wx, &sum, &cnt);
    }
    const int wy = window_samples(lam, surface.dx, surface.extent_y());
    for (int i = 0; i < surface.nx; ++i) {
      line = surface.column(i);
      accumulate_window_rms(line.data(), surface.ny, wy, &sum, &cnt);
    }
    curve.lambdas.push_back(lam);
    curve.rms.push_back(cnt > 0 ? sum / cnt : 0.0);
  }
  return curve;
}

double sample_height(const RoughSurface& surface, double x, double y) {
  const double fx = (x - surface.x0) / surface.dx;
  const double fy = (y - surface.y0) / surface.dx;
  if (fx < -1e-9 || fy < -1e-9 || fx > surface.nx - 1 + 1e-9 ||
      fy > surface.ny - 1 + 1e-9)
    throw ParameterError("surface: sample point outside the grid");
  int i = std::min(static_cast<int>(fx), surface.nx - 2);
  int j = std::min(static_cast<int>(fy), surface.ny - 2);
  i = std::max(i, 0);
  j = std::max(j, 0);
  const double tx = std::clamp(fx - i, 0.0, 1.0);
  const double ty = std::clamp(fy - j, 0.0, 1.0);
  return surface.at(i, j) * (1 - tx) * (1 - ty) +
         surface.at(i + 1, j) * tx * (1 - ty) +
         surface.at(i, j + 1) * (1 - tx) * ty +
         surface.at(i + 1, j + 1) * tx * ty;
}

}  // namespace roughdot
