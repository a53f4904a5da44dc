#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roughdot {

// Self-affine roughness parameters. The 1D line-cut spectrum follows
//   PSD1D(lambda) = C0 * (2*pi/lambda)^(-1-2H)
// between the two wavelength cutoffs (see constants.hpp for the spectral
// normalisation in force).
struct FractalParams {
  double hurst = 0.28;       // dimensionless, in (0,1)
  double c0 = 1.4;           // nm^3
  double lambda_min = 0.543; // nm, shortest resolved wavelength
  double lambda_max = 0.0;   // nm, upper cutoff; 0 means "domain extent"

  void validate() const;  // throws ParameterError
};

// 2D height field z_s(x,y) on a uniform square-celled grid.
// heights[j*nx + i] is the height at (x0 + i*dx, y0 + j*dx).
struct RoughSurface {
  std::vector<double> heights;  // nm, zero mean after generation
  int nx = 0;
  int ny = 0;
  double dx = 0.0;  // nm, same spacing both axes
  double x0 = 0.0;
  double y0 = 0.0;
  std::uint64_t seed = 0;
  FractalParams params;

  double at(int i, int j) const { return heights[static_cast<std::size_t>(j) * nx + i]; }
  double& at(int i, int j) { return heights[static_cast<std::size_t>(j) * nx + i]; }
  double extent_x() const { return nx * dx; }
  double extent_y() const { return ny * dx; }
  // valid interpolation domain (no periodic wrap past the last node)
  double max_x() const { return x0 + (nx - 1) * dx; }
  double max_y() const { return y0 + (ny - 1) * dx; }

  std::vector<double> row(int j) const;
  std::vector<double> column(int i) const;
};

struct PsdEstimate {
  std::vector<double> wavelengths;  // nm, log-spaced bin centres
  std::vector<double> psd1d;        // nm^3
  double fit_hurst = 0.0;
  double fit_c0 = 0.0;
  double fit_min = 0.0;  // nm
  double fit_max = 0.0;  // nm
  double total_power = 0.0;  // nm^2, spectrum integrated back to a variance
  bool fit_defined = true;   // false for degenerate (all-constant) input
};

struct RmsCurve {
  std::vector<double> lambdas;  // nm
  std::vector<double> rms;      // nm
};

// Fourier-filtering synthesis of a self-affine surface. extent/dx must give
// an integer cell count (to 1e-3 relative, the grid snaps) of at least 64.
// Deterministic for a fixed seed; the result has exactly zero mean.
RoughSurface generate_surface(const FractalParams& params, double extent_x,
                              double extent_y, double dx, std::uint64_t seed);

// Periodogram of the mean-subtracted profile, binned into log-spaced
// wavelength bins, with a log-log least-squares power-law fit inside
// [fit_min, fit_max]. Fit exponent is -1-2H.
PsdEstimate estimate_psd_1d(const std::vector<double>& profile, double dx,
                            double fit_min = 2.0, double fit_max = 100.0);

// Average of estimate_psd_1d over n_lines evenly spaced rows and n_lines
// evenly spaced columns of the surface. With n_lines == 1 this reduces to
// estimate_psd_1d on the middle row.
enum class PsdLineSet { kRows, kColumns, kBoth };
PsdEstimate estimate_psd_2d_average(const RoughSurface& surface, int n_lines,
                                    double fit_min = 2.0, double fit_max = 100.0,
                                    PsdLineSet lines = PsdLineSet::kBoth);

// Mean RMS of mean-subtracted windows of width lambda tiled over the data.
// Windows are non-overlapping from the left edge; a final end-aligned window
// is added when the tiling leaves a remainder, so the full domain is covered.
RmsCurve rms_of_segments(const std::vector<double>& profile, double dx,
                         const std::vector<double>& lambdas);
RmsCurve rms_of_segments(const RoughSurface& surface,
                         const std::vector<double>& lambdas);

// Bilinear interpolation of the height grid; exact at grid nodes. Throws
// ParameterError for queries outside the grid.
double sample_height(const RoughSurface& surface, double x, double y);

// --- persistence ---------------------------------------------------------

// Binary container (raw little-endian doubles) plus JSON sidecar
// "<path>.json" carrying grid metadata and the fractal parameters.
void save_surface(const RoughSurface& surface, const std::string& path);
RoughSurface load_surface(const std::string& path);

// CSV ingestion: "x_nm,z_nm" profile, or "x_nm,y_nm,z_nm" on a full grid.
std::vector<double> load_profile_csv(const std::string& path, double* dx_out);
RoughSurface load_surface_csv(const std::string& path);

}  // namespace roughdot
