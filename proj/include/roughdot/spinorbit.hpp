#pragma once

#include <array>
#include <vector>

#include "roughdot/surface.hpp"
#include "roughdot/valley.hpp"

namespace roughdot {

using Vec3 = std::array<double, 3>;

// 3x3 g-tensor: the qubit g-factor along unit direction r is ||G r||.
struct GTensor {
  std::array<std::array<double, 3>, 3> m{};

  Vec3 apply(const Vec3& v) const;
};

// Solves G B_i = B_eff,i for three linearly independent field triples.
// Throws when the field matrix condition number exceeds 1e6.
GTensor assemble_g_matrix(const std::array<Vec3, 3>& b_fields,
                          const std::array<Vec3, 3>& b_eff);

// ||G r|| for a unit direction (1e-9 tolerance on the norm).
double g_factor(const GTensor& g, const Vec3& direction);

// qubit frequency per tesla, GHz/T
double zeeman_frequency_ghz_per_tesla(double g);

struct SoCoefficients {
  double alpha = 0.0;     // dimensionless g shift, constant term
  double beta = 0.0;      // dimensionless g shift of sin(2 phi)
  double g_iso = 0.0;     // fixed reference g0
  double residual = 0.0;  // rms of the fit
};

// Least squares of g(phi) = g0 + alpha + beta sin(2 phi) with g0 pinned to
// the bulk value; needs >= 3 distinct angles spanning more than pi/2.
SoCoefficients fit_sinusoid(const std::vector<double>& angles,
                            const std::vector<double>& g_values);

struct SublatticeFraction {
  double p_a = 0.0;  // envelope weight on even-monolayer terminations
};

// Monolayer index m = floor(z_s / (a0/4)); termination A for even m.
// p_A is the envelope-weighted fraction of A-type columns.
SublatticeFraction sublattice_fraction(const Envelope2D& env,
                                       const RoughSurface& surface);

// Interface Dresselhaus coefficient bounded by the two pure terminations:
// beta = beta_max * (2 p_A - 1), so |beta| <= beta_max always.
double dresselhaus_from_fraction(const SublatticeFraction& frac,
                                 double beta_max);

// Default calibration for the bound magnitude: linear in the vertical field.
double default_beta_max(double ez, double slope_per_field = 1e-4);

}  // namespace roughdot
