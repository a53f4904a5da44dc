#include "roughdot/spinorbit.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"

namespace roughdot {

Vec3 GTensor::apply(const Vec3& v) const {
  Vec3 out{};
  for (int i = 0; i < 3; ++i)
    out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
  return out;
}

GTensor assemble_g_matrix(const std::array<Vec3, 3>& b_fields,
                          const std::array<Vec3, 3>& b_eff) {
  Eigen::Matrix3d B, E;
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) {
      B(c, i) = b_fields[i][c];  // columns are the applied fields
      E(c, i) = b_eff[i][c];
    }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(B);
  const double smin = svd.singularValues()(2);
  const double smax = svd.singularValues()(0);
  if (!(smin > 0.0) || smax / smin > 1e6)
    throw ParameterError("g-matrix: applied fields are too close to coplanar");
  Eigen::Matrix3d G = E * B.inverse();
  GTensor out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.m[i][j] = G(i, j);
  return out;
}

double g_factor(const GTensor& g, const Vec3& dir) {
  const double n2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
    throw ParameterError("g-factor: direction must be a unit vector");
  Vec3 e = g.apply(dir);
  return std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
}

double zeeman_frequency_ghz_per_tesla(double g) {
  return g * kMuBOverPlanckGHz;
}

SoCoefficients fit_sinusoid(const std::vector<double>& angles,
                            const std::vector<double>& g_values) {
  if (angles.size() != g_values.size())
    throw ParameterError("sinusoid fit: angle/value length mismatch");
  if (angles.size() < 3)
    throw ParameterError("sinusoid fit: need at least 3 angles");
  double lo = angles[0], hi = angles[0];
  for (double a : angles) {
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (!(hi - lo > kPi / 2))
    throw ParameterError("sinusoid fit: angles must span more than pi/2");

  // least squares for [alpha, beta] against g - g0 = alpha + beta sin(2 phi)
  double s11 = static_cast<double>(angles.size());
  double s12 = 0.0, s22 = 0.0, r1 = 0.0, r2 = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double s = std::sin(2.0 * angles[i]);
    const double d = g_values[i] - kG0;
    s12 += s;
    s22 += s * s;
    r1 += d;
    r2 += d * s;
  }
  const double det = s11 * s22 - s12 * s12;
  if (std::abs(det) < 1e-9 * s11 * std::max(s22, 1e-300))
    throw ParameterError("sinusoid fit: angle set does not separate the terms");

  SoCoefficients out;
  out.g_iso = kG0;
  out.alpha = (s22 * r1 - s12 * r2) / det;
  out.beta = (s11 * r2 - s12 * r1) / det;
  double ss = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double model = kG0 + out.alpha + out.beta * std::sin(2.0 * angles[i]);
    ss += (g_values[i] - model) * (g_values[i] - model);
  }
  out.residual = std::sqrt(ss / static_cast<double>(angles.size()));
  return out;
}

SublatticeFraction sublattice_fraction(const Envelope2D& env,
                                       const RoughSurface& surface) {
  double p = 0.0;
  const double cell = env.h * env.h;
  for (int j = 0; j < env.n; ++j) {
    const double y = env.y0 + j * env.h;
    for (int i = 0; i < env.n; ++i) {
      const double x = env.x0 + i * env.h;
      const double zs = sample_height(surface, x, y);
      const long ml = static_cast<long>(std::floor(zs / kMonolayer));
      if ((ml % 2 + 2) % 2 == 0) p += env.at(i, j) * cell;
    }
  }
  SublatticeFraction out;
  out.p_a = std::min(1.0, std::max(0.0, p));
  return out;
}

double dresselhaus_from_fraction(const SublatticeFraction& frac,
                                 double beta_max) {
  if (!(beta_max > 0.0))
    throw ParameterError("dresselhaus: beta_max must be positive");
  return beta_max * (2.0 * frac.p_a - 1.0);
}

double default_beta_max(double ez, double slope_per_field) {
  return slope_per_field * ez;
}

}  // namespace roughdot
