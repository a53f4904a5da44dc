#pragma once

#include <map>
#include <string>
#include <vector>

namespace roughdot {

// Harmonic dot model: V(x,y,z) = c_x (x-x_c)^2 + c_y (y-y_c)^2 + z*E_z
struct HarmonicDot {
  double xc = 0.0;  // nm
  double yc = 0.0;  // nm
  double cx = 0.3;  // meV/nm^2
  double cy = 0.3;  // meV/nm^2
  double ez = 28.0; // meV/nm

  void validate() const;  // curvatures and field must be positive
};

double eval_harmonic(const HarmonicDot& dot, double x, double y, double z);

// Per (gate, dot) linear response of the dot parameters to a gate voltage.
struct GateAction {
  double dxc_dv = 0.0;  // nm/V
  double dez_dv = 0.0;  // meV nm^-1 V^-1
};

class GateResponse {
 public:
  // built-in table measured for the reference device (gates P1..P3, J1, J2
  // acting on dots 1 and 2)
  static GateResponse device_default();
  static GateResponse from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;

  void set(const std::string& gate, int dot, const GateAction& action);
  const GateAction& get(const std::string& gate, int dot) const;  // throws
  bool has(const std::string& gate, int dot) const;
  std::vector<std::string> gates() const;

 private:
  std::map<std::pair<std::string, int>, GateAction> table_;
};

// First-order gate action: shifts the dot centre and the vertical field,
// curvatures unchanged.
HarmonicDot apply_gate(const HarmonicDot& dot, const GateResponse& response,
                       const std::string& gate, int dot_index, double dv);

// Two harmonic wells joined by a smooth-min merge rule:
//   V_lat(x,y) = -mu * log(exp(-Va/mu) + exp(-Vb/mu))
// where Va/Vb are the single-dot lateral parabolas plus their offsets.
// The vertical term z*E_z(x) interpolates E_z linearly between the centres.
struct DoubleDotPotential {
  HarmonicDot left;
  HarmonicDot right;
  double left_offset = 0.0;   // meV, detuning
  double right_offset = 0.0;  // meV
  double merge_mu = 3.0;      // meV, smooth-min softness
  double barrier_height = 0.0;  // meV at the midpoint, above the lower well
  double v_j = 0.0;           // V, applied J-gate bias
  std::string merge_rule = "smoothmin";
};

// Applies the J-gate response to both dots (dot 1 = left, dot 2 = right),
// then joins the wells. Throws when the dots end up closer than 2 nm.
DoubleDotPotential build_double_dot(const HarmonicDot& left,
                                    const HarmonicDot& right, double v_j,
                                    const GateResponse& response,
                                    double merge_mu = 3.0,
                                    const std::string& j_gate = "J1");

double eval_double_dot(const DoubleDotPotential& pot, double x, double y,
                       double z);

// --- imported potential grids ---------------------------------------------

struct PotentialGrid {
  std::vector<double> values;  // meV, index (i + nx*(j + ny*k))
  int nx = 0, ny = 0, nz = 0;
  double dx = 0.0, dy = 0.0, dz = 0.0;  // nm
  double x0 = 0.0, y0 = 0.0, z0 = 0.0;

  double at(int i, int j, int k) const {
    return values[static_cast<std::size_t>(i) +
                  static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k)];
  }
  double& at(int i, int j, int k) {
    return values[static_cast<std::size_t>(i) +
                  static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k)];
  }
  double interpolate(double x, double y, double z) const;  // trilinear
};

PotentialGrid load_potential_csv(const std::string& path);

struct Box {
  double x_lo, x_hi, y_lo, y_hi, z_lo, z_hi;
};

struct HarmonicFit {
  HarmonicDot dot;
  double offset = 0.0;    // meV, constant term
  double residual = 0.0;  // meV rms
  bool confining = true;  // false when a fitted curvature is negative
};

// Least-squares fit of the harmonic model inside the window. Throws
// NumericalError when the normal equations are singular.
HarmonicFit fit_harmonic(const PotentialGrid& grid, const Box& window);

}  // namespace roughdot
