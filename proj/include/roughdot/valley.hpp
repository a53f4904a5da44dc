#pragma once

#include <complex>
#include <vector>

#include "roughdot/electrostatics.hpp"
#include "roughdot/surface.hpp"

namespace roughdot {

// One-dimensional two-band tight-binding chain along z (depth). Nearest and
// second-neighbour hoppings are calibrated once so the infinite-chain
// dispersion E(k) = 2 t1 cos(ka) + 2 t2 cos(2ka) has its minima at the
// silicon valley wavevector +-k0 with longitudinal-mass curvature.
struct ChainModel {
  double a = 0.0;       // nm, site spacing (one monolayer)
  double t1 = 0.0;      // meV
  double t2 = 0.0;      // meV
  int n_sites = 0;
  double k0 = 0.0;      // nm^-1
  double barrier = 0.0; // meV oxide step
  double ez = 0.0;      // meV/nm
  double interface_z = 0.0;  // nm, depth of the oxide step
  double interface_width = 0.0;  // nm, logistic step 0 -> hard step
  double z_first = 0.0;  // nm, depth of site 0 (oxide side)
  double band_min = 0.0; // meV, infinite-chain E(k0), subtracted on site
};

struct ChainSpectrum {
  double splitting = 0.0;   // meV, E1 - E0
  double phase = 0.0;       // rad in (-pi, pi]
  double e0 = 0.0;          // meV
  double e1 = 0.0;          // meV
  double peak_k = 0.0;      // nm^-1, oscillation peak near 2 k0
  bool degenerate = false;  // splitting below the 1e-6 meV floor
};

// Lowest lateral envelope state of a dot over a rough surface.
struct Envelope2D {
  std::vector<double> density;  // probability per nm^2, sum*h^2 == 1
  int n = 0;                    // grid nodes per side
  double h = 0.0;               // nm, envelope grid spacing
  double x0 = 0.0, y0 = 0.0;    // nm, window origin
  double cx = 0.0, cy = 0.0;    // nm, centre of mass <x>, <y>
  double spread_x = 0.0;        // nm
  double spread_y = 0.0;        // nm
  double energy = 0.0;          // meV
  double boundary_mass = 0.0;   // density mass on the window edge
  bool confined = true;         // false when boundary mass exceeds 1%
  int iterations = 0;
  HarmonicDot dot;              // the confining dot that produced this state

  double at(int i, int j) const { return density[static_cast<std::size_t>(j) * n + i]; }
};

struct ValleyResult {
  double splitting = 0.0;          // meV, 2|Delta_dot|
  double phase = 0.0;              // rad, arg(Delta_dot) in (-pi, pi]
  std::complex<double> delta;      // meV, complex dot coupling
  double suppression = 0.0;        // |sum w exp(-2ik0 z_s)| in [0,1]
  double mean_height = 0.0;        // nm, envelope-weighted z_s
  double phase_local = 0.0;        // rad, phase re-referenced to mean_height
  double ez = 0.0;                 // meV/nm
  bool degenerate = false;
};

struct EnvelopeOptions {
  double grid_h = 0.5;        // nm
  double halfwidth_sigmas = 4.0;
  double margin = 2.0;        // nm added to the window half-width
  double tol = 1e-8;          // meV, eigenvalue convergence
  int max_iterations = 2000;
};

// Finite-difference ground state of the lateral effective-mass problem
//   [-hbar^2/(2 m_t) laplace + c_x(x-x_c)^2 + c_y(y-y_c)^2 + E_z z_s(x,y)]
// solved by Lanczos iteration started from the bare harmonic ground state.
Envelope2D solve_envelope(const HarmonicDot& dot, const RoughSurface& surface,
                          const EnvelopeOptions& opts = {});

// Flat-surface analytic values for the bare dot (used as oracles and for
// the variational floor check).
double harmonic_ground_energy(const HarmonicDot& dot);
double harmonic_spread_x(const HarmonicDot& dot);
double harmonic_spread_y(const HarmonicDot& dot);

// Builds a chain with the oxide step at depth interface_z; the vertical
// field presses the electron against the step from below (larger depth).
// interface_width <= 0 gives a hard step; the default width a0/2 reproduces
// measured splitting scales.
ChainModel build_chain(double ez, double interface_z, int n_sites,
                       double interface_width = 0.2715);

// Dense diagonalisation of the chain; splitting, absolute valley phase and
// the 2 k0 oscillation peak.
ChainSpectrum chain_valley_splitting(const ChainModel& chain);

// Oscillatory part psi_osc = density_plus - density_minus averaged over the
// x-y plane, Fourier transformed along z. Returns the complex phase phi and
// the refined peak position near 2 k0, with the convention
//   psi_osc(z) ~ 2 Env(z)^2 cos(2 k0 z + phi).
// Arrays are indexed (i + nx*(j + ny*k)); z of slab k is z0 + k*dz.
struct PhasePeak {
  double phase = 0.0;   // rad
  double peak_k = 0.0;  // nm^-1
};
PhasePeak extract_valley_phase(const std::vector<double>& density_plus,
                               const std::vector<double>& density_minus,
                               int nx, int ny, int nz, double dz, double z0);

// Lateral phase averaging of the per-column valley coupling:
//   Delta_dot = Delta_1D(E_z) * sum_xy |psi|^2 exp(-2 i k0 z_s(x,y))
// where Delta_1D comes from the reference chain.
ValleyResult dot_valley_observables(const Envelope2D& env,
                                    const RoughSurface& surface,
                                    const ChainModel& chain_ref);

}  // namespace roughdot
