#pragma once

// Project-wide unit system: nm, meV, ps, V, T.
//
// Coordinate convention: z is depth measured from the gate stack downward.
// The oxide occupies z < z_s(x,y) and silicon lies below (z > z_s). A
// positive vertical field E_z gives the electron a potential +E_z*z, which
// presses it up against the oxide interface from the silicon side.

namespace roughdot {

// hbar in meV*ps
inline constexpr double kHbar = 0.6582119569;

// free electron mass in meV*ps^2/nm^2  (9.1093837015e-31 kg)
inline constexpr double kElectronMass = 5.68563006e-3;

// silicon effective masses, units of kElectronMass
inline constexpr double kMassTransverse = 0.19;
inline constexpr double kMassLongitudinal = 0.98;

// silicon lattice parameter and [001] monolayer thickness, nm
inline constexpr double kA0 = 0.543;
inline constexpr double kMonolayer = kA0 / 4.0;

// conduction-band valley wavevector, nm^-1: k0 = 0.82 * 2*pi/a0
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kValleyK0 = 0.82 * 2.0 * kPi / kA0;

// Coulomb constant e^2/(4 pi eps0) in meV*nm, and silicon permittivity
inline constexpr double kCoulombVacuum = 1439.96454;
inline constexpr double kEpsSilicon = 11.7;

// Si/SiO2 conduction band offsets, meV. The tight-binding chain uses the
// 3150 value; the path-integral step barrier uses 3100.
inline constexpr double kOxideOffsetChain = 3150.0;
inline constexpr double kOxideOffsetPimc = 3100.0;

// bulk electron g-factor and Bohr magneton (meV/T)
inline constexpr double kG0 = 1.9935;
inline constexpr double kMuB = 5.7883818060e-2;
// mu_B / h in GHz/T
inline constexpr double kMuBOverPlanckGHz = 13.996244936;

// Spectral normalisation adopted for all 1D roughness spectra:
//   PSD1D(q_k) = kPsdNorm * (dx/n) * |Z_k|^2        [nm^3]
// where Z is the plain DFT of the mean-subtracted profile and q = 2*pi/lambda.
// With this definition a surface with (H = 0.28, C0 = 1.4 nm^3) carries about
// one monolayer of RMS roughness inside a 10 nm window, matching the measured
// interfaces the default parameters describe.
inline constexpr double kPsdNorm = 8.0 * kPi * kPi;

}  // namespace roughdot
