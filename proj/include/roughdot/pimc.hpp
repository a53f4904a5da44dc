#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roughdot/electrostatics.hpp"
#include "roughdot/surface.hpp"

namespace roughdot {

// Single-electron potential seen by the path sampler, in meV. Gradient is
// optional; when available the virial energy estimator is reported too.
class PimcPotential {
 public:
  virtual ~PimcPotential() = default;
  virtual double energy(double x, double y, double z) const = 0;
  virtual bool has_gradient() const { return false; }
  virtual std::array<double, 3> gradient(double, double, double) const {
    return {0.0, 0.0, 0.0};
  }
};

// Device potential: double-dot wells plus the oxide step riding on the
// rough interface. Depth coordinates: oxide occupies z < z_s(x,y).
class DoubleDotRoughPotential : public PimcPotential {
 public:
  DoubleDotRoughPotential(DoubleDotPotential pot, const RoughSurface* surface,
                          double v_step);
  double energy(double x, double y, double z) const override;

 private:
  DoubleDotPotential pot_;
  const RoughSurface* surface_;  // nullptr means a flat interface at z = 0
  double v_step_;
};

struct PimcConfig {
  int n_slices = 256;
  double beta_t = 0.4246;  // ps, inverse temperature in time units
  std::array<double, 3> masses = {0.19, 0.19, 0.98};  // units of m_e
  double eps_si = 11.7;
  double v_step = 3100.0;   // meV
  double coulomb_rc = 0.1;  // nm, soft-core radius
  std::uint64_t seed = 1;
  long n_sweeps = 20000;
  long burn_in = 2000;
  int staging_length = 16;
  int n_dim = 3;        // 1 enables the separable test mode
  int n_electrons = 2;
  bool coulomb_on = true;
  double target_stage_work = 1.5;  // adaptive lambda ladder step, in hbar
  int max_stages = 64;
  long checkpoint_every = 0;  // sweeps; 0 disables
  std::string checkpoint_path;

  double tau() const { return beta_t / n_slices; }  // ps per slice
  void validate() const;
};

// Two world lines of n_slices beads each. sector_lambda mixes the identity
// (0) and exchanged (1) closure of the imaginary-time boundary.
struct PathEnsemble {
  std::vector<std::array<double, 3>> beads;  // [e * n_slices + m]
  int n_slices = 0;
  int n_electrons = 2;
  double sector_lambda = 0.0;
  double action = 0.0;  // hbar units

  std::array<double, 3>& at(int e, int m) {
    return beads[static_cast<std::size_t>(e) * n_slices + m];
  }
  const std::array<double, 3>& at(int e, int m) const {
    return beads[static_cast<std::size_t>(e) * n_slices + m];
  }
};

struct BlockedScalar {
  double mean = 0.0;
  double error = 0.0;  // standard error from block averaging
  long n_samples = 0;
};

struct SampleStats {
  BlockedScalar energy_primitive;  // meV, all electrons
  BlockedScalar energy_virial;     // meV, only when the potential has grads
  BlockedScalar potential;         // meV per slice sum
  BlockedScalar delta_k;           // K_x - K_id in hbar units
  std::array<BlockedScalar, 3> spread_sq;  // <r_a^2> - <r_a>^2 per axis, nm^2
  std::array<double, 3> mean_position{};   // electron 0, nm
  double acceptance_single = 0.0;
  double acceptance_staging = 0.0;
  double acceptance_displace = 0.0;
  double autocorr_sweeps = 0.0;  // integrated autocorrelation of delta_k
  PathEnsemble final_paths;
};

// Metropolis sampling of one sector (or a mixed-lambda ensemble).
// Deterministic for a fixed config seed.
SampleStats sample(const PimcPotential& pot, const PimcConfig& cfg,
                   double sector_lambda,
                   const PathEnsemble* start = nullptr);

struct StageResult {
  double lambda_lo = 0.0;
  double lambda_hi = 0.0;
  double delta_f = 0.0;  // hbar units, F(hi) - F(lo)
  double error = 0.0;
  double overlap = 0.0;  // Bennett overlap diagnostic in (0,1]
};

struct ExchangeEstimate {
  double j_uev = 0.0;       // exchange splitting, micro-eV
  double j_err_uev = 0.0;
  double delta_s = 0.0;     // hbar units
  double delta_s_err = 0.0;
  bool bound_only = false;  // true when only an upper bound is resolved
  std::vector<StageResult> stages;
  double acceptance_single = 0.0;
  double autocorr_sweeps = 0.0;
};

// Free-energy difference between the identity and exchanged sectors via a
// ladder of mixed ensembles with Bennett acceptance-ratio estimates per
// stage; J = (2/beta) exp(-dS/hbar).
ExchangeEstimate estimate_exchange(const PimcPotential& pot,
                                   const PimcConfig& cfg,
                                   const std::array<double, 3>& left_start,
                                   const std::array<double, 3>& right_start);

// Device-level wrapper: builds the rough-interface double-dot potential and
// starts the electrons at the two well centres.
ExchangeEstimate estimate_exchange(const DoubleDotPotential& pot,
                                   const RoughSurface* surface,
                                   const PimcConfig& cfg);

struct SurfaceExchangeRow {
  std::uint64_t surface_seed = 0;
  double j_uev = 0.0;
  double j_err_uev = 0.0;
  double delta_s = 0.0;
  double delta_s_err = 0.0;
  double interdot_nm = 0.0;  // envelope-based dot separation
  bool bound_only = false;
};

// Exchange across surface realizations at fixed gate voltages, with the
// envelope-model interdot distance for the distance-J correlation.
std::vector<SurfaceExchangeRow> exchange_vs_surface(
    const DoubleDotPotential& pot, const std::vector<RoughSurface>& surfaces,
    const PimcConfig& cfg, int threads = 1);

}  // namespace roughdot
