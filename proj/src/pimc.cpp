#include "roughdot/pimc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"
#include "roughdot/rng.hpp"
#include "roughdot/valley.hpp"

namespace roughdot {

void PimcConfig::validate() const {
  if (n_slices < 64) throw ParameterError("pimc: need at least 64 slices");
  if (!(beta_t > 0.0)) throw ParameterError("pimc: beta_t must be positive");
  if (n_dim != 1 && n_dim != 3)
    throw ParameterError("pimc: n_dim must be 1 or 3");
  if (n_electrons != 1 && n_electrons != 2)
    throw ParameterError("pimc: one or two electrons");
  if (n_sweeps < 100 || burn_in < 0)
    throw ParameterError("pimc: sweep counts out of range");
  if (staging_length < 4 || staging_length > n_slices / 2 ||
      staging_length > 63)
    throw ParameterError("pimc: staging length out of range");
  for (double m : masses)
    if (!(m > 0.0)) throw ParameterError("pimc: masses must be positive");
  // Trotter criterion: the slice step must resolve the fastest confinement
  // scale; tau * V_scale / hbar stays comfortably below one for the default
  // device scales, checked again by the convergence tests.
  if (tau() > 0.02)
    throw ParameterError("pimc: tau too coarse; raise n_slices or lower beta_t");
}

DoubleDotRoughPotential::DoubleDotRoughPotential(DoubleDotPotential pot,
                                                 const RoughSurface* surface,
                                                 double v_step)
    : pot_(std::move(pot)), surface_(surface), v_step_(v_step) {}

double DoubleDotRoughPotential::energy(double x, double y, double z) const {
  double zs = 0.0;
  if (surface_) zs = sample_height(*surface_, x, y);
  // oxide step: 1 in the oxide (z < z_s), logistic width a0 as in the
  // two-electron Hamiltonian definition
  const double step = 1.0 / (1.0 + std::exp(-4.0 * (zs - z) / kA0));
  return eval_double_dot(pot_, x, y, z) + v_step_ * step;
}

namespace {

struct Accumulator {
  std::vector<double> block_sums;
  double current = 0.0;
  long in_block = 0;
  long block_size = 1;

  void configure(long n_samples, int n_blocks) {
    block_size = std::max(1L, n_samples / n_blocks);
    block_sums.clear();
    current = 0.0;
    in_block = 0;
  }
  void add(double v) {
    current += v;
    if (++in_block == block_size) {
      block_sums.push_back(current / block_size);
      current = 0.0;
      in_block = 0;
    }
  }
  BlockedScalar result() const {
    BlockedScalar out;
    const std::size_t nb = block_sums.size();
    out.n_samples = static_cast<long>(nb) * block_size;
    if (nb == 0) return out;
    double m = std::accumulate(block_sums.begin(), block_sums.end(), 0.0) / nb;
    double v = 0.0;
    for (double b : block_sums) v += (b - m) * (b - m);
    out.mean = m;
    out.error = nb > 1 ? std::sqrt(v / (nb - 1) / nb) : 0.0;
    return out;
  }
};

// integrated autocorrelation time (sweeps) from the raw series
double autocorr_time(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 64) return 0.0;
  double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var /= n;
  if (var <= 0.0) return 0.0;
  double tau = 0.5;
  for (std::size_t lag = 1; lag < n / 4; ++lag) {
    double c = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) c += (x[i] - m) * (x[i + lag] - m);
    c /= (n - lag) * var;
    if (c < 0.05) break;
    tau += c;
  }
  return 2.0 * tau;
}

class Chain {
 public:
  Chain(const PimcPotential& pot, const PimcConfig& cfg, double lambda,
        const PathEnsemble* start, std::uint64_t seed)
      : pot_(pot),
        cfg_(cfg),
        lambda_(lambda),
        rng_(seed),
        m_slices_(cfg.n_slices),
        n_el_(cfg.n_electrons),
        tau_e_(cfg.beta_t / cfg.n_slices / kHbar) {
    for (int a = 0; a < 3; ++a) {
      mass_[a] = cfg.masses[a] * kElectronMass;
      // spring coefficient per link and axis: m/(2 hbar^2 tau_e)
      spring_[a] = mass_[a] / (2.0 * kHbar * kHbar * tau_e_);
      step_[a] = std::sqrt(kHbar * kHbar * tau_e_ / mass_[a]);
    }
    coulomb_k_ = kCoulombVacuum / cfg.eps_si;
    if (start && start->n_slices == m_slices_ &&
        start->n_electrons == n_el_) {
      paths_ = *start;
    } else {
      paths_.n_slices = m_slices_;
      paths_.n_electrons = n_el_;
      paths_.beads.assign(static_cast<std::size_t>(n_el_) * m_slices_,
                          {0.0, 0.0, 0.0});
    }
    paths_.sector_lambda = lambda;
    potential_cache_.assign(static_cast<std::size_t>(n_el_) * m_slices_, 0.0);
    coulomb_cache_.assign(m_slices_, 0.0);
    refresh_caches();
  }

  void place_electron(int e, const std::array<double, 3>& r) {
    for (int m = 0; m < m_slices_; ++m) paths_.at(e, m) = r;
    refresh_caches();
  }

  const PathEnsemble& paths() const { return paths_; }

  // --- action pieces -------------------------------------------------------

  double bead_potential(int e, int m) const {
    const auto& r = paths_.at(e, m);
    return pot_.energy(r[0], r[1], r[2]);
  }

  double coulomb_slice(int m) const {
    if (!cfg_.coulomb_on || n_el_ < 2) return 0.0;
    const auto& r1 = paths_.at(0, m);
    const auto& r2 = paths_.at(1, m);
    double d2 = 0.0;
    for (int a = 0; a < cfg_.n_dim; ++a)
      d2 += (r1[a] - r2[a]) * (r1[a] - r2[a]);
    return coulomb_k_ / std::sqrt(d2 + cfg_.coulomb_rc * cfg_.coulomb_rc);
  }

  double link_energy(const std::array<double, 3>& a,
                     const std::array<double, 3>& b) const {
    double s = 0.0;
    for (int ax = 0; ax < cfg_.n_dim; ++ax)
      s += spring_[ax] * (a[ax] - b[ax]) * (a[ax] - b[ax]);
    return s;
  }

  // boundary spring energies for the two closures
  double k_identity() const {
    double s = 0.0;
    for (int e = 0; e < n_el_; ++e)
      s += link_energy(paths_.at(e, m_slices_ - 1), paths_.at(e, 0));
    return s;
  }
  double k_exchange() const {
    if (n_el_ < 2) return k_identity();
    return link_energy(paths_.at(0, m_slices_ - 1), paths_.at(1, 0)) +
           link_energy(paths_.at(1, m_slices_ - 1), paths_.at(0, 0));
  }

  double boundary_energy() const {
    if (lambda_ == 0.0) return k_identity();
    if (lambda_ == 1.0) return k_exchange();
    return (1.0 - lambda_) * k_identity() + lambda_ * k_exchange();
  }

  double total_action() const {
    double s = boundary_energy();
    for (int e = 0; e < n_el_; ++e)
      for (int m = 0; m + 1 < m_slices_; ++m)
        s += link_energy(paths_.at(e, m), paths_.at(e, m + 1));
    for (int e = 0; e < n_el_; ++e)
      for (int m = 0; m < m_slices_; ++m)
        s += tau_e_ * potential_cache_[idx(e, m)];
    for (int m = 0; m < m_slices_; ++m) s += tau_e_ * coulomb_cache_[m];
    return s;
  }

  double spring_action_total() const {
    double s = boundary_energy();
    for (int e = 0; e < n_el_; ++e)
      for (int m = 0; m + 1 < m_slices_; ++m)
        s += link_energy(paths_.at(e, m), paths_.at(e, m + 1));
    return s;
  }

  double potential_sum() const {
    double v = std::accumulate(potential_cache_.begin(),
                               potential_cache_.end(), 0.0);
    return v + std::accumulate(coulomb_cache_.begin(), coulomb_cache_.end(),
                               0.0);
  }

  // --- moves ---------------------------------------------------------------

  bool move_single_bead(double scale) {
    const int e = n_el_ == 1 ? 0 : static_cast<int>(rng_.raw() % n_el_);
    const int m = static_cast<int>(rng_.raw() % m_slices_);
    const auto old_r = paths_.at(e, m);
    std::array<double, 3> new_r = old_r;
    for (int a = 0; a < cfg_.n_dim; ++a)
      new_r[a] += scale * step_[a] * rng_.normal();

    double d_spring = 0.0;
    // backward link
    if (m > 0) {
      d_spring += link_energy(paths_.at(e, m - 1), new_r) -
                  link_energy(paths_.at(e, m - 1), old_r);
    }
    if (m + 1 < m_slices_) {
      d_spring += link_energy(new_r, paths_.at(e, m + 1)) -
                  link_energy(old_r, paths_.at(e, m + 1));
    }
    double d_boundary = 0.0;
    if (m == 0 || m == m_slices_ - 1) {
      const double k_id_old = k_identity(), k_x_old = k_exchange();
      paths_.at(e, m) = new_r;
      const double k_id_new = k_identity(), k_x_new = k_exchange();
      paths_.at(e, m) = old_r;
      d_boundary = (1.0 - lambda_) * (k_id_new - k_id_old) +
                   lambda_ * (k_x_new - k_x_old);
    }

    paths_.at(e, m) = new_r;
    const double v_new = bead_potential(e, m);
    const double c_new = coulomb_slice(m);
    paths_.at(e, m) = old_r;
    const double dv = (v_new - potential_cache_[idx(e, m)]) +
                      (c_new - coulomb_cache_[m]);

    const double ds = d_spring + d_boundary + tau_e_ * dv;
    if (accept(ds)) {
      paths_.at(e, m) = new_r;
      potential_cache_[idx(e, m)] = v_new;
      coulomb_cache_[m] = c_new;
      return true;
    }
    return false;
  }

  // staging reconstruction of an interior segment (endpoints fixed)
  bool move_staging() {
    const int g = cfg_.staging_length;
    const int e = n_el_ == 1 ? 0 : static_cast<int>(rng_.raw() % n_el_);
    const int s = static_cast<int>(rng_.raw() % (m_slices_ - g));
    // propose the exact free-particle bridge bead by bead
    std::array<std::array<double, 3>, 64> old_beads;
    double v_old = 0.0, v_new = 0.0;
    for (int j = 1; j < g; ++j) {
      old_beads[j] = paths_.at(e, s + j);
      v_old += potential_cache_[idx(e, s + j)] + coulomb_cache_[s + j];
    }
    for (int j = 1; j < g; ++j) {
      const int remaining = g - j;
      const auto& prev = paths_.at(e, s + j - 1);
      const auto& end = paths_.at(e, s + g);
      std::array<double, 3> r{};
      for (int a = 0; a < cfg_.n_dim; ++a) {
        const double mean =
            (prev[a] * remaining + end[a]) / (remaining + 1.0);
        const double var = (static_cast<double>(remaining) / (remaining + 1.0)) *
                           kHbar * kHbar * tau_e_ / mass_[a];
        r[a] = mean + std::sqrt(var) * rng_.normal();
      }
      paths_.at(e, s + j) = r;
    }
    std::array<double, 64> new_pot;
    std::array<double, 64> new_coul;
    for (int j = 1; j < g; ++j) {
      new_pot[j] = bead_potential(e, s + j);
      new_coul[j] = coulomb_slice(s + j);
      v_new += new_pot[j] + new_coul[j];
    }
    if (accept(tau_e_ * (v_new - v_old))) {
      for (int j = 1; j < g; ++j) {
        potential_cache_[idx(e, s + j)] = new_pot[j];
        coulomb_cache_[s + j] = new_coul[j];
      }
      return true;
    }
    for (int j = 1; j < g; ++j) paths_.at(e, s + j) = old_beads[j];
    return false;
  }

  bool move_displace(double scale) {
    const int e = n_el_ == 1 ? 0 : static_cast<int>(rng_.raw() % n_el_);
    std::array<double, 3> shift{};
    for (int a = 0; a < cfg_.n_dim; ++a)
      shift[a] = scale * rng_.normal();

    const double k_id_old = k_identity(), k_x_old = k_exchange();
    double v_old = 0.0;
    for (int m = 0; m < m_slices_; ++m)
      v_old += potential_cache_[idx(e, m)] + coulomb_cache_[m];

    for (int m = 0; m < m_slices_; ++m)
      for (int a = 0; a < cfg_.n_dim; ++a) paths_.at(e, m)[a] += shift[a];

    std::vector<double> new_pot(m_slices_), new_coul(m_slices_);
    double v_new = 0.0;
    for (int m = 0; m < m_slices_; ++m) {
      new_pot[m] = bead_potential(e, m);
      new_coul[m] = coulomb_slice(m);
      v_new += new_pot[m] + new_coul[m];
    }
    const double k_id_new = k_identity(), k_x_new = k_exchange();
    const double ds = (1.0 - lambda_) * (k_id_new - k_id_old) +
                      lambda_ * (k_x_new - k_x_old) +
                      tau_e_ * (v_new - v_old);
    if (accept(ds)) {
      for (int m = 0; m < m_slices_; ++m) {
        potential_cache_[idx(e, m)] = new_pot[m];
        coulomb_cache_[m] = new_coul[m];
      }
      return true;
    }
    for (int m = 0; m < m_slices_; ++m)
      for (int a = 0; a < cfg_.n_dim; ++a) paths_.at(e, m)[a] -= shift[a];
    return false;
  }

  // --- sweep and measurement ----------------------------------------------

  struct SweepCounters {
    long single_acc = 0, single_try = 0;
    long staging_acc = 0, staging_try = 0;
    long displace_acc = 0, displace_try = 0;
  };

  void sweep(SweepCounters* c) {
    const int n_staging = std::max(1, m_slices_ / cfg_.staging_length);
    for (int e = 0; e < n_el_; ++e) {
      for (int k = 0; k < n_staging; ++k) {
        c->staging_acc += move_staging();
        ++c->staging_try;
      }
      for (int k = 0; k < m_slices_ / 2; ++k) {
        c->single_acc += move_single_bead(single_scale_);
        ++c->single_try;
      }
      c->displace_acc += move_displace(displace_scale_);
      ++c->displace_try;
    }
  }

  void adapt(const SweepCounters& c) {
    if (c.single_try > 0) {
      const double r = static_cast<double>(c.single_acc) / c.single_try;
      if (r < 0.35) single_scale_ *= 0.9;
      if (r > 0.55) single_scale_ *= 1.1;
      single_scale_ = std::clamp(single_scale_, 0.05, 20.0);
    }
    if (c.displace_try > 0) {
      const double r = static_cast<double>(c.displace_acc) / c.displace_try;
      if (r < 0.2) displace_scale_ *= 0.9;
      if (r > 0.5) displace_scale_ *= 1.1;
      displace_scale_ = std::clamp(displace_scale_, 0.02, 10.0);
    }
  }

  double delta_k() const { return k_exchange() - k_identity(); }

  double virial_energy() const {
    // E = <V> + (1/2) <r . grad V> per slice, plus Coulomb's own virial
    double acc = 0.0;
    for (int e = 0; e < n_el_; ++e)
      for (int m = 0; m < m_slices_; ++m) {
        const auto& r = paths_.at(e, m);
        auto grad = pot_.gradient(r[0], r[1], r[2]);
        double rv = 0.0;
        for (int a = 0; a < cfg_.n_dim; ++a) rv += r[a] * grad[a];
        acc += potential_cache_[idx(e, m)] + 0.5 * rv;
      }
    return acc / m_slices_;
  }

  GaussianRng& rng() { return rng_; }
  double tau_e() const { return tau_e_; }
  double single_scale_ = 1.0;
  double displace_scale_ = 1.0;

  void refresh_caches() {
    for (int e = 0; e < n_el_; ++e)
      for (int m = 0; m < m_slices_; ++m)
        potential_cache_[idx(e, m)] = bead_potential(e, m);
    for (int m = 0; m < m_slices_; ++m) coulomb_cache_[m] = coulomb_slice(m);
  }

 private:
  std::size_t idx(int e, int m) const {
    return static_cast<std::size_t>(e) * m_slices_ + m;
  }
  bool accept(double ds) {
    if (ds <= 0.0) return true;
    if (ds > 700.0) return false;
    return rng_.uniform() < std::exp(-ds);
  }

  const PimcPotential& pot_;
  const PimcConfig& cfg_;
  double lambda_;
  GaussianRng rng_;
  int m_slices_;
  int n_el_;
  double tau_e_;  // meV^-1 per slice
  std::array<double, 3> mass_{}, spring_{}, step_{};
  double coulomb_k_ = 0.0;
  PathEnsemble paths_;
  std::vector<double> potential_cache_;
  std::vector<double> coulomb_cache_;
};

}  // namespace

namespace {

// serialisable measurement state for resume-safe long chains
struct SampleProgress {
  long sweeps_done = 0;
  Accumulator e_prim, e_vir, pot_acc, dk_acc;
  std::array<Accumulator, 3> r2, r1;
  Chain::SweepCounters totals;
  std::vector<double> dk_series;
  long low_acceptance_run = 0;
};

nlohmann::json accum_to_json(const Accumulator& a) {
  return {{"blocks", a.block_sums},
          {"current", a.current},
          {"in_block", a.in_block},
          {"block_size", a.block_size}};
}

void accum_from_json(const nlohmann::json& j, Accumulator* a) {
  a->block_sums = j.at("blocks").get<std::vector<double>>();
  a->current = j.at("current").get<double>();
  a->in_block = j.at("in_block").get<long>();
  a->block_size = j.at("block_size").get<long>();
}

std::uint64_t config_fingerprint(const PimcConfig& cfg, double lambda) {
  std::uint64_t h = derive_seed(cfg.seed, cfg.n_slices);
  h = derive_seed(h, static_cast<std::uint64_t>(cfg.n_sweeps));
  h = derive_seed(h, static_cast<std::uint64_t>(cfg.n_dim * 17 + cfg.n_electrons));
  h = derive_seed(h, static_cast<std::uint64_t>(lambda * 1e9));
  h = derive_seed(h, static_cast<std::uint64_t>(cfg.beta_t * 1e9));
  return h;
}

void save_checkpoint(const std::string& path, const PimcConfig& cfg,
                     double lambda, const Chain& chain,
                     const std::string& rng_state, double single_scale,
                     double displace_scale, const SampleProgress& prog) {
  nlohmann::json j;
  j["schema"] = "roughdot.pimc.checkpoint.v1";
  j["fingerprint"] = config_fingerprint(cfg, lambda);
  j["sweeps_done"] = prog.sweeps_done;
  j["rng"] = rng_state;
  j["single_scale"] = single_scale;
  j["displace_scale"] = displace_scale;
  std::vector<double> flat;
  flat.reserve(chain.paths().beads.size() * 3);
  for (const auto& b : chain.paths().beads)
    for (double v : b) flat.push_back(v);
  j["beads"] = flat;
  j["e_prim"] = accum_to_json(prog.e_prim);
  j["e_vir"] = accum_to_json(prog.e_vir);
  j["pot"] = accum_to_json(prog.pot_acc);
  j["dk"] = accum_to_json(prog.dk_acc);
  for (int a = 0; a < 3; ++a) {
    j["r2"][a] = accum_to_json(prog.r2[a]);
    j["r1"][a] = accum_to_json(prog.r1[a]);
  }
  j["counters"] = {prog.totals.single_acc,   prog.totals.single_try,
                   prog.totals.staging_acc,  prog.totals.staging_try,
                   prog.totals.displace_acc, prog.totals.displace_try};
  j["dk_series"] = prog.dk_series;
  j["low_acceptance_run"] = prog.low_acceptance_run;
  std::ofstream os(path + ".tmp");
  os << j.dump() << '\n';
  os.close();
  std::rename((path + ".tmp").c_str(), path.c_str());
}

bool load_checkpoint(const std::string& path, const PimcConfig& cfg,
                     double lambda, PathEnsemble* beads_out,
                     std::string* rng_state, double* single_scale,
                     double* displace_scale, SampleProgress* prog) {
  std::ifstream is(path);
  if (!is) return false;
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception&) {
    return false;
  }
  if (j.value("fingerprint", 0ULL) != config_fingerprint(cfg, lambda))
    throw ParameterError("pimc: checkpoint belongs to a different run config");
  prog->sweeps_done = j.at("sweeps_done").get<long>();
  *rng_state = j.at("rng").get<std::string>();
  *single_scale = j.at("single_scale").get<double>();
  *displace_scale = j.at("displace_scale").get<double>();
  auto flat = j.at("beads").get<std::vector<double>>();
  beads_out->n_slices = cfg.n_slices;
  beads_out->n_electrons = cfg.n_electrons;
  beads_out->sector_lambda = lambda;
  beads_out->beads.resize(flat.size() / 3);
  for (std::size_t i = 0; i < beads_out->beads.size(); ++i)
    beads_out->beads[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  accum_from_json(j.at("e_prim"), &prog->e_prim);
  accum_from_json(j.at("e_vir"), &prog->e_vir);
  accum_from_json(j.at("pot"), &prog->pot_acc);
  accum_from_json(j.at("dk"), &prog->dk_acc);
  for (int a = 0; a < 3; ++a) {
    accum_from_json(j.at("r2")[a], &prog->r2[a]);
    accum_from_json(j.at("r1")[a], &prog->r1[a]);
  }
  auto c = j.at("counters").get<std::vector<long>>();
  prog->totals = {c[0], c[1], c[2], c[3], c[4], c[5]};
  prog->dk_series = j.at("dk_series").get<std::vector<double>>();
  prog->low_acceptance_run = j.at("low_acceptance_run").get<long>();
  return true;
}

}  // namespace

SampleStats sample(const PimcPotential& pot, const PimcConfig& cfg,
                   double sector_lambda, const PathEnsemble* start) {
  cfg.validate();

  SampleProgress prog;
  PathEnsemble resume_paths;
  std::string rng_state;
  double resume_single = 0.0, resume_displace = 0.0;
  bool resumed = false;
  if (!cfg.checkpoint_path.empty())
    resumed = load_checkpoint(cfg.checkpoint_path, cfg, sector_lambda,
                              &resume_paths, &rng_state, &resume_single,
                              &resume_displace, &prog);

  Chain chain(pot, cfg, sector_lambda, resumed ? &resume_paths : start,
              cfg.seed);
  if (resumed) {
    std::istringstream is(rng_state);
    chain.rng().deserialize(is);
    chain.single_scale_ = resume_single;
    chain.displace_scale_ = resume_displace;
  } else {
    for (long s = 0; s < cfg.burn_in; ++s) {
      Chain::SweepCounters c;
      chain.sweep(&c);
      chain.adapt(c);
    }
  }

  const int n_blocks = 32;
  if (!resumed) {
    prog.e_prim.configure(cfg.n_sweeps, n_blocks);
    prog.e_vir.configure(cfg.n_sweeps, n_blocks);
    prog.pot_acc.configure(cfg.n_sweeps, n_blocks);
    prog.dk_acc.configure(cfg.n_sweeps, n_blocks);
    for (auto& a : prog.r2) a.configure(cfg.n_sweeps, n_blocks);
    for (auto& a : prog.r1) a.configure(cfg.n_sweeps, n_blocks);
    prog.dk_series.reserve(cfg.n_sweeps);
  }

  const double beta_e = cfg.beta_t / kHbar;
  const int d = cfg.n_dim;
  const int n_el = cfg.n_electrons;
  const int m_slices = cfg.n_slices;

  Chain::SweepCounters& totals = prog.totals;
  std::vector<double>& dk_series = prog.dk_series;
  long& low_acceptance_run = prog.low_acceptance_run;

  for (long s = prog.sweeps_done; s < cfg.n_sweeps; ++s) {
    Chain::SweepCounters c;
    chain.sweep(&c);
    totals.single_acc += c.single_acc;
    totals.single_try += c.single_try;
    totals.staging_acc += c.staging_acc;
    totals.staging_try += c.staging_try;
    totals.displace_acc += c.displace_acc;
    totals.displace_try += c.displace_try;
    if (c.single_try > 0 &&
        c.single_acc < std::max(1L, c.single_try / 100)) {
      if (++low_acceptance_run > 200)
        throw NumericalError(
            "pimc: single-bead acceptance stayed below 1%; step-size "
            "adaptation failed for this potential");
    } else {
      low_acceptance_run = 0;
    }

    const double k_spring = chain.spring_action_total();
    const double v_sum = chain.potential_sum();
    // primitive estimator: E = dNM/(2 beta) - K/beta + <V per slice>
    const double e_p = (d * n_el * m_slices) / (2.0 * beta_e) -
                       k_spring / beta_e + v_sum / m_slices;
    prog.e_prim.add(e_p);
    prog.pot_acc.add(v_sum / m_slices);
    if (pot.has_gradient()) prog.e_vir.add(chain.virial_energy());
    const double dk = chain.delta_k();
    prog.dk_acc.add(dk);
    dk_series.push_back(dk);

    for (int a = 0; a < 3; ++a) {
      double m1 = 0.0, m2 = 0.0;
      for (int m = 0; m < m_slices; ++m) {
        const double v = chain.paths().at(0, m)[a];
        m1 += v;
        m2 += v * v;
      }
      m1 /= m_slices;
      m2 /= m_slices;
      prog.r1[a].add(m1);
      prog.r2[a].add(m2 - m1 * m1);
    }

    prog.sweeps_done = s + 1;
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        prog.sweeps_done % cfg.checkpoint_every == 0 &&
        prog.sweeps_done < cfg.n_sweeps) {
      std::ostringstream os;
      chain.rng().serialize(os);
      save_checkpoint(cfg.checkpoint_path, cfg, sector_lambda, chain, os.str(),
                      chain.single_scale_, chain.displace_scale_, prog);
    }
  }

  SampleStats out;
  out.energy_primitive = prog.e_prim.result();
  out.energy_virial = pot.has_gradient() ? prog.e_vir.result() : BlockedScalar{};
  out.potential = prog.pot_acc.result();
  out.delta_k = prog.dk_acc.result();
  for (int a = 0; a < 3; ++a) {
    out.spread_sq[a] = prog.r2[a].result();
    out.mean_position[a] = prog.r1[a].result().mean;
  }
  out.acceptance_single =
      totals.single_try ? static_cast<double>(totals.single_acc) / totals.single_try : 0.0;
  out.acceptance_staging =
      totals.staging_try ? static_cast<double>(totals.staging_acc) / totals.staging_try : 0.0;
  out.acceptance_displace =
      totals.displace_try ? static_cast<double>(totals.displace_acc) / totals.displace_try : 0.0;
  out.autocorr_sweeps = autocorr_time(dk_series);
  out.final_paths = chain.paths();
  return out;
}

namespace {

// Bennett acceptance ratio between two sampled work sets. w_f are forward
// works from the low ensemble, w_r reverse works from the high ensemble
// (w = S_hi - S_lo evaluated on the respective samples). Returns delta F.
double solve_bar(const std::vector<double>& w_f, const std::vector<double>& w_r,
                 double* overlap) {
  const double log_ratio =
      std::log(static_cast<double>(w_f.size()) / w_r.size());
  auto imbalance = [&](double c) {
    // sum of Fermi weights: forward at (w - c), reverse at -(w - c)
    double a = 0.0;
    for (double w : w_f) a += 1.0 / (1.0 + std::exp(w - c + log_ratio));
    double b = 0.0;
    for (double w : w_r) b += 1.0 / (1.0 + std::exp(-(w - c) - log_ratio));
    return a - b;
  };
  double lo = -1e3, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (imbalance(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double c = 0.5 * (lo + hi);
  if (overlap) {
    // mean Fermi weight at the solution; near zero means no overlap
    double a = 0.0;
    for (double w : w_f) a += 1.0 / (1.0 + std::exp(w - c));
    *overlap = a / static_cast<double>(w_f.size());
  }
  return c;
}

// jackknife error over paired blocks
double bar_error(const std::vector<double>& w_f,
                 const std::vector<double>& w_r) {
  const int nb = 16;
  const std::size_t bf = std::max<std::size_t>(1, w_f.size() / nb);
  const std::size_t br = std::max<std::size_t>(1, w_r.size() / nb);
  std::vector<double> estimates;
  for (int b = 0; b < nb; ++b) {
    std::vector<double> f, r;
    for (std::size_t i = 0; i < w_f.size(); ++i)
      if (i / bf != static_cast<std::size_t>(b)) f.push_back(w_f[i]);
    for (std::size_t i = 0; i < w_r.size(); ++i)
      if (i / br != static_cast<std::size_t>(b)) r.push_back(w_r[i]);
    if (f.empty() || r.empty()) continue;
    estimates.push_back(solve_bar(f, r, nullptr));
  }
  if (estimates.size() < 2) return 0.0;
  double m = std::accumulate(estimates.begin(), estimates.end(), 0.0) /
             estimates.size();
  double v = 0.0;
  for (double e : estimates) v += (e - m) * (e - m);
  const double n = static_cast<double>(estimates.size());
  return std::sqrt(v * (n - 1.0) / n);
}

struct StageRun {
  double lambda = 0.0;
  std::vector<double> dk;  // thinned series
  PathEnsemble final_paths;
  double acceptance_single = 0.0;
  double autocorr = 0.0;
};

StageRun run_stage(const PimcPotential& pot, const PimcConfig& cfg,
                   double lambda, int stage_idx, const PathEnsemble* start) {
  PimcConfig stage_cfg = cfg;
  stage_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(stage_idx));
  StageRun out;
  out.lambda = lambda;

  Chain chain(pot, stage_cfg, lambda, start, stage_cfg.seed);
  for (long s = 0; s < stage_cfg.burn_in; ++s) {
    Chain::SweepCounters c;
    chain.sweep(&c);
    chain.adapt(c);
  }
  Chain::SweepCounters totals;
  out.dk.reserve(stage_cfg.n_sweeps);
  for (long s = 0; s < stage_cfg.n_sweeps; ++s) {
    Chain::SweepCounters c;
    chain.sweep(&c);
    totals.single_acc += c.single_acc;
    totals.single_try += c.single_try;
    out.dk.push_back(chain.delta_k());
  }
  out.final_paths = chain.paths();
  out.acceptance_single =
      totals.single_try ? static_cast<double>(totals.single_acc) / totals.single_try : 0.0;
  out.autocorr = autocorr_time(out.dk);
  return out;
}

double robust_scale(std::vector<double> v) {
  if (v.empty()) return 1.0;
  std::sort(v.begin(), v.end());
  return std::max(std::abs(v[v.size() / 2]), 1e-6);
}

}  // namespace

ExchangeEstimate estimate_exchange(const PimcPotential& pot,
                                   const PimcConfig& cfg,
                                   const std::array<double, 3>& left_start,
                                   const std::array<double, 3>& right_start) {
  cfg.validate();
  if (cfg.n_electrons != 2)
    throw ParameterError("exchange: needs two electrons");

  ExchangeEstimate out;

  // identity-sector run seeds the ladder
  PimcConfig cfg0 = cfg;
  Chain warm(pot, cfg0, 0.0, nullptr, derive_seed(cfg.seed, 9999));
  warm.place_electron(0, left_start);
  warm.place_electron(1, right_start);
  PathEnsemble start_paths = warm.paths();

  std::vector<StageRun> runs;
  runs.push_back(run_stage(pot, cfg, 0.0, 0, &start_paths));

  // adaptive lambda ladder: choose the next lambda so the expected stage
  // work (dlambda * <dK>) stays near the target
  while (runs.back().lambda < 1.0) {
    if (static_cast<int>(runs.size()) > cfg.max_stages)
      throw NumericalError(
          "exchange: lambda ladder exceeded the stage limit; sectors do not "
          "overlap at this temperature");
    const StageRun& prev = runs.back();
    const double scale = robust_scale(prev.dk);
    double dl = cfg.target_stage_work / scale;
    dl = std::clamp(dl, 1e-5, 0.25);
    const double next = std::min(1.0, prev.lambda + dl);
    runs.push_back(run_stage(pot, cfg, next,
                             static_cast<int>(runs.size()), &prev.final_paths));
  }

  double total = 0.0, var = 0.0;
  bool weak_overlap = false;
  for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
    const double dl = runs[i + 1].lambda - runs[i].lambda;
    std::vector<double> w_f(runs[i].dk.size()), w_r(runs[i + 1].dk.size());
    for (std::size_t k = 0; k < w_f.size(); ++k) w_f[k] = dl * runs[i].dk[k];
    for (std::size_t k = 0; k < w_r.size(); ++k)
      w_r[k] = dl * runs[i + 1].dk[k];
    StageResult st;
    st.lambda_lo = runs[i].lambda;
    st.lambda_hi = runs[i + 1].lambda;
    st.delta_f = solve_bar(w_f, w_r, &st.overlap);
    st.error = bar_error(w_f, w_r);
    if (st.overlap < 1e-3) weak_overlap = true;
    total += st.delta_f;
    var += st.error * st.error;
    out.stages.push_back(st);
  }

  out.delta_s = total;
  out.delta_s_err = std::sqrt(var);
  const double beta_e = cfg.beta_t / kHbar;
  out.j_uev = 1000.0 * (2.0 / beta_e) * std::exp(-out.delta_s);
  out.j_err_uev = out.j_uev * out.delta_s_err;
  out.bound_only = weak_overlap || out.delta_s_err > 0.5 * std::abs(out.delta_s);
  double acc = 0.0, ac = 0.0;
  for (const auto& r : runs) {
    acc += r.acceptance_single;
    ac = std::max(ac, r.autocorr);
  }
  out.acceptance_single = acc / static_cast<double>(runs.size());
  out.autocorr_sweeps = ac;
  return out;
}

ExchangeEstimate estimate_exchange(const DoubleDotPotential& pot,
                                   const RoughSurface* surface,
                                   const PimcConfig& cfg) {
  DoubleDotRoughPotential device(pot, surface, cfg.v_step);
  // start each electron at its well centre, pressed against the interface
  double zs_l = 0.0, zs_r = 0.0;
  if (surface) {
    zs_l = sample_height(*surface, pot.left.xc, pot.left.yc);
    zs_r = sample_height(*surface, pot.right.xc, pot.right.yc);
  }
  const double notch = 0.8;  // nm below the oxide step
  return estimate_exchange(
      device, cfg, {pot.left.xc, pot.left.yc, zs_l + notch},
      {pot.right.xc, pot.right.yc, zs_r + notch});
}

std::vector<SurfaceExchangeRow> exchange_vs_surface(
    const DoubleDotPotential& pot, const std::vector<RoughSurface>& surfaces,
    const PimcConfig& cfg, int threads) {
  if (surfaces.size() < 5)
    throw ParameterError("exchange sweep: need at least 5 surface realizations");

  auto worker = [&](std::size_t i) {
    const RoughSurface& surf = surfaces[i];
    PimcConfig c = cfg;
    c.seed = derive_seed(cfg.seed, 1000 + i);
    SurfaceExchangeRow row;
    row.surface_seed = surf.seed;
    auto est = estimate_exchange(pot, &surf, c);
    row.j_uev = est.j_uev;
    row.j_err_uev = est.j_err_uev;
    row.delta_s = est.delta_s;
    row.delta_s_err = est.delta_s_err;
    row.bound_only = est.bound_only;
    // envelope-model interdot distance for the correlation plot
    auto env_l = solve_envelope(pot.left, surf);
    auto env_r = solve_envelope(pot.right, surf);
    row.interdot_nm = std::hypot(env_r.cx - env_l.cx, env_r.cy - env_l.cy);
    return row;
  };

  std::vector<SurfaceExchangeRow> rows(surfaces.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < surfaces.size(); ++i) rows[i] = worker(i);
  } else {
    std::vector<std::future<SurfaceExchangeRow>> futs;
    for (std::size_t i = 0; i < surfaces.size(); ++i)
      futs.push_back(std::async(std::launch::async, worker, i));
    for (std::size_t i = 0; i < surfaces.size(); ++i) rows[i] = futs[i].get();
  }
  return rows;
}

}  // namespace roughdot
