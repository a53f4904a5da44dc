#include "roughdot/valley.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "roughdot/constants.hpp"
#include "roughdot/errors.hpp"

namespace roughdot {

namespace {

constexpr double kSplittingFloor = 1e-6;  // meV

double wrap_angle(double phi) {
  while (phi > kPi) phi -= 2.0 * kPi;
  while (phi <= -kPi) phi += 2.0 * kPi;
  return phi;
}

// logistic oxide step in depth coordinates: 1 in the oxide (z < z_int)
double oxide_step(double z, double z_int, double width) {
  if (width <= 0.0) return z < z_int ? 1.0 : 0.0;
  return 1.0 / (1.0 + std::exp(-4.0 * (z_int - z) / width));
}

}  // namespace

double harmonic_ground_energy(const HarmonicDot& dot) {
  const double m = kMassTransverse * kElectronMass;
  const double wx = std::sqrt(2.0 * dot.cx / m);
  const double wy = std::sqrt(2.0 * dot.cy / m);
  return 0.5 * kHbar * (wx + wy);
}

double harmonic_spread_x(const HarmonicDot& dot) {
  const double m = kMassTransverse * kElectronMass;
  return std::sqrt(kHbar / (2.0 * std::sqrt(2.0 * dot.cx * m)));
}

double harmonic_spread_y(const HarmonicDot& dot) {
  const double m = kMassTransverse * kElectronMass;
  return std::sqrt(kHbar / (2.0 * std::sqrt(2.0 * dot.cy * m)));
}

// ---------------------------------------------------------------------------
// lateral envelope
// ---------------------------------------------------------------------------

namespace {

// Lanczos with full reorthogonalisation for the lowest eigenpair of the
// 5-point stencil Hamiltonian. Matrix-free; deterministic start vector.
struct StencilHamiltonian {
  int n;
  double t;  // hopping hbar^2/(2 m h^2)
  const std::vector<double>* pot;

  void apply(const std::vector<double>& v, std::vector<double>& out) const {
    const auto& V = *pot;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * n + i;
        double acc = (4.0 * t + V[idx]) * v[idx];
        if (i > 0) acc -= t * v[idx - 1];
        if (i < n - 1) acc -= t * v[idx + 1];
        if (j > 0) acc -= t * v[idx - n];
        if (j < n - 1) acc -= t * v[idx + n];
        out[idx] = acc;
      }
    }
  }
};

double dot_product(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// returns (eigenvalue, iterations); fills ground with the eigenvector
double lanczos_ground(const StencilHamiltonian& H, std::vector<double> start,
                      double tol, int max_iter, std::vector<double>* ground,
                      int* iterations) {
  const std::size_t N = start.size();
  double nrm = std::sqrt(dot_product(start, start));
  for (double& v : start) v /= nrm;

  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;
  std::vector<double> w(N), prev(N, 0.0);
  basis.push_back(start);

  double theta_old = 1e300;
  int m = 0;
  for (m = 1; m <= max_iter; ++m) {
    const auto& q = basis.back();
    H.apply(q, w);
    double a = dot_product(q, w);
    alpha.push_back(a);
    for (std::size_t i = 0; i < N; ++i)
      w[i] -= a * q[i] + (beta.empty() ? 0.0 : beta.back() * prev[i]);
    // full reorthogonalisation keeps the basis clean for clustered states
    for (const auto& b : basis) {
      double c = dot_product(b, w);
      for (std::size_t i = 0; i < N; ++i) w[i] -= c * b[i];
    }
    double bnorm = std::sqrt(dot_product(w, w));

    // Ritz value of the tridiagonal section
    const int k = static_cast<int>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      T(i, i) = alpha[i];
      if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta.size() > static_cast<std::size_t>(i) ? beta[i] : 0.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const double theta = es.eigenvalues()(0);

    if (std::abs(theta - theta_old) < tol || bnorm < 1e-13) {
      Eigen::VectorXd y = es.eigenvectors().col(0);
      ground->assign(N, 0.0);
      for (int i = 0; i < k; ++i)
        for (std::size_t idx = 0; idx < N; ++idx)
          (*ground)[idx] += y(i) * basis[i][idx];
      *iterations = m;
      return theta;
    }
    theta_old = theta;
    if (m == max_iter) break;

    beta.push_back(bnorm);
    prev = basis.back();
    for (double& v : w) v /= bnorm;
    basis.push_back(w);
  }
  std::ostringstream os;
  os << "envelope: eigensolve did not converge in " << max_iter
     << " iterations (last change " << std::abs(theta_old) << ")";
  throw NumericalError(os.str());
}

}  // namespace

Envelope2D solve_envelope(const HarmonicDot& dot, const RoughSurface& surface,
                          const EnvelopeOptions& opts) {
  dot.validate();
  const double sx = harmonic_spread_x(dot);
  const double sy = harmonic_spread_y(dot);
  const double half = opts.halfwidth_sigmas * std::max(sx, sy) + opts.margin;
  const double h = opts.grid_h;
  const int n = 2 * static_cast<int>(std::ceil(half / h)) + 1;

  Envelope2D env;
  env.n = n;
  env.h = h;
  env.x0 = dot.xc - (n - 1) / 2 * h;
  env.y0 = dot.yc - (n - 1) / 2 * h;
  env.dot = dot;

  if (env.x0 < surface.x0 || env.y0 < surface.y0 ||
      env.x0 + (n - 1) * h > surface.max_x() ||
      env.y0 + (n - 1) * h > surface.max_y())
    throw ParameterError("envelope: dot window extends outside the surface");

  std::vector<double> pot(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    const double y = env.y0 + j * h;
    for (int i = 0; i < n; ++i) {
      const double x = env.x0 + i * h;
      pot[static_cast<std::size_t>(j) * n + i] =
          dot.cx * (x - dot.xc) * (x - dot.xc) +
          dot.cy * (y - dot.yc) * (y - dot.yc) +
          dot.ez * sample_height(surface, x, y);
    }
  }

  const double m = kMassTransverse * kElectronMass;
  StencilHamiltonian H{n, kHbar * kHbar / (2.0 * m * h * h), &pot};

  // bare harmonic ground state as the deterministic start vector
  std::vector<double> start(pot.size());
  for (int j = 0; j < n; ++j) {
    const double y = env.y0 + j * h - dot.yc;
    for (int i = 0; i < n; ++i) {
      const double x = env.x0 + i * h - dot.xc;
      start[static_cast<std::size_t>(j) * n + i] =
          std::exp(-x * x / (4.0 * sx * sx) - y * y / (4.0 * sy * sy));
    }
  }

  std::vector<double> psi;
  int iters = 0;
  env.energy = lanczos_ground(H, std::move(start), opts.tol,
                              opts.max_iterations, &psi, &iters);
  env.iterations = iters;

  // normalise to a probability density per nm^2
  double norm = 0.0;
  for (double v : psi) norm += v * v;
  norm *= h * h;
  env.density.resize(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i)
    env.density[i] = psi[i] * psi[i] / norm;

  double cx = 0.0, cy = 0.0, xx = 0.0, yy = 0.0, edge = 0.0;
  for (int j = 0; j < n; ++j) {
    const double y = env.y0 + j * h;
    for (int i = 0; i < n; ++i) {
      const double x = env.x0 + i * h;
      const double w = env.at(i, j) * h * h;
      cx += w * x;
      cy += w * y;
      xx += w * x * x;
      yy += w * y * y;
      if (i == 0 || j == 0 || i == n - 1 || j == n - 1) edge += w;
    }
  }
  env.cx = cx;
  env.cy = cy;
  env.spread_x = std::sqrt(std::max(0.0, xx - cx * cx));
  env.spread_y = std::sqrt(std::max(0.0, yy - cy * cy));
  env.boundary_mass = edge;
  env.confined = edge <= 0.01;
  return env;
}

// ---------------------------------------------------------------------------
// vertical chain
// ---------------------------------------------------------------------------

ChainModel build_chain(double ez, double interface_z, int n_sites,
                       double interface_width) {
  if (n_sites < 200)
    throw ParameterError("chain: need at least 200 sites");
  if (!(ez >= 0.0)) throw ParameterError("chain: field must be non-negative");

  ChainModel c;
  c.a = kMonolayer;
  c.k0 = kValleyK0;
  c.n_sites = n_sites;
  c.barrier = kOxideOffsetChain;
  c.ez = ez;
  c.interface_z = interface_z;
  c.interface_width = interface_width;

  // calibrate hoppings: minimum at k0, curvature hbar^2/m_z
  const double s = c.k0 * c.a;
  const double mz = kMassLongitudinal * kElectronMass;
  c.t2 = kHbar * kHbar / (mz * 8.0 * c.a * c.a * std::sin(s) * std::sin(s));
  c.t1 = -4.0 * c.t2 * std::cos(s);
  c.band_min = 2.0 * c.t1 * std::cos(s) + 2.0 * c.t2 * std::cos(2.0 * s);

  // verify the dispersion: minimum position within 1% of k0, mass within 5%
  double kmin = 0.0, emin = 1e300;
  const int n_scan = 20000;
  for (int i = 1; i < n_scan; ++i) {
    const double k = kPi / c.a * i / n_scan;
    const double e = 2.0 * c.t1 * std::cos(k * c.a) + 2.0 * c.t2 * std::cos(2.0 * k * c.a);
    if (e < emin) {
      emin = e;
      kmin = k;
    }
  }
  const double d2 = -2.0 * c.a * c.a * c.t1 * std::cos(kmin * c.a) -
                    8.0 * c.a * c.a * c.t2 * std::cos(2.0 * kmin * c.a);
  const double mass = kHbar * kHbar / d2 / kElectronMass;
  if (std::abs(kmin - c.k0) > 0.01 * c.k0 ||
      std::abs(mass - kMassLongitudinal) > 0.05 * kMassLongitudinal)
    throw NumericalError("chain: hopping calibration failed to place the valley");

  // a quarter of the chain sits in the oxide above the interface
  c.z_first = interface_z - (n_sites / 4) * c.a;
  return c;
}

ChainSpectrum chain_valley_splitting(const ChainModel& chain) {
  const int n = chain.n_sites;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double z = chain.z_first + i * chain.a;
    const double onsite =
        -chain.band_min + chain.ez * (z - chain.interface_z) +
        chain.barrier * oxide_step(z, chain.interface_z, chain.interface_width);
    H(i, i) = onsite;
    if (i + 1 < n) H(i, i + 1) = H(i + 1, i) = chain.t1;
    if (i + 2 < n) H(i, i + 2) = H(i + 2, i) = chain.t2;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);

  ChainSpectrum out;
  out.e0 = es.eigenvalues()(0);
  out.e1 = es.eigenvalues()(1);
  out.splitting = out.e1 - out.e0;
  out.degenerate = out.splitting < kSplittingFloor;

  std::vector<double> plus(n), minus(n);
  for (int i = 0; i < n; ++i) {
    plus[i] = es.eigenvectors()(i, 0) * es.eigenvectors()(i, 0);
    minus[i] = es.eigenvectors()(i, 1) * es.eigenvectors()(i, 1);
  }
  if (!out.degenerate) {
    auto pk = extract_valley_phase(plus, minus, 1, 1, n, chain.a, chain.z_first);
    out.phase = pk.phase;
    out.peak_k = pk.peak_k;
  }
  return out;
}

PhasePeak extract_valley_phase(const std::vector<double>& density_plus,
                               const std::vector<double>& density_minus,
                               int nx, int ny, int nz, double dz, double z0) {
  const std::size_t need = static_cast<std::size_t>(nx) * ny * nz;
  if (density_plus.size() != need || density_minus.size() != need)
    throw ParameterError("phase: array sizes do not match the given shape");
  if (!(dz > 0.0) || dz >= kPi / (2.0 * kValleyK0))
    throw ParameterError("phase: dz does not resolve the 2 k0 oscillation");
  if (nz < 8) throw ParameterError("phase: need at least 8 z slabs");

  std::vector<double> osc(nz, 0.0);
  const std::size_t slab = static_cast<std::size_t>(nx) * ny;
  for (int k = 0; k < nz; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < slab; ++i)
      acc += density_plus[slab * k + i] - density_minus[slab * k + i];
    osc[k] = acc / static_cast<double>(slab);
  }

  // coarse DFT magnitude spectrum over the positive bins
  auto dtft = [&](double q) {
    std::complex<double> f(0.0, 0.0);
    for (int k = 0; k < nz; ++k) {
      const double ph = -q * (z0 + k * dz);
      f += osc[k] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return f;
  };
  const double dq = 2.0 * kPi / (nz * dz);
  const int n_bins = nz / 2;
  std::vector<double> mag(n_bins + 1, 0.0);
  for (int b = 1; b <= n_bins; ++b) mag[b] = std::abs(dtft(b * dq));

  const double target = 2.0 * kValleyK0;
  // strongest bin inside the half-octave window around 2 k0
  int peak = -1;
  for (int b = 1; b <= n_bins; ++b) {
    if (std::abs(b * dq - target) > 0.5 * target) continue;
    if (peak < 0 || mag[b] > mag[peak]) peak = b;
  }
  if (peak < 0)
    throw ParameterError("phase: spectrum has no bins near 2 k0");
  std::vector<double> sorted(mag.begin() + 1, mag.end());
  std::sort(sorted.begin(), sorted.end());
  const double floor = sorted[sorted.size() / 2];
  if (!(mag[peak] > 5.0 * floor))
    throw NumericalError("phase: no oscillation peak above the spectral floor");

  // refine within +-1 bin by scanning the continuous transform
  double q_best = peak * dq;
  double m_best = mag[peak];
  for (int i = -32; i <= 32; ++i) {
    const double q = peak * dq + i * dq / 32.0;
    if (q <= 0.0) continue;
    const double m = std::abs(dtft(q));
    if (m > m_best) {
      m_best = m;
      q_best = q;
    }
  }

  PhasePeak out;
  out.peak_k = q_best;
  out.phase = wrap_angle(std::arg(dtft(q_best)));
  return out;
}

ValleyResult dot_valley_observables(const Envelope2D& env,
                                    const RoughSurface& surface,
                                    const ChainModel& chain_ref) {
  const ChainSpectrum ref = chain_valley_splitting(chain_ref);
  const std::complex<double> delta_1d =
      0.5 * ref.splitting *
      std::exp(std::complex<double>(0.0, ref.phase));

  std::complex<double> lateral(0.0, 0.0);
  double mean_height = 0.0;
  const double cell = env.h * env.h;
  for (int j = 0; j < env.n; ++j) {
    const double y = env.y0 + j * env.h;
    for (int i = 0; i < env.n; ++i) {
      const double x = env.x0 + i * env.h;
      const double w = env.at(i, j) * cell;
      const double zs = sample_height(surface, x, y);
      const double ph = -2.0 * kValleyK0 * zs;
      lateral += w * std::complex<double>(std::cos(ph), std::sin(ph));
      mean_height += w * zs;
    }
  }

  ValleyResult out;
  out.delta = delta_1d * lateral;
  out.splitting = 2.0 * std::abs(out.delta);
  out.suppression = std::abs(lateral);
  out.mean_height = mean_height;
  out.ez = env.dot.ez;
  out.degenerate = out.splitting < kSplittingFloor;
  out.phase = out.degenerate ? 0.0 : wrap_angle(std::arg(out.delta));
  out.phase_local = out.degenerate
                        ? 0.0
                        : wrap_angle(out.phase + 2.0 * kValleyK0 * mean_height);
  return out;
}

}  // namespace roughdot
