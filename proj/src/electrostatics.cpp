#include "roughdot/electrostatics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "roughdot/errors.hpp"

namespace roughdot {

void HarmonicDot::validate() const {
  if (!(cx > 0.0) || !(cy > 0.0))
    throw ParameterError("dot: lateral curvatures must be positive");
  if (!(ez > 0.0))
    throw ParameterError("dot: vertical field must be positive");
}

double eval_harmonic(const HarmonicDot& dot, double x, double y, double z) {
  const double ux = x - dot.xc;
  const double uy = y - dot.yc;
  return dot.cx * ux * ux + dot.cy * uy * uy + z * dot.ez;
}

GateResponse GateResponse::device_default() {
  // dx_c/dV in nm/V, dE_z/dV in meV nm^-1 V^-1
  GateResponse r;
  r.set("P1", 1, {-6.74, 13.42});
  r.set("P1", 2, {-2.95, -2.11});
  r.set("P2", 1, {4.95, -0.68});
  r.set("P2", 2, {5.5, 14.75});
  r.set("J1", 1, {6.88, 0.46});
  r.set("J1", 2, {-3.57, -0.22});
  r.set("P3", 1, {0.04, -0.02});
  r.set("P3", 2, {0.13, 0.06});
  r.set("J2", 1, {0.02, -0.01});
  r.set("J2", 2, {0.13, 0.06});
  return r;
}

void GateResponse::set(const std::string& gate, int dot, const GateAction& a) {
  if (!std::isfinite(a.dxc_dv) || !std::isfinite(a.dez_dv))
    throw ParameterError("gate response entries must be finite");
  table_[{gate, dot}] = a;
}

const GateAction& GateResponse::get(const std::string& gate, int dot) const {
  auto it = table_.find({gate, dot});
  if (it == table_.end())
    throw ParameterError("unknown gate/dot pair: " + gate + "/" +
                         std::to_string(dot));
  return it->second;
}

bool GateResponse::has(const std::string& gate, int dot) const {
  return table_.count({gate, dot}) > 0;
}

std::vector<std::string> GateResponse::gates() const {
  std::vector<std::string> out;
  for (const auto& [key, val] : table_) out.push_back(key.first);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

GateResponse GateResponse::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("gate response: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ParameterError(std::string("gate response: bad JSON: ") + e.what());
  }
  GateResponse r;
  for (auto& [gate, dots] : j.items()) {
    if (gate == "schema") continue;
    for (auto& [dot, action] : dots.items()) {
      r.set(gate, std::stoi(dot),
            {action.at("dxc_dv_nm_per_V").get<double>(),
             action.at("dez_dv_meV_per_nm_V").get<double>()});
    }
  }
  return r;
}

void GateResponse::to_json_file(const std::string& path) const {
  nlohmann::json j;
  j["schema"] = "roughdot.gates.v1";
  for (const auto& [key, a] : table_) {
    j[key.first][std::to_string(key.second)] = {
        {"dxc_dv_nm_per_V", a.dxc_dv}, {"dez_dv_meV_per_nm_V", a.dez_dv}};
  }
  std::ofstream os(path);
  if (!os) throw ParameterError("gate response: cannot write " + path);
  os << j.dump(2) << '\n';
}

HarmonicDot apply_gate(const HarmonicDot& dot, const GateResponse& response,
                       const std::string& gate, int dot_index, double dv) {
  const GateAction& a = response.get(gate, dot_index);
  HarmonicDot out = dot;
  out.xc += a.dxc_dv * dv;
  out.ez += a.dez_dv * dv;
  return out;
}

namespace {

// smooth minimum, numerically stable for |a-b| >> mu
double smooth_min(double a, double b, double mu) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  return lo - mu * std::log1p(std::exp(-(hi - lo) / mu));
}

double lateral_double_dot(const DoubleDotPotential& pot, double x, double y) {
  const double va = pot.left.cx * (x - pot.left.xc) * (x - pot.left.xc) +
                    pot.left.cy * (y - pot.left.yc) * (y - pot.left.yc) +
                    pot.left_offset;
  const double vb = pot.right.cx * (x - pot.right.xc) * (x - pot.right.xc) +
                    pot.right.cy * (y - pot.right.yc) * (y - pot.right.yc) +
                    pot.right_offset;
  return smooth_min(va, vb, pot.merge_mu);
}

}  // namespace

DoubleDotPotential build_double_dot(const HarmonicDot& left,
                                    const HarmonicDot& right, double v_j,
                                    const GateResponse& response,
                                    double merge_mu, const std::string& j_gate) {
  left.validate();
  right.validate();
  if (!(right.xc - left.xc > 10.0))
    throw ParameterError("double dot: wells must start more than 10 nm apart");
  if (!(merge_mu > 0.0)) throw ParameterError("double dot: merge_mu must be > 0");

  DoubleDotPotential pot;
  pot.left = apply_gate(left, response, j_gate, 1, v_j);
  pot.right = apply_gate(right, response, j_gate, 2, v_j);
  pot.merge_mu = merge_mu;
  pot.v_j = v_j;
  const double sep = pot.right.xc - pot.left.xc;
  if (sep < 2.0)
    throw ParameterError("double dot: wells overlap (separation < 2 nm)");

  const double xm = 0.5 * (pot.left.xc + pot.right.xc);
  const double ym = 0.5 * (pot.left.yc + pot.right.yc);
  pot.barrier_height = lateral_double_dot(pot, xm, ym) -
                       std::min(pot.left_offset, pot.right_offset);
  return pot;
}

double eval_double_dot(const DoubleDotPotential& pot, double x, double y,
                       double z) {
  // vertical field interpolates between the two dot centres along x
  double t = (x - pot.left.xc) / (pot.right.xc - pot.left.xc);
  t = std::clamp(t, 0.0, 1.0);
  const double ez = (1.0 - t) * pot.left.ez + t * pot.right.ez;
  return lateral_double_dot(pot, x, y) + z * ez;
}

double PotentialGrid::interpolate(double x, double y, double z) const {
  const double fx = (x - x0) / dx;
  const double fy = (y - y0) / dy;
  const double fz = (z - z0) / dz;
  if (fx < -1e-9 || fy < -1e-9 || fz < -1e-9 || fx > nx - 1 + 1e-9 ||
      fy > ny - 1 + 1e-9 || fz > nz - 1 + 1e-9)
    throw ParameterError("potential grid: point outside the grid");
  int i = std::clamp(static_cast<int>(fx), 0, nx - 2);
  int j = std::clamp(static_cast<int>(fy), 0, ny - 2);
  int k = std::clamp(static_cast<int>(fz), 0, nz - 2);
  const double tx = std::clamp(fx - i, 0.0, 1.0);
  const double ty = std::clamp(fy - j, 0.0, 1.0);
  const double tz = std::clamp(fz - k, 0.0, 1.0);
  double c00 = at(i, j, k) * (1 - tx) + at(i + 1, j, k) * tx;
  double c10 = at(i, j + 1, k) * (1 - tx) + at(i + 1, j + 1, k) * tx;
  double c01 = at(i, j, k + 1) * (1 - tx) + at(i + 1, j, k + 1) * tx;
  double c11 = at(i, j + 1, k + 1) * (1 - tx) + at(i + 1, j + 1, k + 1) * tx;
  double c0 = c00 * (1 - ty) + c10 * ty;
  double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

PotentialGrid load_potential_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("potential: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("potential: empty file");
  if (line != "x_nm,y_nm,z_nm,V_meV")
    throw ParameterError("potential: expected header 'x_nm,y_nm,z_nm,V_meV'");

  std::vector<double> xs, ys, zs, vs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    double row[4];
    for (int c = 0; c < 4; ++c) {
      if (!std::getline(ss, f, ',')) throw ParameterError("potential: short row");
      row[c] = std::stod(f);
    }
    xs.push_back(row[0]);
    ys.push_back(row[1]);
    zs.push_back(row[2]);
    vs.push_back(row[3]);
  }
  auto axis = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  auto ux = axis(xs), uy = axis(ys), uz = axis(zs);
  PotentialGrid g;
  g.nx = static_cast<int>(ux.size());
  g.ny = static_cast<int>(uy.size());
  g.nz = static_cast<int>(uz.size());
  if (g.nx < 2 || g.ny < 2 || g.nz < 2 ||
      vs.size() != static_cast<std::size_t>(g.nx) * g.ny * g.nz)
    throw ParameterError("potential: rows do not form a full 3D grid");
  g.x0 = ux.front();
  g.y0 = uy.front();
  g.z0 = uz.front();
  g.dx = ux[1] - ux[0];
  g.dy = uy[1] - uy[0];
  g.dz = uz[1] - uz[0];
  g.values.assign(vs.size(), 0.0);
  for (std::size_t r = 0; r < vs.size(); ++r) {
    if (!std::isfinite(vs[r]))
      throw ParameterError("potential: non-finite value in grid");
    int i = static_cast<int>(std::lround((xs[r] - g.x0) / g.dx));
    int j = static_cast<int>(std::lround((ys[r] - g.y0) / g.dy));
    int k = static_cast<int>(std::lround((zs[r] - g.z0) / g.dz));
    g.at(i, j, k) = vs[r];
  }
  return g;
}

HarmonicFit fit_harmonic(const PotentialGrid& grid, const Box& w) {
  // linear model: V = a*x^2 + b*x + c*y^2 + d*y + e*z + f
  Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
  long count = 0;
  auto in_window = [&](double x, double y, double z) {
    return x >= w.x_lo && x <= w.x_hi && y >= w.y_lo && y <= w.y_hi &&
           z >= w.z_lo && z <= w.z_hi;
  };
  int span_x = 0, span_y = 0, span_z = 0;
  for (int i = 0; i < grid.nx; ++i)
    span_x += (grid.x0 + i * grid.dx >= w.x_lo && grid.x0 + i * grid.dx <= w.x_hi);
  for (int j = 0; j < grid.ny; ++j)
    span_y += (grid.y0 + j * grid.dy >= w.y_lo && grid.y0 + j * grid.dy <= w.y_hi);
  for (int k = 0; k < grid.nz; ++k)
    span_z += (grid.z0 + k * grid.dz >= w.z_lo && grid.z0 + k * grid.dz <= w.z_hi);
  if (span_x < 5 || span_y < 5 || span_z < 3)
    throw ParameterError("fit: window must span at least 5x5x3 grid points");

  for (int k = 0; k < grid.nz; ++k) {
    const double z = grid.z0 + k * grid.dz;
    for (int j = 0; j < grid.ny; ++j) {
      const double y = grid.y0 + j * grid.dy;
      for (int i = 0; i < grid.nx; ++i) {
        const double x = grid.x0 + i * grid.dx;
        if (!in_window(x, y, z)) continue;
        Eigen::Matrix<double, 6, 1> row;
        row << x * x, x, y * y, y, z, 1.0;
        ata += row * row.transpose();
        atb += row * grid.at(i, j, k);
        ++count;
      }
    }
  }

  Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(ata);
  if (!lu.isInvertible())
    throw NumericalError("fit: singular normal equations (degenerate window)");
  Eigen::Matrix<double, 6, 1> p = lu.solve(atb);

  HarmonicFit fit;
  fit.dot.cx = p[0];
  fit.dot.cy = p[2];
  fit.dot.ez = p[4];
  fit.confining = p[0] > 0.0 && p[2] > 0.0;
  fit.dot.xc = p[0] != 0.0 ? -p[1] / (2.0 * p[0]) : 0.0;
  fit.dot.yc = p[2] != 0.0 ? -p[3] / (2.0 * p[2]) : 0.0;
  fit.offset = p[5] - (fit.dot.cx * fit.dot.xc * fit.dot.xc +
                       fit.dot.cy * fit.dot.yc * fit.dot.yc);

  double ss = 0.0;
  for (int k = 0; k < grid.nz; ++k) {
    const double z = grid.z0 + k * grid.dz;
    for (int j = 0; j < grid.ny; ++j) {
      const double y = grid.y0 + j * grid.dy;
      for (int i = 0; i < grid.nx; ++i) {
        const double x = grid.x0 + i * grid.dx;
        if (!in_window(x, y, z)) continue;
        const double model = p[0] * x * x + p[1] * x + p[2] * y * y +
                             p[3] * y + p[4] * z + p[5];
        ss += (grid.at(i, j, k) - model) * (grid.at(i, j, k) - model);
      }
    }
  }
  fit.residual = std::sqrt(ss / static_cast<double>(count));
  return fit;
}

}  // namespace roughdot
