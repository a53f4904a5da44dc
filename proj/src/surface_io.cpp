#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "roughdot/errors.hpp"
#include "roughdot/surface.hpp"

namespace roughdot {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'S', 'U', 'R', 'F', '1', '\n'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParameterError("surface: truncated binary container");
  return v;
}

}  // namespace

void save_surface(const RoughSurface& surface, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParameterError("surface: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::int64_t>(os, surface.nx);
  write_pod<std::int64_t>(os, surface.ny);
  write_pod<double>(os, surface.dx);
  write_pod<double>(os, surface.x0);
  write_pod<double>(os, surface.y0);
  write_pod<std::uint64_t>(os, surface.seed);
  write_pod<double>(os, surface.params.hurst);
  write_pod<double>(os, surface.params.c0);
  write_pod<double>(os, surface.params.lambda_min);
  write_pod<double>(os, surface.params.lambda_max);
  os.write(reinterpret_cast<const char*>(surface.heights.data()),
           static_cast<std::streamsize>(surface.heights.size() * sizeof(double)));
  if (!os) throw ParameterError("surface: write failed for '" + path + "'");

  nlohmann::json sidecar{
      {"schema", "roughdot.surface.v1"},
      {"H", surface.params.hurst},
      {"C0_nm3", surface.params.c0},
      {"lambda_min_nm", surface.params.lambda_min},
      {"lambda_max_nm", surface.params.lambda_max},
      {"dx_nm", surface.dx},
      {"seed", surface.seed},
      {"extent_nm", {surface.extent_x(), surface.extent_y()}},
      {"nx", surface.nx},
      {"ny", surface.ny},
      {"origin_nm", {surface.x0, surface.y0}},
  };
  std::ofstream js(path + ".json");
  js << sidecar.dump(2) << '\n';
}

RoughSurface load_surface(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParameterError("surface: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParameterError("surface: '" + path + "' is not a surface container");
  RoughSurface surf;
  surf.nx = static_cast<int>(read_pod<std::int64_t>(is));
  surf.ny = static_cast<int>(read_pod<std::int64_t>(is));
  surf.dx = read_pod<double>(is);
  surf.x0 = read_pod<double>(is);
  surf.y0 = read_pod<double>(is);
  surf.seed = read_pod<std::uint64_t>(is);
  surf.params.hurst = read_pod<double>(is);
  surf.params.c0 = read_pod<double>(is);
  surf.params.lambda_min = read_pod<double>(is);
  surf.params.lambda_max = read_pod<double>(is);
  if (surf.nx < 2 || surf.ny < 2 || !(surf.dx > 0.0))
    throw ParameterError("surface: corrupt grid metadata in '" + path + "'");
  surf.heights.resize(static_cast<std::size_t>(surf.nx) * surf.ny);
  is.read(reinterpret_cast<char*>(surf.heights.data()),
          static_cast<std::streamsize>(surf.heights.size() * sizeof(double)));
  if (!is) throw ParameterError("surface: truncated height data in '" + path + "'");
  return surf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

std::vector<double> load_profile_csv(const std::string& path, double* dx_out) {
  std::ifstream is(path);
  if (!is) throw ParameterError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("csv: empty file " + path);
  auto header = split_csv_line(line);
  if (header.size() != 2 || header[0] != "x_nm" || header[1] != "z_nm")
    throw ParameterError("csv: expected header 'x_nm,z_nm' in " + path);
  std::vector<double> xs, zs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 2) throw ParameterError("csv: malformed row in " + path);
    xs.push_back(std::stod(f[0]));
    zs.push_back(std::stod(f[1]));
  }
  if (xs.size() < 2) throw ParameterError("csv: profile needs at least 2 rows");
  const double dx = xs[1] - xs[0];
  if (!(dx > 0.0)) throw ParameterError("csv: x must be strictly increasing");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (std::abs(xs[i] - xs[i - 1] - dx) > 1e-6 * dx)
      throw ParameterError("csv: profile grid is not uniform");
  if (dx_out) *dx_out = dx;
  return zs;
}

RoughSurface load_surface_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParameterError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw ParameterError("csv: empty file " + path);
  auto header = split_csv_line(line);
  if (header.size() != 3 || header[0] != "x_nm" || header[1] != "y_nm" ||
      header[2] != "z_nm")
    throw ParameterError("csv: expected header 'x_nm,y_nm,z_nm' in " + path);

  std::vector<double> xs, ys, zs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw ParameterError("csv: malformed row in " + path);
    xs.push_back(std::stod(f[0]));
    ys.push_back(std::stod(f[1]));
    zs.push_back(std::stod(f[2]));
  }
  std::vector<double> ux(xs), uy(ys);
  std::sort(ux.begin(), ux.end());
  ux.erase(std::unique(ux.begin(), ux.end()), ux.end());
  std::sort(uy.begin(), uy.end());
  uy.erase(std::unique(uy.begin(), uy.end()), uy.end());
  const int nx = static_cast<int>(ux.size());
  const int ny = static_cast<int>(uy.size());
  if (nx < 2 || ny < 2 || xs.size() != static_cast<std::size_t>(nx) * ny)
    throw ParameterError("csv: surface rows do not form a full grid");
  const double dx = ux[1] - ux[0];
  const double dy = uy[1] - uy[0];
  if (std::abs(dx - dy) > 1e-6 * dx)
    throw ParameterError("csv: surface grid must be square-celled");

  RoughSurface surf;
  surf.nx = nx;
  surf.ny = ny;
  surf.dx = dx;
  surf.x0 = ux.front();
  surf.y0 = uy.front();
  surf.heights.assign(static_cast<std::size_t>(nx) * ny, 0.0);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    int i = static_cast<int>(std::lround((xs[r] - surf.x0) / dx));
    int j = static_cast<int>(std::lround((ys[r] - surf.y0) / dx));
    if (i < 0 || i >= nx || j < 0 || j >= ny)
      throw ParameterError("csv: point off the inferred grid");
    surf.at(i, j) = zs[r];
  }
  return surf;
}

}  // namespace roughdot
