#include "nrreg/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nrreg/errors.hpp"
#include "nrreg/prng.hpp"

namespace nrreg {

namespace {

// Reads the next non-empty, non-comment line; returns false at EOF.
bool next_content_line(std::istream& in, std::string& line, int& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto pos = line.find('#');
    if (pos != std::string::npos) line.erase(pos);
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TriMesh load_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_off: cannot open " + path);
  int lineno = 0;
  std::string line;
  if (!next_content_line(in, line, lineno)) throw ParseError(path + ": empty OFF file");

  std::string rest;
  {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok.rfind("OFF", 0) != 0 || (tok.size() > 3 && !std::isdigit(tok[3])))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected OFF header, got '" +
                       tok + "'");
    // ModelNet-style merged header: counts follow "OFF" with no newline.
    if (tok.size() > 3) rest = tok.substr(3);
    std::string tail;
    std::getline(ss, tail);
    rest += tail;
  }
  std::size_t nv = 0, nf = 0, ne = 0;
  {
    std::istringstream ss(rest);
    if (!(ss >> nv >> nf >> ne)) {
      if (!next_content_line(in, line, lineno))
        throw ParseError(path + ": missing OFF counts line");
      std::istringstream ss2(line);
      if (!(ss2 >> nv >> nf >> ne))
        throw ParseError(path + ":" + std::to_string(lineno) + ": malformed counts line");
    }
  }

  TriMesh mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!next_content_line(in, line, lineno))
      throw ParseError(path + ": unexpected EOF in vertex list");
    std::istringstream ss(line);
    Point3 p;
    if (!(ss >> p[0] >> p[1] >> p[2]))
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex line");
    mesh.vertices.push_back(p);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    if (!next_content_line(in, line, lineno))
      throw ParseError(path + ": unexpected EOF in face list");
    std::istringstream ss(line);
    std::size_t cnt = 0;
    if (!(ss >> cnt) || cnt < 3)
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed face line");
    std::vector<int> poly(cnt);
    for (std::size_t j = 0; j < cnt; ++j) {
      if (!(ss >> poly[j]))
        throw ParseError(path + ":" + std::to_string(lineno) + ": malformed face line");
      if (poly[j] < 0 || std::size_t(poly[j]) >= nv)
        throw ParseError(path + ":" + std::to_string(lineno) + ": vertex index " +
                         std::to_string(poly[j]) + " out of range");
    }
    for (std::size_t j = 1; j + 1 < cnt; ++j)
      mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
  }
  return mesh;
}

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_xyz: cannot open " + path);
  PointCloud cloud;
  int lineno = 0;
  std::string line;
  while (next_content_line(in, line, lineno)) {
    std::istringstream ss(line);
    Point3 p;
    if (!(ss >> p[0] >> p[1] >> p[2]))
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'x y z'");
    cloud.points.push_back(p);
  }
  return cloud;
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_xyz: cannot open " + path + " for writing");
  char buf[128];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  if (!out) throw IoError("save_xyz: write failed for " + path);
}

PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0;
  for (const auto& f : mesh.faces) {
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
    const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
    const double cx = uy * vz - uz * vy;
    const double cy = uz * vx - ux * vz;
    const double cz = ux * vy - uy * vx;
    total += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    cumulative.push_back(total);
  }
  if (mesh.faces.empty() || total <= 0)
    throw ContractError("sample_surface: mesh has zero total area");

  RandomStream pick(seed, "surface_pick");
  RandomStream bary(seed, "surface_bary");
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = pick.uniform() * total;
    const std::size_t fi =
        std::size_t(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                    cumulative.begin());
    const auto& f = mesh.faces[std::min(fi, mesh.faces.size() - 1)];
    const Point3& a = mesh.vertices[f[0]];
    const Point3& b = mesh.vertices[f[1]];
    const Point3& c = mesh.vertices[f[2]];
    const double r1 = std::sqrt(bary.uniform());
    const double r2 = bary.uniform();
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    cloud.points.push_back({wa * a[0] + wb * b[0] + wc * c[0],
                            wa * a[1] + wb * b[1] + wc * c[1],
                            wa * a[2] + wb * b[2] + wc * c[2]});
  }
  return cloud;
}

Point3 centroid(const PointCloud& cloud) {
  Point3 c{0, 0, 0};
  for (const auto& p : cloud.points)
    for (int d = 0; d < 3; ++d) c[d] += p[d];
  if (!cloud.points.empty())
    for (int d = 0; d < 3; ++d) c[d] /= double(cloud.points.size());
  return c;
}

void normalize(PointCloud& cloud) {
  if (cloud.points.empty()) throw ContractError("normalize: empty cloud");
  const Point3 c = centroid(cloud);
  double max_norm = 0;
  for (auto& p : cloud.points) {
    for (int d = 0; d < 3; ++d) p[d] -= c[d];
    max_norm = std::max(max_norm, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  }
  if (max_norm > 0)
    for (auto& p : cloud.points)
      for (int d = 0; d < 3; ++d) p[d] /= max_norm;
}

std::vector<int> knn(const double* query, std::size_t nq, const double* ref, std::size_t nr,
                     std::size_t dim, std::size_t k) {
  if (k == 0 || k > nr)
    throw ContractError("knn: k = " + std::to_string(k) + " out of range for " +
                        std::to_string(nr) + " reference points");
  std::vector<int> out(nq * k);
  std::vector<std::pair<double, int>> dist(nr);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const double* q = query + qi * dim;
    for (std::size_t ri = 0; ri < nr; ++ri) {
      const double* r = ref + ri * dim;
      double d = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = q[j] - r[j];
        d += diff * diff;
      }
      dist[ri] = {d, int(ri)};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (std::size_t j = 0; j < k; ++j) out[qi * k + j] = dist[j].second;
  }
  return out;
}

std::vector<int> knn(const PointCloud& query, const PointCloud& ref, std::size_t k) {
  return knn(query.points.empty() ? nullptr : query.points[0].data(), query.size(),
             ref.points.empty() ? nullptr : ref.points[0].data(), ref.size(), 3, k);
}

PointCloud rotate_z(const PointCloud& cloud, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  PointCloud out = cloud;
  for (auto& p : out.points) {
    const double x = p[0], y = p[1];
    p[0] = c * x - s * y;
    p[1] = s * x + c * y;
  }
  return out;
}

namespace {

// Partial-pivot LU solve of an n x n system with nrhs right-hand sides,
// in place.  Throws FitError on a (near-)zero pivot.
void solve_dense(std::vector<double>& a, std::vector<double>& rhs, std::size_t n,
                 std::size_t nrhs) {
  double scale = 0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double tol = std::max(scale, 1.0) * 1e-12;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (std::abs(a[piv * n + col]) < tol)
      throw FitError("tps_fit: singular system (pivot " + std::to_string(col) + ")");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
      for (std::size_t j = 0; j < nrhs; ++j)
        std::swap(rhs[col * nrhs + j], rhs[piv * nrhs + j]);
    }
    const double inv = 1.0 / a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] * inv;
      if (f == 0) continue;
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      for (std::size_t j = 0; j < nrhs; ++j) rhs[r * nrhs + j] -= f * rhs[col * nrhs + j];
    }
  }
  for (std::size_t col = n; col-- > 0;) {
    const double inv = 1.0 / a[col * n + col];
    for (std::size_t j = 0; j < nrhs; ++j) {
      double acc = rhs[col * nrhs + j];
      for (std::size_t r = col + 1; r < n; ++r) acc -= a[col * n + r] * rhs[r * nrhs + j];
      rhs[col * nrhs + j] = acc * inv;
    }
  }
}

double dist3(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

TpsWarp tps_fit(const std::vector<Point3>& controls,
                const std::vector<Point3>& displacements) {
  const std::size_t m = controls.size();
  if (m < 1) throw ContractError("tps_fit: need at least one control point");
  if (displacements.size() != m)
    throw ContractError("tps_fit: control/displacement count mismatch");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      if (dist3(controls[i], controls[j]) == 0)
        throw FitError("tps_fit: duplicate control points " + std::to_string(i) + " and " +
                       std::to_string(j));

  TpsWarp warp;
  warp.controls = controls;
  warp.weights.assign(m, {0, 0, 0});
  for (int r = 0; r < 3; ++r) warp.affine[r] = {0, 0, 0, 0};

  if (m == 1) {
    // Side conditions force the kernel weight to zero; the affine part is
    // the translation carrying the single control onto its target.
    for (int r = 0; r < 3; ++r) {
      warp.affine[r][r] = 1.0;
      warp.affine[r][3] = displacements[0][r];
    }
    return warp;
  }

  const std::size_t n = m + 4;
  std::vector<double> a(n * n, 0.0);
  std::vector<double> rhs(n * 3, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) a[i * n + j] = dist3(controls[i], controls[j]);
    a[i * n + m] = 1.0;
    for (int d = 0; d < 3; ++d) a[i * n + m + 1 + d] = controls[i][d];
    a[(m)*n + i] = 1.0;
    for (int d = 0; d < 3; ++d) a[(m + 1 + d) * n + i] = controls[i][d];
    for (int d = 0; d < 3; ++d) rhs[i * 3 + d] = controls[i][d] + displacements[i][d];
  }
  solve_dense(a, rhs, n, 3);

  for (std::size_t i = 0; i < m; ++i)
    for (int d = 0; d < 3; ++d) warp.weights[i][d] = rhs[i * 3 + d];
  for (int d = 0; d < 3; ++d) {
    warp.affine[d][3] = rhs[m * 3 + d];
    for (int c = 0; c < 3; ++c) warp.affine[d][c] = rhs[(m + 1 + c) * 3 + d];
  }
  return warp;
}

Point3 tps_apply(const TpsWarp& warp, const Point3& x) {
  Point3 y;
  for (int r = 0; r < 3; ++r)
    y[r] = warp.affine[r][0] * x[0] + warp.affine[r][1] * x[1] + warp.affine[r][2] * x[2] +
           warp.affine[r][3];
  for (std::size_t j = 0; j < warp.controls.size(); ++j) {
    const double phi = dist3(x, warp.controls[j]);
    for (int r = 0; r < 3; ++r) y[r] += warp.weights[j][r] * phi;
  }
  return y;
}

PointCloud tps_apply(const TpsWarp& warp, const PointCloud& cloud) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = tps_apply(warp, p);
  return out;
}

}  // namespace nrreg
