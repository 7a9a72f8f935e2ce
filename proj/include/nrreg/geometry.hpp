#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace nrreg {

using Point3 = std::array<double, 3>;

constexpr std::int64_t kRemoved = -1;

struct PointCloud {
  std::vector<Point3> points;
  // Optional: per-point index into a partner cloud, kRemoved if deleted.
  std::vector<std::int64_t> correspondence;

  std::size_t size() const { return points.size(); }
};

struct TriMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> faces;
};

// ASCII OFF reader.  Polygons with more than 3 vertices are fan-triangulated.
// Accepts the common ModelNet variant where the counts share the header line.
TriMesh load_off(const std::string& path);

// Point-cloud file: one "x y z" triple per line, '#' comments ignored.
PointCloud load_xyz(const std::string& path);
void save_xyz(const PointCloud& cloud, const std::string& path);

// Area-weighted surface sampling, barycentric-uniform within each triangle.
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

// Centroid to the origin, then scale by the max point norm (unit sphere).
void normalize(PointCloud& cloud);
Point3 centroid(const PointCloud& cloud);

// Per query row, the k reference indices with smallest squared Euclidean
// distance, ascending, ties broken by lower index.  dim is 3 for points or
// the feature length.  Returns q*k indices, row-major.
std::vector<int> knn(const double* query, std::size_t nq, const double* ref, std::size_t nr,
                     std::size_t dim, std::size_t k);
std::vector<int> knn(const PointCloud& query, const PointCloud& ref, std::size_t k);

PointCloud rotate_z(const PointCloud& cloud, double angle);

// Thin-plate-spline warp with kernel phi(r) = r (3-D polyharmonic):
//   f(x) = affine * [x; 1] + sum_j weights[j] * phi(|x - controls[j]|)
struct TpsWarp {
  std::vector<Point3> controls;
  std::array<std::array<double, 4>, 3> affine;  // row r: [a_rx a_ry a_rz t_r]
  std::vector<Point3> weights;
};

// Interpolates controls[j] -> controls[j] + displacements[j] exactly.  The
// (m+4) x (m+4) bordered system is solved by dense partial-pivot LU; the
// m = 1 case degenerates to a pure translation.  Throws FitError when the
// system is singular (duplicate controls, degenerate configurations).
TpsWarp tps_fit(const std::vector<Point3>& controls, const std::vector<Point3>& displacements);
Point3 tps_apply(const TpsWarp& warp, const Point3& x);
PointCloud tps_apply(const TpsWarp& warp, const PointCloud& cloud);

}  // namespace nrreg
