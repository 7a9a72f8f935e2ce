#include "nrreg/synthetic.hpp"

#include <cmath>

#include "nrreg/errors.hpp"

namespace nrreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

TriMesh ellipsoid(double rx, double ry, double rz, int stacks = 24, int slices = 32) {
  TriMesh m;
  for (int i = 0; i <= stacks; ++i) {
    const double phi = kPi * double(i) / double(stacks);
    for (int j = 0; j < slices; ++j) {
      const double theta = 2.0 * kPi * double(j) / double(slices);
      m.vertices.push_back({rx * std::sin(phi) * std::cos(theta),
                            ry * std::sin(phi) * std::sin(theta), rz * std::cos(phi)});
    }
  }
  auto vid = [&](int i, int j) { return i * slices + (j % slices); };
  for (int i = 0; i < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  }
  return m;
}

TriMesh torus(double major, double minor, int seg_major = 36, int seg_minor = 18) {
  TriMesh m;
  for (int i = 0; i < seg_major; ++i) {
    const double u = 2.0 * kPi * double(i) / double(seg_major);
    for (int j = 0; j < seg_minor; ++j) {
      const double v = 2.0 * kPi * double(j) / double(seg_minor);
      const double r = major + minor * std::cos(v);
      m.vertices.push_back({r * std::cos(u), r * std::sin(u), minor * std::sin(v)});
    }
  }
  auto vid = [&](int i, int j) { return (i % seg_major) * seg_minor + (j % seg_minor); };
  for (int i = 0; i < seg_major; ++i) {
    for (int j = 0; j < seg_minor; ++j) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      m.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  }
  return m;
}

TriMesh box(double ax, double ay, double az) {
  TriMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1 ? ax : -ax), (i & 2 ? ay : -ay), (i & 4 ? az : -az)});
  const int quads[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                           {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriMesh cylinder(double radius, double height, int segments = 48) {
  TriMesh m;
  for (int ring = 0; ring < 2; ++ring) {
    const double z = ring == 0 ? -height / 2 : height / 2;
    for (int j = 0; j < segments; ++j) {
      const double t = 2.0 * kPi * double(j) / double(segments);
      m.vertices.push_back({radius * std::cos(t), radius * std::sin(t), z});
    }
  }
  const int bottom_center = int(m.vertices.size());
  m.vertices.push_back({0, 0, -height / 2});
  const int top_center = int(m.vertices.size());
  m.vertices.push_back({0, 0, height / 2});
  for (int j = 0; j < segments; ++j) {
    const int jn = (j + 1) % segments;
    m.faces.push_back({j, segments + j, segments + jn});
    m.faces.push_back({j, segments + jn, jn});
    m.faces.push_back({bottom_center, jn, j});
    m.faces.push_back({top_center, segments + j, segments + jn});
  }
  return m;
}

TriMesh cone(double radius, double height, int segments = 48) {
  TriMesh m;
  for (int j = 0; j < segments; ++j) {
    const double t = 2.0 * kPi * double(j) / double(segments);
    m.vertices.push_back({radius * std::cos(t), radius * std::sin(t), -height / 2});
  }
  const int apex = int(m.vertices.size());
  m.vertices.push_back({0, 0, height / 2});
  const int base_center = int(m.vertices.size());
  m.vertices.push_back({0, 0, -height / 2});
  for (int j = 0; j < segments; ++j) {
    const int jn = (j + 1) % segments;
    m.faces.push_back({j, jn, apex});
    m.faces.push_back({base_center, jn, j});
  }
  return m;
}

}  // namespace

const std::vector<std::string>& synthetic_model_names() {
  static const std::vector<std::string> names = {
      "synth:sphere",      "synth:ellipsoid_a", "synth:ellipsoid_b", "synth:ellipsoid_c",
      "synth:ellipsoid_d", "synth:torus_a",     "synth:torus_b",     "synth:torus_c",
      "synth:torus_d",     "synth:box_a",       "synth:box_b",       "synth:box_c",
      "synth:box_d",       "synth:cylinder_a",  "synth:cylinder_b",  "synth:cylinder_c",
      "synth:cylinder_d",  "synth:cone_a",      "synth:cone_b",      "synth:cone_c",
  };
  return names;
}

TriMesh make_synthetic(const std::string& name) {
  const std::string key = name.rfind("synth:", 0) == 0 ? name.substr(6) : name;
  if (key == "sphere") return ellipsoid(1.0, 1.0, 1.0);
  if (key == "ellipsoid_a") return ellipsoid(1.0, 0.6, 0.4);
  if (key == "ellipsoid_b") return ellipsoid(1.0, 0.8, 0.3);
  if (key == "ellipsoid_c") return ellipsoid(0.5, 1.0, 0.7);
  if (key == "ellipsoid_d") return ellipsoid(0.9, 0.9, 0.3);
  if (key == "torus_a") return torus(1.0, 0.4);
  if (key == "torus_b") return torus(1.0, 0.25);
  if (key == "torus_c") return torus(1.0, 0.15);
  if (key == "torus_d") return torus(1.0, 0.5);
  if (key == "box_a") return box(1.0, 1.0, 1.0);
  if (key == "box_b") return box(1.0, 0.5, 0.25);
  if (key == "box_c") return box(1.0, 0.8, 0.2);
  if (key == "box_d") return box(0.6, 0.6, 1.8);
  if (key == "cylinder_a") return cylinder(0.4, 1.6);
  if (key == "cylinder_b") return cylinder(0.7, 0.8);
  if (key == "cylinder_c") return cylinder(0.2, 2.0);
  if (key == "cylinder_d") return cylinder(1.0, 0.4);
  if (key == "cone_a") return cone(0.8, 1.2);
  if (key == "cone_b") return cone(0.5, 1.8);
  if (key == "cone_c") return cone(1.0, 0.6);
  throw ContractError("make_synthetic: unknown model '" + name + "'");
}

TriMesh load_model(const std::string& path) {
  if (path.rfind("synth:", 0) == 0) return make_synthetic(path);
  return load_off(path);
}

}  // namespace nrreg
