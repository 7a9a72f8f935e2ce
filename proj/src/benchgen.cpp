#include "nrreg/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nrreg/errors.hpp"
#include "nrreg/prng.hpp"

namespace nrreg {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr int kTpsRetries = 32;
}  // namespace

void ChallengeSpec::validate() const {
  if (deform_level < 0 || deform_level > 0.9)
    throw ContractError("challenge: deform_level must be in [0, 0.9]");
  if (rotation_level < 0 || rotation_level > 0.8)
    throw ContractError("challenge: rotation_level must be in [0, 0.8] radians");
  if (noise_level < 0) throw ContractError("challenge: noise_level must be >= 0");
  if (outlier_ratio < 0) throw ContractError("challenge: outlier_ratio must be >= 0");
  if (incompleteness_ratio < 0 || incompleteness_ratio >= 1)
    throw ContractError("challenge: incompleteness_ratio must be in [0, 1)");
  if (n_controls < 1) throw ContractError("challenge: n_controls must be >= 1");
}

SamplePair make_pair(const PointCloud& cloud, const ChallengeSpec& spec) {
  spec.validate();
  const std::size_t n = cloud.size();
  if (n < 32) throw ContractError("make_pair: cloud must have at least 32 points");

  SamplePair pair;
  pair.target.points = cloud.points;

  if (spec.deform_level > 0) {
    RandomStream site_stream(spec.seed, "controls");
    RandomStream disp_stream(spec.seed, "deform");
    const double amp = 0.5 * spec.deform_level;
    const std::size_t m = std::min<std::size_t>(std::size_t(spec.n_controls), n);
    for (int attempt = 0;; ++attempt) {
      // Fisher-Yates prefix over point indices.
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      for (std::size_t i = 0; i < m; ++i)
        std::swap(order[i], order[i + site_stream.below(n - i)]);
      std::vector<Point3> controls(m), disps(m);
      for (std::size_t i = 0; i < m; ++i) {
        controls[i] = cloud.points[order[i]];
        for (int d = 0; d < 3; ++d) disps[i][d] = disp_stream.uniform(-amp, amp);
      }
      try {
        const TpsWarp warp = tps_fit(controls, disps);
        pair.target = tps_apply(warp, pair.target);
        break;
      } catch (const FitError&) {
        if (attempt + 1 >= kTpsRetries) throw;
      }
    }
    pair.applied_deform = spec.deform_level;
  }

  if (spec.rotation_level > 0) {
    RandomStream rot_stream(spec.seed, "rotation");
    pair.applied_rotation = rot_stream.uniform(0, spec.rotation_level);
    pair.target = rotate_z(pair.target, pair.applied_rotation);
  }

  if (spec.noise_level > 0) {
    RandomStream noise_stream(spec.seed, "noise");
    for (auto& p : pair.target.points)
      for (int d = 0; d < 3; ++d)
        p[d] += noise_stream.uniform(-spec.noise_level, spec.noise_level);
  }

  if (spec.outlier_ratio > 0) {
    const std::size_t n_out = std::size_t(std::ceil(spec.outlier_ratio * double(n)));
    Point3 lo = pair.target.points[0], hi = pair.target.points[0];
    for (const auto& p : pair.target.points)
      for (int d = 0; d < 3; ++d) {
        lo[d] = std::min(lo[d], p[d]);
        hi[d] = std::max(hi[d], p[d]);
      }
    RandomStream outlier_stream(spec.seed, "outliers");
    for (std::size_t i = 0; i < n_out; ++i) {
      Point3 p;
      for (int d = 0; d < 3; ++d) p[d] = outlier_stream.uniform(lo[d], hi[d]);
      pair.target.points.push_back(p);
    }
  }

  std::vector<bool> keep(n, true);
  if (spec.incompleteness_ratio > 0) {
    const std::size_t n_del =
        std::size_t(std::ceil(spec.incompleteness_ratio * double(n)));
    RandomStream patch_stream(spec.seed, "patch");
    const std::size_t seed_idx = std::size_t(patch_stream.below(n));
    const std::vector<int> nearest =
        knn(cloud.points[seed_idx].data(), 1, cloud.points[0].data(), n, 3,
            std::min(n_del, n));
    for (int idx : nearest) keep[std::size_t(idx)] = false;
  }

  pair.source.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    pair.source.points.push_back(cloud.points[i]);
    pair.gt_map.push_back(std::int64_t(i));
  }
  pair.source.correspondence = pair.gt_map;
  return pair;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& paths, double train_fraction, std::uint64_t seed) {
  if (paths.empty()) throw ContractError("split_dataset: empty path list");
  if (train_fraction < 0 || train_fraction > 1)
    throw ContractError("split_dataset: train_fraction must be in [0, 1]");
  std::vector<std::string> shuffled = paths;
  RandomStream rs(seed, "split");
  for (std::size_t i = 0; i + 1 < shuffled.size(); ++i)
    std::swap(shuffled[i], shuffled[i + rs.below(shuffled.size() - i)]);
  const std::size_t n_train =
      std::size_t(std::llround(train_fraction * double(shuffled.size())));
  std::vector<std::string> train(shuffled.begin(), shuffled.begin() + n_train);
  std::vector<std::string> val(shuffled.begin() + n_train, shuffled.end());
  return {std::move(train), std::move(val)};
}

SamplePair training_augment(const PointCloud& cloud, std::uint64_t seed, double max_deform) {
  RandomStream level_stream(seed, "train_deform");
  ChallengeSpec spec;
  spec.deform_level = level_stream.uniform(0, max_deform);
  spec.rotation_level = kPi / 4;
  spec.seed = seed;
  return make_pair(cloud, spec);
}

const char* const kManifestHeader =
    "model,deform_level,rotation_level,noise_level,outlier_ratio,incompleteness_ratio,"
    "n_controls,seed";

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  out << kManifestHeader << "\n";
  char buf[512];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%llu\n",
                  e.model.c_str(), e.spec.deform_level, e.spec.rotation_level,
                  e.spec.noise_level, e.spec.outlier_ratio, e.spec.incompleteness_ratio,
                  e.spec.n_controls, static_cast<unsigned long long>(e.spec.seed));
    out << buf;
  }
  if (!out) throw IoError("write_manifest: write failed for " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_manifest: cannot open " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path + ": empty manifest");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw ParseError(path + ":1: bad manifest header, expected '" +
                     std::string(kManifestHeader) + "'");
  std::vector<ManifestEntry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 8 fields, got " +
                       std::to_string(fields.size()));
    ManifestEntry e;
    e.model = fields[0];
    try {
      e.spec.deform_level = std::stod(fields[1]);
      e.spec.rotation_level = std::stod(fields[2]);
      e.spec.noise_level = std::stod(fields[3]);
      e.spec.outlier_ratio = std::stod(fields[4]);
      e.spec.incompleteness_ratio = std::stod(fields[5]);
      e.spec.n_controls = std::stoi(fields[6]);
      e.spec.seed = std::stoull(fields[7]);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_gt(const std::vector<std::int64_t>& gt_map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_gt: cannot open " + path);
  for (std::int64_t v : gt_map) out << v << "\n";
  if (!out) throw IoError("save_gt: write failed for " + path);
}

std::vector<std::int64_t> load_gt(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_gt: cannot open " + path);
  std::vector<std::int64_t> gt;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto pos = line.find('#');
    if (pos != std::string::npos) line.erase(pos);
    std::istringstream ss(line);
    std::int64_t v;
    if (ss >> v) gt.push_back(v);
  }
  return gt;
}

}  // namespace nrreg
