#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nrreg/geometry.hpp"

namespace nrreg {

// One benchmark pair is fully determined by the source cloud and this spec;
// each challenge stage draws from its own named substream of `seed`, and a
// stage at level zero is skipped entirely, so the axes are independent.
struct ChallengeSpec {
  double deform_level = 0.0;          // in [0, 0.9]
  double rotation_level = 0.0;        // radians, in [0, 0.8]
  double noise_level = 0.0;           // model units, >= 0
  double outlier_ratio = 0.0;         // >= 0
  double incompleteness_ratio = 0.0;  // in [0, 1)
  int n_controls = 5;                 // TPS control count
  std::uint64_t seed = 0;

  void validate() const;
};

struct SamplePair {
  PointCloud source;  // possibly with a deleted patch
  PointCloud target;  // deformed + rotated + noised, outliers appended
  // Per surviving source point, the index of its true target.
  std::vector<std::int64_t> gt_map;
  double applied_rotation = 0.0;
  double applied_deform = 0.0;
};

// Pipeline: TPS deformation from n_controls random sites (per-control
// displacement components uniform in +-0.5*deform_level) -> z rotation by
// an angle uniform in [0, rotation_level] -> per-point uniform noise ->
// appended bounding-box outliers -> contiguous patch deleted from the
// source.  Outliers are never ground-truth targets.
SamplePair make_pair(const PointCloud& cloud, const ChallengeSpec& spec);

// Seeded shuffle, then prefix split. Disjoint, exhaustive, deterministic.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::vector<std::string>& paths, double train_fraction, std::uint64_t seed);

// Training-time augmentation: rotation up to 45 degrees, deformation level
// drawn uniform in [0, max_deform], no noise / outliers / deletions.
SamplePair training_augment(const PointCloud& cloud, std::uint64_t seed,
                            double max_deform = 0.9);

struct ManifestEntry {
  std::string model;
  ChallengeSpec spec;
};

extern const char* const kManifestHeader;

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Ground-truth map file: one target index per line, '#' comments ignored.
void save_gt(const std::vector<std::int64_t>& gt_map, const std::string& path);
std::vector<std::int64_t> load_gt(const std::string& path);

}  // namespace nrreg
