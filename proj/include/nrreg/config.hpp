#pragma once

#include <string>
#include <vector>

#include "nrreg/benchgen.hpp"
#include "nrreg/training.hpp"

namespace nrreg {

struct SweepConfig {
  std::string axis = "deformation";
  std::vector<double> levels = {0.1, 0.2, 0.3, 0.4, 0.5};
  int trials_per_level = 20;
  bool measure_time = true;
  bool compare_baseline = false;  // add an alignment-off series
  int points_per_cloud = 1024;
  std::uint64_t seed = 0;

  void validate() const;
};

// Everything the toolkit can be configured with, grouped as it appears in
// the text format: [descriptor], [match], [lbp], [train], [challenge],
// [sweep] sections of "key = value" lines.
struct FullConfig {
  TrainConfig train;  // embeds descriptor and match/lbp configs
  ChallengeSpec challenge;
  SweepConfig sweep;
};

// Canonical serialization: fixed section and key order, full precision.
std::string serialize_config(const FullConfig& cfg);

// Applies "key = value" lines to cfg.  Unknown sections or keys are
// rejected.  '#' starts a comment.
void apply_config_text(FullConfig& cfg, const std::string& text,
                       const std::string& origin = "<config>");

FullConfig parse_config(const std::string& text, const std::string& origin = "<config>");

}  // namespace nrreg
