#pragma once

#include <string>
#include <vector>

namespace nrreg {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> checks;
  double max_rel_err = 0;
  bool pass = false;  // every check within kGradCheckTol
};

constexpr double kGradCheckTol = 1e-5;
constexpr double kGradCheckStep = 1e-4;

// Central finite differences (float64) against analytic gradients, for
// every primitive and for the composed descriptor+LBP+loss pipeline on a
// 32-point instance.  Evaluation points avoid argmin/argmax ties.
GradCheckReport run_gradcheck();

}  // namespace nrreg
