#pragma once

#include <string>
#include <vector>

namespace nrreg {

struct SelfTestResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Oracle battery: every check compares an operation against an independent
// reference (hand values, brute-force scans, exhaustive enumeration).
std::vector<SelfTestResult> run_selftest();

}  // namespace nrreg
