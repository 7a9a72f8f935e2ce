#pragma once

#include <string>
#include <vector>

#include "nrreg/benchgen.hpp"
#include "nrreg/config.hpp"
#include "nrreg/featnet.hpp"
#include "nrreg/geometry.hpp"
#include "nrreg/lbp.hpp"

namespace nrreg {

// Mean over points of the Euclidean norm of (a_i - b_i).
double mean_euclidean(const std::vector<Point3>& a, const std::vector<Point3>& b);

struct ReportRow {
  double level = 0;
  double before_mean = 0;
  double after_mean = 0;
  double after_std = 0;
  double time_ms_mean = 0;
  double time_ms_std = 0;
};

struct SweepSpec {
  SweepConfig sweep;
  ChallengeSpec base;      // fixed values for the non-swept axes
  MatchConfig match;
  bool baseline = false;   // run the descriptor without the alignment transform
};

// Per level: seeded benchmark pairs from the model list, registered and
// aggregated over trials.  Distances are taken over surviving ground-truth
// correspondences only (deleted points and outliers excluded).  When
// sweep.measure_time is false the timing columns are zero and the rows are
// a pure function of the spec and checkpoint.
std::vector<ReportRow> run_sweep(const SweepSpec& spec, const ParamStore<float>& params,
                                 const DescriptorConfig& dcfg,
                                 const std::vector<std::string>& models);

extern const char* const kCsvHeader;  // axis,level,before_mean,...

void write_csv(const std::string& path, const std::string& axis,
               const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_csv(const std::string& path, std::string* axis_out = nullptr);

struct SvgSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (level, value)
};

// Standalone SVG line chart: one polyline per series, labeled axes.
void emit_svg(const std::string& path, const std::string& title, const std::string& x_label,
              const std::string& y_label, const std::vector<SvgSeries>& series);
// Fig.-style wrapper: before/after series from report rows.
void emit_svg(const std::vector<ReportRow>& rows, const std::string& path);

struct TimingStats {
  double mean_ms = 0;
  double std_ms = 0;
  int repeats = 0;
};

// Wall clock of register_clouds only; one warm-up run discarded.
TimingStats time_registration(const ParamStore<float>& params, const DescriptorConfig& dcfg,
                              const MatchConfig& mcfg, const PointCloud& source,
                              const PointCloud& target, int repeats);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace nrreg
