#include "nrreg/evalrep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nrreg/errors.hpp"
#include "nrreg/prng.hpp"
#include "nrreg/synthetic.hpp"

namespace nrreg {

double mean_euclidean(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  if (a.size() != b.size())
    throw ContractError("mean_euclidean: size mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  if (a.empty()) throw ContractError("mean_euclidean: empty input");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a[i][0] - b[i][0];
    const double dy = a[i][1] - b[i][1];
    const double dz = a[i][2] - b[i][2];
    acc += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return acc / double(a.size());
}

namespace {

struct MeanStd {
  double mean = 0;
  double std = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= double(v.size());
  if (v.size() > 1) {
    double acc = 0;
    for (double x : v) acc += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(acc / double(v.size() - 1));
  }
  return out;
}

ChallengeSpec spec_for_level(const ChallengeSpec& base, const std::string& axis, double level) {
  ChallengeSpec spec = base;
  if (axis == "deformation") spec.deform_level = level;
  else if (axis == "rotation") spec.rotation_level = level;
  else if (axis == "noise") spec.noise_level = level;
  else if (axis == "outliers") spec.outlier_ratio = level;
  else if (axis == "incompleteness") spec.incompleteness_ratio = level;
  else throw ContractError("sweep: unknown axis '" + axis + "'");
  return spec;
}

// Ground-truth target positions for the surviving source points.
std::vector<Point3> gt_targets(const SamplePair& pair) {
  std::vector<Point3> out;
  out.reserve(pair.gt_map.size());
  for (std::int64_t idx : pair.gt_map) out.push_back(pair.target.points[std::size_t(idx)]);
  return out;
}

}  // namespace

std::vector<ReportRow> run_sweep(const SweepSpec& spec, const ParamStore<float>& params,
                                 const DescriptorConfig& dcfg,
                                 const std::vector<std::string>& models) {
  spec.sweep.validate();
  if (models.empty()) throw ContractError("run_sweep: empty model list");

  DescriptorConfig desc = dcfg;
  if (spec.baseline) desc.with_alignment = false;

  std::vector<TriMesh> meshes;
  meshes.reserve(models.size());
  for (const auto& m : models) meshes.push_back(load_model(m));

  std::vector<ReportRow> rows;
  rows.reserve(spec.sweep.levels.size());
  for (std::size_t li = 0; li < spec.sweep.levels.size(); ++li) {
    const double level = spec.sweep.levels[li];
    const ChallengeSpec level_spec = spec_for_level(spec.base, spec.sweep.axis, level);

    std::vector<double> before, after, times;
    for (int trial = 0; trial < spec.sweep.trials_per_level; ++trial) {
      const std::uint64_t trial_seed =
          derive_seed(spec.sweep.seed, "sweep", li * 1000003ull + std::uint64_t(trial));
      RandomStream pick(trial_seed, "model_pick");
      const std::size_t model_idx = std::size_t(pick.below(meshes.size()));

      PointCloud cloud = sample_surface(meshes[model_idx],
                                        std::size_t(spec.sweep.points_per_cloud),
                                        derive_seed(trial_seed, "sample"));
      normalize(cloud);
      ChallengeSpec pair_spec = level_spec;
      pair_spec.seed = derive_seed(trial_seed, "pair");
      const SamplePair pair = make_pair(cloud, pair_spec);
      const std::vector<Point3> gt = gt_targets(pair);

      before.push_back(mean_euclidean(pair.source.points, gt));
      const RegistrationResult reg =
          register_clouds(pair.source, pair.target, params, desc, spec.match);
      after.push_back(mean_euclidean(reg.warped.points, gt));
      times.push_back(reg.elapsed_ms);
    }

    ReportRow row;
    row.level = level;
    row.before_mean = mean_std(before).mean;
    const MeanStd a = mean_std(after);
    row.after_mean = a.mean;
    row.after_std = a.std;
    if (spec.sweep.measure_time) {
      const MeanStd t = mean_std(times);
      row.time_ms_mean = t.mean;
      row.time_ms_std = t.std;
    }
    rows.push_back(row);
  }
  return rows;
}

const char* const kCsvHeader =
    "axis,level,before_mean,after_mean,after_std,time_ms_mean,time_ms_std";

void write_csv(const std::string& path, const std::string& axis,
               const std::vector<ReportRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path);
  out << kCsvHeader << "\n";
  char buf[320];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", axis.c_str(),
                  r.level, r.before_mean, r.after_mean, r.after_std, r.time_ms_mean,
                  r.time_ms_std);
    out << buf;
  }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

std::vector<ReportRow> read_csv(const std::string& path, std::string* axis_out) {
  std::ifstream in(path);
  if (!in) throw IoError("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError(path + ":1: unexpected CSV header");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 7 fields");
    if (axis_out) *axis_out = fields[0];
    ReportRow r;
    try {
      r.level = std::stod(fields[1]);
      r.before_mean = std::stod(fields[2]);
      r.after_mean = std::stod(fields[3]);
      r.after_std = std::stod(fields[4]);
      r.time_ms_mean = std::stod(fields[5]);
      r.time_ms_std = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
    rows.push_back(r);
  }
  return rows;
}

void emit_svg(const std::string& path, const std::string& title, const std::string& x_label,
              const std::string& y_label, const std::vector<SvgSeries>& series) {
  if (series.empty()) throw ContractError("emit_svg: no series");
  for (const auto& s : series)
    if (s.points.empty()) throw ContractError("emit_svg: empty series '" + s.name + "'");

  const double width = 640, height = 480;
  const double ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = series[0].points[0].first, xmax = xmin;
  double ymin = series[0].points[0].second, ymax = ymin;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  ymin = std::min(ymin, 0.0);
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  char buf[256];
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  // axes
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"black\"/>\n",
                ml, height - mb, width - mr, height - mb);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"black\"/>\n",
                ml, mt, ml, height - mb);
  out << buf;
  out << "<text x=\"" << (ml + (width - ml - mr) / 2) << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + (height - mt - mb) / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (mt + (height - mt - mb) / 2) << ")\">" << y_label << "</text>\n";
  // axis extremes
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"middle\" font-size=\"11\">%g</text>\n",
                px(xmin), height - mb + 16, xmin);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"middle\" font-size=\"11\">%g</text>\n",
                px(xmax), height - mb + 16, xmax);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"end\" font-size=\"11\">%g</text>\n",
                ml - 6, py(ymin) + 4, ymin);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.3f\" y=\"%.3f\" text-anchor=\"end\" font-size=\"11\">%g</text>\n",
                ml - 6, py(ymax) + 4, ymax);
  out << buf;

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = colors[si % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[si].points) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", px(x), py(y));
      out << buf;
    }
    out << "\"/>\n";
    for (const auto& [x, y] : series[si].points) {
      std::snprintf(buf, sizeof(buf), "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"%s\"/>\n",
                    px(x), py(y), color);
      out << buf;
    }
    // legend
    const double ly = mt + 8 + 18 * double(si);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n",
                  width - mr - 150, ly, width - mr - 120, ly, color);
    out << buf;
    out << "<text x=\"" << width - mr - 112 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << series[si].name << "</text>\n";
  }
  out << "</svg>\n";

  std::ofstream file(path);
  if (!file) throw IoError("emit_svg: cannot open " + path);
  file << out.str();
  if (!file) throw IoError("emit_svg: write failed for " + path);
}

void emit_svg(const std::vector<ReportRow>& rows, const std::string& path) {
  if (rows.empty()) throw ContractError("emit_svg: no rows");
  SvgSeries before{"before", {}};
  SvgSeries after{"after", {}};
  for (const auto& r : rows) {
    before.points.emplace_back(r.level, r.before_mean);
    after.points.emplace_back(r.level, r.after_mean);
  }
  emit_svg(path, "mean Euclidean distance vs level", "level", "mean distance",
           {before, after});
}

TimingStats time_registration(const ParamStore<float>& params, const DescriptorConfig& dcfg,
                              const MatchConfig& mcfg, const PointCloud& source,
                              const PointCloud& target, int repeats) {
  if (repeats < 3) throw ContractError("time_registration: repeats must be >= 3");
  register_clouds(source, target, params, dcfg, mcfg);  // warm-up, discarded
  std::vector<double> times;
  times.reserve(std::size_t(repeats));
  for (int i = 0; i < repeats; ++i)
    times.push_back(register_clouds(source, target, params, dcfg, mcfg).elapsed_ms);
  const MeanStd s = mean_std(times);
  return {s.mean, s.std, repeats};
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (double(i) + double(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ContractError("spearman: need two equally sized vectors of length >= 2");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0;
  return cov / std::sqrt(va * vb);
}

}  // namespace nrreg
