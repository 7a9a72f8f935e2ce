#include "nrreg/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "nrreg/errors.hpp"

namespace nrreg {

void SweepConfig::validate() const {
  static const char* axes[] = {"deformation", "rotation", "noise", "outliers",
                               "incompleteness"};
  if (std::find(std::begin(axes), std::end(axes), axis) == std::end(axes))
    throw ContractError("sweep: unknown axis '" + axis + "'");
  if (levels.empty()) throw ContractError("sweep: levels must be non-empty");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1])
      throw ContractError("sweep: levels must be strictly increasing");
  if (trials_per_level < 1) throw ContractError("sweep: trials_per_level must be >= 1");
  if (points_per_cloud < 32) throw ContractError("sweep: points_per_cloud must be >= 32");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_levels(const std::vector<double>& levels) {
  std::string out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(levels[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(where + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError(where + ": expected a number, got '" + v + "'");
  }
}

int parse_int(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ParseError(where + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t pos = 0;
    const std::uint64_t u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ParseError(where + ": expected an unsigned integer, got '" + v + "'");
  }
}

std::vector<double> parse_levels(const std::string& v, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), where));
  if (out.empty()) throw ParseError(where + ": empty level list");
  return out;
}

}  // namespace

std::string serialize_config(const FullConfig& cfg) {
  std::ostringstream out;
  const DescriptorConfig& d = cfg.train.descriptor;
  out << "[descriptor]\n";
  out << "k_graph = " << d.k_graph << "\n";
  out << "width0 = " << d.layer_widths[0] << "\n";
  out << "width1 = " << d.layer_widths[1] << "\n";
  out << "width2 = " << d.layer_widths[2] << "\n";
  out << "out_dim = " << d.out_dim << "\n";
  out << "with_alignment = " << (d.with_alignment ? "true" : "false") << "\n";
  out << "align_width0 = " << d.align_width0 << "\n";
  out << "align_width1 = " << d.align_width1 << "\n";
  out << "align_hidden = " << d.align_hidden << "\n";

  const MatchConfig& m = cfg.train.match;
  out << "[match]\n";
  out << "k_candidates = " << m.k_candidates << "\n";
  out << "k_source = " << m.k_source << "\n";
  out << "refine = " << (m.refine ? "true" : "false") << "\n";

  out << "[lbp]\n";
  out << "alpha = " << fmt_double(m.lbp.alpha) << "\n";
  out << "iterations = " << m.lbp.iterations << "\n";
  out << "temperature = " << fmt_double(m.lbp.temperature) << "\n";

  const TrainConfig& t = cfg.train;
  out << "[train]\n";
  out << "learning_rate = " << fmt_double(t.learning_rate) << "\n";
  out << "epochs = " << t.epochs << "\n";
  out << "samples_per_epoch = " << t.samples_per_epoch << "\n";
  out << "beta1 = " << fmt_double(t.beta1) << "\n";
  out << "beta2 = " << fmt_double(t.beta2) << "\n";
  out << "adam_eps = " << fmt_double(t.adam_eps) << "\n";
  out << "points_per_cloud = " << t.points_per_cloud << "\n";
  out << "max_deform = " << fmt_double(t.max_deform) << "\n";
  out << "seed = " << t.seed << "\n";

  const ChallengeSpec& c = cfg.challenge;
  out << "[challenge]\n";
  out << "deform_level = " << fmt_double(c.deform_level) << "\n";
  out << "rotation_level = " << fmt_double(c.rotation_level) << "\n";
  out << "noise_level = " << fmt_double(c.noise_level) << "\n";
  out << "outlier_ratio = " << fmt_double(c.outlier_ratio) << "\n";
  out << "incompleteness_ratio = " << fmt_double(c.incompleteness_ratio) << "\n";
  out << "n_controls = " << c.n_controls << "\n";
  out << "seed = " << c.seed << "\n";

  const SweepConfig& s = cfg.sweep;
  out << "[sweep]\n";
  out << "axis = " << s.axis << "\n";
  out << "levels = " << fmt_levels(s.levels) << "\n";
  out << "trials_per_level = " << s.trials_per_level << "\n";
  out << "measure_time = " << (s.measure_time ? "true" : "false") << "\n";
  out << "compare_baseline = " << (s.compare_baseline ? "true" : "false") << "\n";
  out << "points_per_cloud = " << s.points_per_cloud << "\n";
  out << "seed = " << s.seed << "\n";
  return out.str();
}

void apply_config_text(FullConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");

    DescriptorConfig& d = cfg.train.descriptor;
    MatchConfig& m = cfg.train.match;
    TrainConfig& t = cfg.train;
    ChallengeSpec& c = cfg.challenge;
    SweepConfig& s = cfg.sweep;

    if (section == "descriptor") {
      if (key == "k_graph") d.k_graph = parse_int(value, where);
      else if (key == "width0") d.layer_widths[0] = parse_int(value, where);
      else if (key == "width1") d.layer_widths[1] = parse_int(value, where);
      else if (key == "width2") d.layer_widths[2] = parse_int(value, where);
      else if (key == "out_dim") d.out_dim = parse_int(value, where);
      else if (key == "with_alignment") d.with_alignment = parse_bool(value, where);
      else if (key == "align_width0") d.align_width0 = parse_int(value, where);
      else if (key == "align_width1") d.align_width1 = parse_int(value, where);
      else if (key == "align_hidden") d.align_hidden = parse_int(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [descriptor]");
    } else if (section == "match") {
      if (key == "k_candidates") m.k_candidates = parse_int(value, where);
      else if (key == "k_source") m.k_source = parse_int(value, where);
      else if (key == "refine") m.refine = parse_bool(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [match]");
    } else if (section == "lbp") {
      if (key == "alpha") m.lbp.alpha = parse_double(value, where);
      else if (key == "iterations") m.lbp.iterations = parse_int(value, where);
      else if (key == "temperature") m.lbp.temperature = parse_double(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [lbp]");
    } else if (section == "train") {
      if (key == "learning_rate") t.learning_rate = parse_double(value, where);
      else if (key == "epochs") t.epochs = parse_int(value, where);
      else if (key == "samples_per_epoch") t.samples_per_epoch = parse_int(value, where);
      else if (key == "beta1") t.beta1 = parse_double(value, where);
      else if (key == "beta2") t.beta2 = parse_double(value, where);
      else if (key == "adam_eps") t.adam_eps = parse_double(value, where);
      else if (key == "points_per_cloud") t.points_per_cloud = parse_int(value, where);
      else if (key == "max_deform") t.max_deform = parse_double(value, where);
      else if (key == "seed") t.seed = parse_u64(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [train]");
    } else if (section == "challenge") {
      if (key == "deform_level") c.deform_level = parse_double(value, where);
      else if (key == "rotation_level") c.rotation_level = parse_double(value, where);
      else if (key == "noise_level") c.noise_level = parse_double(value, where);
      else if (key == "outlier_ratio") c.outlier_ratio = parse_double(value, where);
      else if (key == "incompleteness_ratio") c.incompleteness_ratio = parse_double(value, where);
      else if (key == "n_controls") c.n_controls = parse_int(value, where);
      else if (key == "seed") c.seed = parse_u64(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [challenge]");
    } else if (section == "sweep") {
      if (key == "axis") s.axis = value;
      else if (key == "levels") s.levels = parse_levels(value, where);
      else if (key == "trials_per_level") s.trials_per_level = parse_int(value, where);
      else if (key == "measure_time") s.measure_time = parse_bool(value, where);
      else if (key == "compare_baseline") s.compare_baseline = parse_bool(value, where);
      else if (key == "points_per_cloud") s.points_per_cloud = parse_int(value, where);
      else if (key == "seed") s.seed = parse_u64(value, where);
      else throw ParseError(where + ": unknown key '" + key + "' in [sweep]");
    } else if (section.empty()) {
      throw ParseError(where + ": key outside of any [section]");
    } else {
      throw ParseError(where + ": unknown section [" + section + "]");
    }
  }
}

FullConfig parse_config(const std::string& text, const std::string& origin) {
  FullConfig cfg;
  apply_config_text(cfg, text, origin);
  return cfg;
}

}  // namespace nrreg
