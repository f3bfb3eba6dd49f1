#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kshape/cost_model.hpp"
#include "kshape/error.hpp"
#include "kshape/genotype.hpp"
#include "kshape/moea/evolve.hpp"
#include "kshape/runner/reference_points.hpp"

namespace kshape::runner {

// ---------------------------------------------------------------------------
// Genotype files
//
//   # comment
//   mode three_obj
//   layer 5x5*20 3x3*10 removed*2
//   layer 1x3 5x1*63
//
// One `layer` line per conv layer, slots in order, `label*count` for runs.
// Without a mode line, three_obj is assumed iff some slot is `removed`.
// Files starting with '{' are read as genotype JSON instead.

inline std::string allele_label(std::uint8_t a) {
  return a == kRemoved ? "removed" : shape_by_id(a).label();
}

inline std::string format_genotype(const Genotype& g) {
  std::ostringstream out;
  out << "mode " << mode_name(g.mode) << '\n';
  for (const auto& layer : g.layers) {
    out << "layer";
    for (std::size_t i = 0; i < layer.size();) {
      std::size_t j = i;
      while (j < layer.size() && layer[j] == layer[i]) ++j;
      out << ' ' << allele_label(layer[i]);
      if (j - i > 1) out << '*' << (j - i);
      i = j;
    }
    out << '\n';
  }
  return out.str();
}

inline Genotype parse_genotype_text(const std::string& text, const std::string& source) {
  Genotype g;
  std::optional<Mode> mode;
  bool any_removed = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> ConfigError {
    return ConfigError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string head;
    if (!(words >> head)) continue;
    if (head == "mode") {
      std::string m, extra;
      if (!(words >> m) || (words >> extra)) throw fail("expected 'mode two_obj|three_obj'");
      try {
        mode = parse_mode(m);
      } catch (const ConfigError& e) {
        throw fail(e.what());
      }
    } else if (head == "layer") {
      auto& layer = g.layers.emplace_back();
      for (std::string tok; words >> tok;) {
        std::string label = tok;
        long count = 1;
        if (auto star = tok.find('*'); star != std::string::npos) {
          label = tok.substr(0, star);
          const auto num = tok.substr(star + 1);
          char* end = nullptr;
          count = std::strtol(num.c_str(), &end, 10);
          if (num.empty() || *end != '\0' || count < 1 || count > 100000) {
            throw fail("bad repeat count in '" + tok + "'");
          }
        }
        std::uint8_t allele = kRemoved;
        if (label == "removed") {
          any_removed = true;
        } else {
          try {
            allele = std::uint8_t(shape_by_label(label).id);
          } catch (const ConfigError& e) {
            throw fail(e.what());
          }
        }
        layer.insert(layer.end(), std::size_t(count), allele);
      }
      if (layer.empty()) throw fail("layer line lists no kernels");
    } else {
      throw fail("expected 'mode' or 'layer', found '" + head + "'");
    }
  }
  if (g.layers.empty()) throw ConfigError(source + ": no layer lines");
  g.mode = mode.value_or(any_removed ? Mode::kThreeObjective : Mode::kTwoObjective);
  return g;
}

inline Genotype load_genotype_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open genotype file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return nlohmann::json::parse(text).get<Genotype>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_genotype_text(text, path.string());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp);
    out << text;
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Kernel distribution

/// CSV with a row per (layer, shape) for all nine shapes plus REMOVED.
/// Layers are numbered from 1.
inline std::string export_kernel_distribution(const Genotype& g, const NetworkTemplate& tmpl) {
  validate(g, tmpl);
  std::ostringstream out;
  out << "layer,shape,count\n";
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto counts = shape_counts(g.layers[l]);
    for (const auto& s : catalogue()) out << l + 1 << ',' << s.label() << ',' << counts[s.id] << '\n';
    out << l + 1 << ",REMOVED," << counts[kRemoved] << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Pareto front

struct FrontMember {
  std::string key;
  Genotype genotype;
  moea::FitnessVector fitness;
};

struct Front {
  std::string template_id;
  std::string dataset;
  Mode mode = Mode::kTwoObjective;
  std::uint64_t benchmark_mults = 0;
  std::vector<FrontMember> members;  // ascending mults, then error
  ReferencePoints refs;
};

inline std::vector<std::string> objective_names(Mode mode) {
  std::vector<std::string> names{"conv_mults", "top1_error"};
  if (mode == Mode::kThreeObjective) names.push_back("kernel_count");
  return names;
}

/// Throws if any member dominates another.
inline void check_nondominated(const std::vector<FrontMember>& members) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (i != j && moea::dominates(members[i].fitness, members[j].fitness)) {
        throw ComputeError("front member " + std::to_string(i) + " dominates member " +
                           std::to_string(j));
      }
    }
  }
}

/// Sorted, checked front with reference points, built from an archive.
inline Front make_front(const std::vector<moea::Individual>& archive, const NetworkTemplate& tmpl,
                        const std::string& dataset, Mode mode) {
  if (archive.empty()) throw ComputeError("archive is empty");
  Front f;
  f.template_id = tmpl.id;
  f.dataset = dataset;
  f.mode = mode;
  f.benchmark_mults =
      network_cost(decode(uniform_genotype(tmpl, tmpl.original_shape_id), tmpl)).total_conv_mults;
  for (const auto& ind : archive) {
    if (!ind.fitness) throw ComputeError("archive member without fitness");
    f.members.push_back({canonical_key(ind.genotype), ind.genotype, *ind.fitness});
  }
  std::stable_sort(f.members.begin(), f.members.end(), [](const auto& a, const auto& b) {
    return a.fitness.objectives < b.fitness.objectives;
  });
  check_nondominated(f.members);
  std::vector<moea::FitnessVector> fits;
  for (const auto& m : f.members) fits.push_back(m.fitness);
  f.refs = select_reference_points(fits);
  return f;
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_reduction(double benchmark, double candidate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", benchmark / candidate);
  return buf;
}

inline std::string front_csv(const Front& f) {
  std::ostringstream out;
  out << "id";
  for (const auto& n : objective_names(f.mode)) out << ',' << n;
  out << ",active_kernels,reduction,ref,key\n";
  for (std::size_t i = 0; i < f.members.size(); ++i) {
    const auto& m = f.members[i];
    out << i;
    for (double v : m.fitness.objectives) out << ',' << format_double(v);
    std::string tag;
    for (auto [name, pick] : {std::pair{"ref1", f.refs.ref1}, std::pair{"ref2", f.refs.ref2},
                              std::pair{"ref3", f.refs.ref3}}) {
      if (pick.index == i) tag += tag.empty() ? name : std::string("+") + name;
    }
    out << ',' << active_kernels(m.genotype) << ','
        << format_reduction(double(f.benchmark_mults), m.fitness[0]) << ',' << tag << ",\""
        << m.key << "\"\n";
  }
  return out.str();
}

/// Reads the objective columns of a front CSV written by front_csv.
inline std::vector<moea::FitnessVector> read_front_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  std::size_t objectives = 0;
  {
    std::istringstream header(line);
    std::string col;
    std::getline(header, col, ',');
    while (std::getline(header, col, ',') && col != "active_kernels") ++objectives;
  }
  std::vector<moea::FitnessVector> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    moea::FitnessVector f;
    for (std::size_t k = 0; k < objectives; ++k) {
      if (!std::getline(row, cell, ',')) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing column");
      }
      try {
        f.objectives.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                        cell + "'");
      }
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

inline void to_json(nlohmann::json& j, const Front& f) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < f.members.size(); ++i) {
    const auto& m = f.members[i];
    members.push_back({{"id", i},
                       {"key", m.key},
                       {"fitness", m.fitness},
                       {"active_kernels", active_kernels(m.genotype)},
                       {"genotype", m.genotype}});
  }
  auto ref = [](const ReferencePick& p) {
    return nlohmann::json{{"id", p.index}, {"rationale", p.rationale}};
  };
  j = nlohmann::json{{"template", f.template_id},
                     {"dataset", f.dataset},
                     {"mode", mode_name(f.mode)},
                     {"objectives", objective_names(f.mode)},
                     {"benchmark_mults", f.benchmark_mults},
                     {"members", members},
                     {"reference_points",
                      {{"ref1", ref(f.refs.ref1)},
                       {"ref2", ref(f.refs.ref2)},
                       {"ref3", ref(f.refs.ref3)}}}};
}

inline void from_json(const nlohmann::json& j, Front& f) {
  j.at("template").get_to(f.template_id);
  j.at("dataset").get_to(f.dataset);
  f.mode = parse_mode(j.at("mode").get<std::string>());
  j.at("benchmark_mults").get_to(f.benchmark_mults);
  f.members.clear();
  for (const auto& m : j.at("members")) {
    f.members.push_back({m.at("key").get<std::string>(), m.at("genotype").get<Genotype>(),
                         m.at("fitness").get<moea::FitnessVector>()});
  }
  auto ref = [&](const char* name) {
    const auto& r = j.at("reference_points").at(name);
    return ReferencePick{r.at("id").get<std::size_t>(), r.at("rationale").get<std::string>()};
  };
  f.refs = {ref("ref1"), ref("ref2"), ref("ref3")};
}

inline Front load_front_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    auto f = nlohmann::json::parse(in).get<Front>();
    check_nondominated(f.members);
    for (auto idx : {f.refs.ref1.index, f.refs.ref2.index, f.refs.ref3.index}) {
      if (idx >= f.members.size()) throw DataError(path.string() + ": reference id out of range");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Resolves "ref1".."ref3" or a member id.
inline const FrontMember& front_member(const Front& f, const std::string& tag) {
  std::size_t idx;
  if (tag == "ref1") {
    idx = f.refs.ref1.index;
  } else if (tag == "ref2") {
    idx = f.refs.ref2.index;
  } else if (tag == "ref3") {
    idx = f.refs.ref3.index;
  } else {
    char* end = nullptr;
    const auto v = std::strtoul(tag.c_str(), &end, 10);
    if (tag.empty() || *end != '\0') {
      throw ConfigError("reference '" + tag + "' is not ref1, ref2, ref3 or a member id");
    }
    idx = v;
  }
  if (idx >= f.members.size()) {
    throw ConfigError("front has no member " + std::to_string(idx));
  }
  return f.members[idx];
}

/// Scatter of mults against error; the third objective, if any, sets the
/// marker radius.
inline std::string front_svg(const Front& f) {
  const double w = 640, h = 480, left = 80, right = 20, top = 20, bottom = 60;
  double x_max = 0, y_max = 0, k_min = 1e300, k_max = 0;
  for (const auto& m : f.members) {
    x_max = std::max(x_max, m.fitness[0]);
    y_max = std::max(y_max, m.fitness[1]);
    if (m.fitness.size() > 2) {
      k_min = std::min(k_min, m.fitness[2]);
      k_max = std::max(k_max, m.fitness[2]);
    }
  }
  x_max = x_max > 0 ? x_max * 1.05 : 1;
  y_max = y_max > 0 ? y_max * 1.05 : 1;
  auto px = [&](double v) { return left + v / x_max * (w - left - right); };
  auto py = [&](double v) { return h - bottom - v / y_max * (h - top - bottom); };
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right
      << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << h - bottom << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 20
      << "\" text-anchor=\"middle\">conv mults (max " << x_max / 1.05 << ")</text>\n"
      << "<text x=\"20\" y=\"" << (top + h - bottom) / 2 << "\" transform=\"rotate(-90 20 "
      << (top + h - bottom) / 2 << ")\" text-anchor=\"middle\">top-1 error (max " << y_max / 1.05
      << ")</text>\n";
  for (std::size_t i = 0; i < f.members.size(); ++i) {
    const auto& m = f.members[i];
    double r = 4;
    if (m.fitness.size() > 2 && k_max > k_min) r = 3 + 7 * (m.fitness[2] - k_min) / (k_max - k_min);
    const bool is_ref =
        i == f.refs.ref1.index || i == f.refs.ref2.index || i == f.refs.ref3.index;
    out << "<circle cx=\"" << px(m.fitness[0]) << "\" cy=\"" << py(m.fitness[1]) << "\" r=\"" << r
        << "\" fill=\"" << (is_ref ? "crimson" : "steelblue") << "\" fill-opacity=\"0.8\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

/// Writes pareto_front.csv, pareto_front.json and pareto_front.svg into `dir`
/// and re-reads the CSV to confirm its rows are mutually non-dominated.
inline void write_front_files(const Front& f, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "pareto_front.csv", front_csv(f));
  write_text_file(dir / "pareto_front.json", nlohmann::json(f).dump(2) + "\n");
  write_text_file(dir / "pareto_front.svg", front_svg(f));
  const auto rows = read_front_csv(dir / "pareto_front.csv");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (i != j && moea::dominates(rows[i], rows[j])) {
        throw ComputeError("pareto_front.csv row " + std::to_string(i) + " dominates row " +
                           std::to_string(j));
      }
    }
  }
}

}  // namespace kshape::runner
