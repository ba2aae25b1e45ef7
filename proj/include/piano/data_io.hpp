#pragma once

// Dataset ingestion (CSV, LIBSVM), seeded synthetic problems and trace /
// weight persistence.

#include "piano/core.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace piano {

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Maximum n * d materialized by the dense loaders.
inline constexpr double kMaxDenseEntries = 2e8;

namespace detail {

/// Assigns class indices in order of first appearance.
class LabelEncoder {
 public:
  int encode(const std::string& name) {
    auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(names_.size());
    index_.emplace(name, id);
    names_.push_back(name);
    return id;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> names_;
};

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

/// Splits one RFC-4180 style record: commas separate fields, double quotes
/// enclose fields and "" escapes a quote.
inline std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

inline Matrix with_bias_column(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline Dataset assemble(const std::vector<std::vector<double>>& rows, Index d,
                        const std::vector<int>& classes, const LabelEncoder& labels,
                        bool append_bias) {
  if (rows.empty()) throw ParseError("no data rows");
  if (labels.names().size() < 2) throw ParseError("need at least two distinct classes (m >= 2)");
  if (static_cast<double>(rows.size()) * static_cast<double>(d) > kMaxDenseEntries)
    throw ParseError("dataset too large to materialize densely (n * d > 2e8)");
  Matrix x = Matrix::Zero(static_cast<Index>(rows.size()), d);
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t l = 0; l < rows[j].size(); ++l)
      x(static_cast<Index>(j), static_cast<Index>(l)) = rows[j][l];
  if (append_bias) x = with_bias_column(x);
  return Dataset::from_classes(std::move(x), classes, static_cast<Index>(labels.names().size()),
                               labels.names());
}

}  // namespace detail

/// label_column may be negative to count from the end (-1 is the last).
inline Dataset load_csv(const std::string& path, int label_column, bool has_header,
                        bool append_bias = false) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> classes;
  detail::LabelEncoder encoder;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = detail::split_csv_record(line);
    if (width == 0) {
      width = fields.size();
      if (width < 2) throw ParseError(path + ":" + std::to_string(line_no) + ": need a label and at least one feature");
    }
    if (fields.size() != width)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " columns, got " + std::to_string(fields.size()));
    const int w = static_cast<int>(width);
    const int label_col = label_column < 0 ? w + label_column : label_column;
    if (label_col < 0 || label_col >= w)
      throw ParseError("label column " + std::to_string(label_column) + " out of range");
    std::vector<double> row;
    row.reserve(width - 1);
    for (int c = 0; c < w; ++c) {
      if (c == label_col) continue;
      const auto v = detail::parse_double(fields[static_cast<std::size_t>(c)]);
      if (!v)
        throw ParseError(path + ":" + std::to_string(line_no) + ": column " + std::to_string(c + 1) +
                         ": not a number: '" + fields[static_cast<std::size_t>(c)] + "'");
      row.push_back(*v);
    }
    classes.push_back(encoder.encode(fields[static_cast<std::size_t>(label_col)]));
    rows.push_back(std::move(row));
  }
  return detail::assemble(rows, static_cast<Index>(width == 0 ? 1 : width - 1), classes, encoder,
                          append_bias);
}

/// "label idx:val ..." with 1-based ascending indices. d is the largest index
/// seen unless `dims` is given.
inline Dataset load_libsvm(const std::string& path, std::optional<Index> dims = std::nullopt,
                           bool append_bias = false) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::vector<std::pair<Index, double>>> sparse;
  std::vector<int> classes;
  detail::LabelEncoder encoder;
  std::string line;
  std::size_t line_no = 0;
  Index max_index = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    std::istringstream tokens(line);
    std::string label;
    tokens >> label;
    std::vector<std::pair<Index, double>> entries;
    std::string tok;
    Index last = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      auto fail = [&](const std::string& why) {
        return ParseError(path + ":" + std::to_string(line_no) + ": " + why + " in '" + tok + "'");
      };
      if (colon == std::string::npos) throw fail("missing ':'");
      long long idx = 0;
      const std::string idx_str = tok.substr(0, colon);
      auto [ptr, ec] = std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), idx);
      if (ec != std::errc() || ptr != idx_str.data() + idx_str.size() || idx < 1)
        throw fail("bad feature index");
      if (idx <= last) throw fail("feature indices must be ascending");
      const auto val = detail::parse_double(std::string_view(tok).substr(colon + 1));
      if (!val) throw fail("bad feature value");
      last = static_cast<Index>(idx);
      entries.emplace_back(last - 1, *val);
    }
    max_index = std::max(max_index, last);
    classes.push_back(encoder.encode(label));
    sparse.push_back(std::move(entries));
  }
  const Index d = dims.value_or(std::max<Index>(max_index, 1));
  if (max_index > d) throw ParseError("feature index exceeds the declared dimension");
  std::vector<std::vector<double>> rows(sparse.size());
  if (static_cast<double>(sparse.size()) * static_cast<double>(d) > kMaxDenseEntries)
    throw ParseError("dataset too large to materialize densely (n * d > 2e8)");
  for (std::size_t j = 0; j < sparse.size(); ++j) {
    rows[j].assign(static_cast<std::size_t>(d), 0.0);
    for (const auto& [l, v] : sparse[j]) rows[j][static_cast<std::size_t>(l)] = v;
  }
  return detail::assemble(rows, d, classes, encoder, append_bias);
}

/// Writes nonzero entries with 17 significant digits; labels use class_names
/// when present, else the class index.
inline void write_libsvm(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const auto classes = data.class_indices();
  for (Index j = 0; j < data.samples(); ++j) {
    const int c = classes[static_cast<std::size_t>(j)];
    out << (data.class_names.empty() ? std::to_string(c)
                                     : data.class_names[static_cast<std::size_t>(c)]);
    for (Index l = 0; l < data.dims(); ++l) {
      const double v = data.features(j, l);
      if (v != 0.0) out << ' ' << (l + 1) << ':' << detail::format_double(v);
    }
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Synthetic problems

enum class LabelMode { ground_truth_model, uniform_random };

struct SyntheticSpec {
  Index n = 100;
  Index d = 10;
  Index m = 3;
  LabelMode label_mode = LabelMode::ground_truth_model;
  std::uint64_t seed = 0;
  bool append_bias = false;
  /// Overrides the U[0, 1] ground-truth weights (m x d, before any bias).
  std::optional<WeightMatrix> truth;
};

struct SyntheticProblem {
  Dataset data;
  std::optional<WeightMatrix> true_weights;
};

/// Features i.i.d. N(0, 1); labels drawn from softmax(W_true x) with
/// W_true ~ U[0, 1], or uniformly over classes.
inline SyntheticProblem synth_generate(const SyntheticSpec& spec) {
  if (spec.n < 1 || spec.d < 1 || spec.m < 2) throw Error("synthetic spec needs n, d >= 1 and m >= 2");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix x(spec.n, spec.d);
  for (Index j = 0; j < spec.n; ++j)
    for (Index l = 0; l < spec.d; ++l) x(j, l) = normal(rng);

  std::optional<WeightMatrix> truth;
  std::vector<int> classes(static_cast<std::size_t>(spec.n));
  if (spec.label_mode == LabelMode::ground_truth_model) {
    if (spec.truth) {
      require_dims(spec.truth->classes() == spec.m && spec.truth->dims() == spec.d,
                   "synthetic truth weights must be m x d");
      truth = spec.truth;
    } else {
      Matrix w(spec.m, spec.d);
      for (Index i = 0; i < spec.m; ++i)
        for (Index l = 0; l < spec.d; ++l) w(i, l) = unif(rng);
      truth = WeightMatrix(std::move(w));
    }
    for (Index j = 0; j < spec.n; ++j) {
      const Vector p = softmax_posteriors(class_scores(*truth, x.row(j).transpose()));
      const double u = unif(rng);
      double cum = 0.0;
      Index pick = spec.m - 1;
      for (Index i = 0; i < spec.m; ++i) {
        cum += p(i);
        if (u < cum) {
          pick = i;
          break;
        }
      }
      classes[static_cast<std::size_t>(j)] = static_cast<int>(pick);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.m) - 1);
    for (auto& c : classes) c = pick(rng);
  }

  std::vector<std::string> names;
  for (Index i = 0; i < spec.m; ++i) names.push_back(std::to_string(i));
  if (spec.append_bias) x = detail::with_bias_column(x);
  return {Dataset::from_classes(std::move(x), classes, spec.m, std::move(names)), truth};
}

// ---------------------------------------------------------------------------
// Traces and weights

enum class TraceFormat { csv, json };

inline void write_trace(const std::vector<TraceRecord>& trace, const std::string& path,
                        TraceFormat format) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (format == TraceFormat::csv) {
    out << "iter,objective,wall_ms,nnz\n";
    for (const auto& r : trace) {
      out << r.iter << ',' << detail::format_double(r.objective) << ','
          << detail::format_double(r.wall_ms) << ',' << r.nnz << '\n';
    }
  } else {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : trace)
      arr.push_back({{"iter", r.iter}, {"objective", r.objective}, {"wall_ms", r.wall_ms}, {"nnz", r.nnz}});
    out << arr.dump(2) << '\n';
  }
  if (!out) throw Error("write failed for " + path);
}

inline std::vector<TraceRecord> read_trace(const std::string& path, TraceFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<TraceRecord> trace;
  if (format == TraceFormat::json) {
    const auto arr = nlohmann::json::parse(in);
    for (const auto& r : arr)
      trace.push_back({r.at("iter").get<int>(), r.at("objective").get<double>(),
                       r.at("wall_ms").get<double>(), r.at("nnz").get<std::size_t>()});
    return trace;
  }
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "iter,objective,wall_ms,nnz")
    throw ParseError(path + ": missing trace header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_record(line);
    const auto iter = f.size() == 4 ? detail::parse_double(f[0]) : std::nullopt;
    const auto obj = f.size() == 4 ? detail::parse_double(f[1]) : std::nullopt;
    const auto ms = f.size() == 4 ? detail::parse_double(f[2]) : std::nullopt;
    const auto nnz = f.size() == 4 ? detail::parse_double(f[3]) : std::nullopt;
    if (!iter || !obj || !ms || !nnz) throw ParseError(path + ":" + std::to_string(line_no) + ": bad trace row");
    trace.push_back({static_cast<int>(*iter), *obj, *ms, static_cast<std::size_t>(*nnz)});
  }
  return trace;
}

/// {"shape": [m, d], "stacking": "class-major", "classes": [...],
///  "weights": [[w_1], ..., [w_m]], "flat": [...]}
inline nlohmann::json weights_to_json(const WeightMatrix& W, const std::vector<std::string>& class_names) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < W.classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index l = 0; l < W.dims(); ++l) row.push_back(W(i, l));
    rows.push_back(std::move(row));
  }
  const Vector flat = W.flatten();
  return {{"shape", {W.classes(), W.dims()}},
          {"stacking", "class-major"},
          {"classes", class_names},
          {"weights", rows},
          {"flat", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

inline WeightMatrix weights_from_json(const nlohmann::json& j) {
  const auto m = j.at("shape").at(0).get<Index>();
  const auto d = j.at("shape").at(1).get<Index>();
  if (j.value("stacking", "class-major") != "class-major") throw ParseError("unknown weight stacking");
  WeightMatrix W(m, d);
  const auto& rows = j.at("weights");
  require_dims(static_cast<Index>(rows.size()) == m, "weight rows != shape[0]");
  for (Index i = 0; i < m; ++i) {
    require_dims(static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) == d, "weight row length != shape[1]");
    for (Index l = 0; l < d; ++l) W(i, l) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)].get<double>();
  }
  return W;
}

}  // namespace piano
