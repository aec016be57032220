#pragma once

// Per-video class scores: CSV exchange, clip aggregation, late fusion of
// model ensembles, and top-k accuracy.
//
// CSV layout: header `id,label,c0,c1,...`, one row per video, label -1
// when unknown, scores with 9 significant digits, LF line endings.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nlv/tensor.hpp"

namespace nlv {

class ScoreCsvError : public std::runtime_error {
 public:
  ScoreCsvError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what) {}
};

struct ScoreTable {
  std::vector<std::string> ids;
  std::vector<long> labels;  // -1 = unknown
  Tensor<double> scores;     // (videos, classes)

  std::size_t rows() const { return ids.size(); }
  std::size_t classes() const { return scores.extent(1); }

  void validate() const {
    if (scores.rank() != 2 || scores.extent(0) != ids.size() || labels.size() != ids.size())
      throw std::invalid_argument("score table: ids, labels and score rows disagree");
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& id : ids)
      if (!seen.emplace(id, seen.size()).second)
        throw std::invalid_argument("score table: duplicate id " + id);
    for (long l : labels)
      if (l < -1 || l >= static_cast<long>(classes()))
        throw std::invalid_argument("score table: label out of range");
  }
};

inline std::string format_score(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void write_score_csv(const ScoreTable& table, const std::filesystem::path& path) {
  table.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);  // binary: keep LF on any host
  if (!f) throw ScoreCsvError(path.string(), "cannot open for writing");
  f << "id,label";
  for (std::size_t c = 0; c < table.classes(); ++c) f << ",c" << c;
  f << "\n";
  for (std::size_t i = 0; i < table.rows(); ++i) {
    f << table.ids[i] << "," << table.labels[i];
    for (std::size_t c = 0; c < table.classes(); ++c)
      f << "," << format_score(table.scores.at(i, c));
    f << "\n";
  }
  if (!f) throw ScoreCsvError(path.string(), "write failed");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline ScoreTable read_score_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ScoreCsvError(path.string(), "cannot open");
  std::string line;
  if (!std::getline(f, line)) throw ScoreCsvError(path.string(), "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw ScoreCsvError(path.string(), "header must start with id,label,c0,...");
  const std::size_t classes = header.size() - 2;
  for (std::size_t c = 0; c < classes; ++c)
    if (header[c + 2] != "c" + std::to_string(c))
      throw ScoreCsvError(path.string(), "unexpected score column " + header[c + 2]);

  ScoreTable table;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != classes + 2)
      throw ScoreCsvError(path.string(), "line " + std::to_string(lineno) + ": wrong field count");
    table.ids.push_back(fields[0]);
    try {
      std::size_t used = 0;
      table.labels.push_back(std::stol(fields[1], &used));
      if (used != fields[1].size()) throw std::invalid_argument("label");
      for (std::size_t c = 0; c < classes; ++c) {
        values.push_back(std::stod(fields[c + 2], &used));
        if (used != fields[c + 2].size()) throw std::invalid_argument("score");
      }
    } catch (const std::exception&) {
      throw ScoreCsvError(path.string(), "line " + std::to_string(lineno) + ": bad number");
    }
  }
  table.scores = Tensor<double>(Shape{table.ids.size(), classes}, std::move(values));
  table.validate();
  return table;
}

// Mean of the per-clip softmax distributions.  The result is a probability
// vector regardless of the logit scale of individual clips.
inline Tensor<double> aggregate_clip_scores(const std::vector<Tensor<double>>& clip_logits) {
  if (clip_logits.empty())
    throw std::invalid_argument("aggregate_clip_scores: no clips");
  const std::size_t classes = clip_logits.front().numel();
  Tensor<double> mean(Shape{classes});
  for (const auto& logits : clip_logits) {
    if (logits.rank() != 1 || logits.numel() != classes)
      throw std::invalid_argument("aggregate_clip_scores: clip score shapes disagree");
    double mx = logits[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits[c]);
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(logits[c] - mx);
    for (std::size_t c = 0; c < classes; ++c)
      mean[c] += std::exp(logits[c] - mx) / sum / static_cast<double>(clip_logits.size());
  }
  return mean;
}

inline void check_probability_rows(const ScoreTable& table, const char* who) {
  for (std::size_t i = 0; i < table.rows(); ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < table.classes(); ++c) sum += table.scores.at(i, c);
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument(std::string(who) + ": row for id " + table.ids[i] +
                                  " is not a probability distribution");
  }
}

// Weighted average of probability tables over the same id set.  Row order
// follows the first table; ids may be ordered differently elsewhere.
// Weights are normalised to sum to one.
inline ScoreTable fuse_scores(const std::vector<ScoreTable>& tables,
                              std::vector<double> weights = {}) {
  if (tables.empty()) throw std::invalid_argument("fuse_scores: no tables");
  if (weights.empty()) weights.assign(tables.size(), 1.0);
  if (weights.size() != tables.size())
    throw std::invalid_argument("fuse_scores: one weight per table required");
  double wsum = 0;
  for (double w : weights) {
    if (w < 0 || !std::isfinite(w))
      throw std::invalid_argument("fuse_scores: weights must be non-negative");
    wsum += w;
  }
  if (wsum <= 0) throw std::invalid_argument("fuse_scores: weights sum to zero");
  for (double& w : weights) w /= wsum;

  const ScoreTable& first = tables.front();
  first.validate();
  check_probability_rows(first, "fuse_scores");
  for (std::size_t ti = 1; ti < tables.size(); ++ti) {
    tables[ti].validate();
    check_probability_rows(tables[ti], "fuse_scores");
    if (tables[ti].classes() != first.classes())
      throw std::invalid_argument("fuse_scores: class counts disagree");
    if (tables[ti].rows() != first.rows())
      throw std::invalid_argument("fuse_scores: row counts disagree");
  }

  ScoreTable out;
  out.ids = first.ids;
  out.labels = first.labels;
  out.scores = Tensor<double>(Shape{first.rows(), first.classes()});
  for (std::size_t i = 0; i < first.rows(); ++i)
    for (std::size_t c = 0; c < first.classes(); ++c)
      out.scores.at(i, c) = weights[0] * first.scores.at(i, c);

  for (std::size_t ti = 1; ti < tables.size(); ++ti) {
    const ScoreTable& t = tables[ti];
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < t.rows(); ++i) index.emplace(t.ids[i], i);
    for (std::size_t i = 0; i < first.rows(); ++i) {
      const auto it = index.find(first.ids[i]);
      if (it == index.end())
        throw std::invalid_argument("fuse_scores: id " + first.ids[i] + " missing from table " +
                                    std::to_string(ti));
      const std::size_t j = it->second;
      if (t.labels[j] != -1) {
        if (out.labels[i] == -1)
          out.labels[i] = t.labels[j];
        else if (out.labels[i] != t.labels[j])
          throw std::invalid_argument("fuse_scores: label conflict for id " + first.ids[i]);
      }
      for (std::size_t c = 0; c < first.classes(); ++c)
        out.scores.at(i, c) += weights[ti] * t.scores.at(j, c);
    }
  }
  return out;
}

// Fraction of videos whose true label ranks in the top k.  Ties resolve in
// favour of the lower class index, so the ranking is deterministic.
inline double topk_accuracy(const ScoreTable& table, std::size_t k) {
  table.validate();
  if (k < 1 || k > table.classes())
    throw std::invalid_argument("topk_accuracy: k out of range");
  if (table.rows() == 0) throw std::invalid_argument("topk_accuracy: empty table");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const long label = table.labels[i];
    if (label < 0) throw std::invalid_argument("topk_accuracy: unknown label for id " + table.ids[i]);
    const double own = table.scores.at(i, static_cast<std::size_t>(label));
    std::size_t rank = 0;
    for (std::size_t c = 0; c < table.classes(); ++c) {
      if (static_cast<long>(c) == label) continue;
      const double s = table.scores.at(i, c);
      if (s > own || (s == own && static_cast<long>(c) < label)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(table.rows());
}

}  // namespace nlv
