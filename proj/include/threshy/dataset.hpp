#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include "threshy/digest.hpp"
#include "threshy/error.hpp"
#include "threshy/task.hpp"

namespace threshy {

using LabelIndex = std::size_t;

/// One evaluated instance: the ground truth plus the service's confidence for every
/// vocabulary label. Labels are referenced by their index in Dataset::vocabulary().
struct BenchmarkRecord {
  std::string id;
  std::vector<LabelIndex> truth;  // sorted ascending, no duplicates, non-empty
  std::vector<double> scores;     // one entry per vocabulary label, each in [0, 1]

  [[nodiscard]] bool is_true(LabelIndex label) const {
    return std::binary_search(truth.begin(), truth.end(), label);
  }

  friend bool operator==(const BenchmarkRecord&, const BenchmarkRecord&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
  auto first = std::find_if(s.begin(), s.end(), not_space);
  auto last = std::find_if(s.rbegin(), std::make_reverse_iterator(first), not_space).base();
  return first < last ? std::string_view(&*first, static_cast<std::size_t>(last - first))
                      : std::string_view{};
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool valid_label_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  });
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

}  // namespace detail

/// Validated, immutable benchmark dataset.
class Dataset {
 public:
  /// Validates every invariant; `content_digest` is taken as given (parse_dataset passes the
  /// digest of the raw input, make_dataset the digest of the canonical CSV).
  Dataset(std::vector<BenchmarkRecord> records, std::vector<std::string> vocabulary, TaskKind task,
          std::optional<std::string> positive_label, std::string content_digest)
      : records_(std::move(records)),
        vocabulary_(std::move(vocabulary)),
        task_(task),
        positive_label_(std::move(positive_label)),
        content_digest_(std::move(content_digest)) {
    validate();
  }

  [[nodiscard]] std::span<const BenchmarkRecord> records() const noexcept { return records_; }
  [[nodiscard]] const BenchmarkRecord& record(std::size_t i) const { return records_.at(i); }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] std::span<const std::string> vocabulary() const noexcept { return vocabulary_; }
  [[nodiscard]] std::size_t label_count() const noexcept { return vocabulary_.size(); }
  [[nodiscard]] const std::string& label(LabelIndex i) const { return vocabulary_.at(i); }
  [[nodiscard]] TaskKind task() const noexcept { return task_; }
  [[nodiscard]] const std::optional<std::string>& positive_label() const noexcept {
    return positive_label_;
  }
  [[nodiscard]] const std::string& content_digest() const noexcept { return content_digest_; }

  [[nodiscard]] std::optional<LabelIndex> label_index(std::string_view name) const {
    auto it = std::find(vocabulary_.begin(), vocabulary_.end(), name);
    if (it == vocabulary_.end()) return std::nullopt;
    return static_cast<LabelIndex>(it - vocabulary_.begin());
  }

  /// Index of the positive label (binary datasets only).
  [[nodiscard]] LabelIndex positive_index() const { return positive_index_; }
  [[nodiscard]] LabelIndex negative_index() const { return 1 - positive_index_; }

  /// Number of records whose truth contains `label`.
  [[nodiscard]] std::size_t positives(LabelIndex label) const {
    return static_cast<std::size_t>(std::count_if(
        records_.begin(), records_.end(), [&](const auto& r) { return r.is_true(label); }));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  void validate() {
    if (vocabulary_.size() < 2) {
      throw Error(ErrorCode::validation, "vocabulary needs at least 2 labels, found " +
                                             std::to_string(vocabulary_.size()));
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : vocabulary_) {
      if (!detail::valid_label_name(name)) {
        throw Error(ErrorCode::validation, "invalid label name '" + name + "'");
      }
      if (!seen.insert(name).second) {
        throw Error(ErrorCode::validation, "duplicate label '" + name + "'");
      }
    }
    if (records_.empty()) throw Error(ErrorCode::validation, "dataset has no records");

    if (task_ == TaskKind::binary) {
      if (vocabulary_.size() != 2) {
        throw Error(ErrorCode::validation, "binary task requires exactly 2 labels, found " +
                                               std::to_string(vocabulary_.size()));
      }
      if (!positive_label_) {
        throw Error(ErrorCode::validation, "binary task requires a positive label");
      }
      auto idx = label_index(*positive_label_);
      if (!idx) {
        throw Error(ErrorCode::validation,
                    "positive label '" + *positive_label_ + "' is not in the vocabulary");
      }
      positive_index_ = *idx;
    } else if (positive_label_) {
      throw Error(ErrorCode::validation, "positive label is only meaningful for binary tasks");
    }

    std::unordered_set<std::string> ids;
    for (const auto& r : records_) {
      if (!ids.insert(r.id).second) {
        throw Error(ErrorCode::validation, "duplicate record id '" + r.id + "'");
      }
      if (r.truth.empty()) throw Error(ErrorCode::validation, "record '" + r.id + "' has no truth");
      if (!std::is_sorted(r.truth.begin(), r.truth.end()) ||
          std::adjacent_find(r.truth.begin(), r.truth.end()) != r.truth.end() ||
          r.truth.back() >= vocabulary_.size()) {
        throw Error(ErrorCode::validation, "record '" + r.id + "' has an invalid truth set");
      }
      if (task_ != TaskKind::multilabel && r.truth.size() != 1) {
        throw Error(ErrorCode::validation,
                    "record '" + r.id + "' has " + std::to_string(r.truth.size()) +
                        " truth labels; " + std::string(to_string(task_)) +
                        " tasks need exactly one");
      }
      if (r.scores.size() != vocabulary_.size()) {
        throw Error(ErrorCode::validation, "record '" + r.id + "' score vector has wrong length");
      }
      for (double s : r.scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
          throw Error(ErrorCode::validation, "record '" + r.id + "': score out of range");
        }
      }
    }
  }

  std::vector<BenchmarkRecord> records_;
  std::vector<std::string> vocabulary_;
  TaskKind task_;
  std::optional<std::string> positive_label_;
  std::string content_digest_;
  LabelIndex positive_index_ = 0;
};

/// Parses a benchmark CSV: `[id,]truth,score:<L1>,...,score:<Lk>`.
///
/// Blank lines are skipped. Empty score cells read as 0.0. Records without an `id` column
/// are numbered from 1 in file order. The digest covers the exact input bytes.
inline Dataset parse_dataset(std::string_view csv, TaskKind task,
                             std::optional<std::string> positive_label = std::nullopt) {
  const std::string digest = hex_digest(csv);
  std::string_view text = csv;
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  auto lines = detail::split(text, '\n');
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    while (line_no < lines.size()) {
      auto line = lines[line_no++];
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!detail::trim(line).empty()) return line;
    }
    return std::nullopt;
  };

  auto header_line = next_line();
  if (!header_line) throw ParseError(0, "empty input: missing header row");
  const std::size_t header_no = line_no;

  auto header = detail::split(*header_line, ',');
  std::size_t col = 0;
  bool has_id = false;
  if (detail::trim(header[0]) == "id") {
    has_id = true;
    ++col;
  }
  if (col >= header.size() || detail::trim(header[col]) != "truth") {
    throw ParseError(header_no, "malformed header: expected a 'truth' column" +
                                    std::string(has_id ? " after 'id'" : ""));
  }
  const std::size_t truth_col = col++;
  const std::size_t first_score_col = col;
  std::vector<std::string> vocabulary;
  for (; col < header.size(); ++col) {
    auto cell = detail::trim(header[col]);
    if (!cell.starts_with("score:")) {
      throw ParseError(header_no, "malformed header: unexpected column '" + std::string(cell) +
                                      "' (expected score:<label>)");
    }
    auto name = detail::trim(cell.substr(6));
    if (!detail::valid_label_name(name)) {
      throw ParseError(header_no, "malformed header: invalid label name '" + std::string(name) +
                                      "' (allowed: A-Z a-z 0-9 _ -)");
    }
    if (std::find(vocabulary.begin(), vocabulary.end(), name) != vocabulary.end()) {
      throw ParseError(header_no, "malformed header: duplicate label column 'score:" +
                                      std::string(name) + "'");
    }
    vocabulary.emplace_back(name);
  }
  if (vocabulary.empty()) throw ParseError(header_no, "malformed header: no score:<label> columns");
  if (vocabulary.size() < 2) {
    throw ParseError(header_no, "vocabulary needs at least 2 labels, found 1 ('" +
                                    vocabulary.front() + "')");
  }
  if (task == TaskKind::binary && !positive_label) {
    throw ParseError(0, "binary task requires a positive label");
  }

  std::vector<BenchmarkRecord> records;
  std::unordered_set<std::string> ids;
  while (auto line = next_line()) {
    const std::size_t row_no = line_no;
    auto cells = detail::split(*line, ',');
    if (cells.size() != header.size()) {
      throw ParseError(row_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                   std::to_string(cells.size()));
    }
    BenchmarkRecord rec;
    rec.id = has_id ? std::string(detail::trim(cells[0])) : std::to_string(records.size() + 1);
    if (rec.id.empty()) throw ParseError(row_no, "empty record id");
    if (!ids.insert(rec.id).second) {
      throw ParseError(row_no, "duplicate record id '" + rec.id + "'");
    }

    auto truth_cell = detail::trim(cells[truth_col]);
    if (truth_cell.empty()) throw ParseError(row_no, "empty truth cell");
    std::set<LabelIndex> truth;
    for (auto part : detail::split(truth_cell, ';')) {
      auto name = detail::trim(part);
      if (name.empty()) throw ParseError(row_no, "empty label in truth cell");
      auto it = std::find(vocabulary.begin(), vocabulary.end(), name);
      if (it == vocabulary.end()) {
        throw ParseError(row_no, "truth label '" + std::string(name) + "' has no score column");
      }
      truth.insert(static_cast<LabelIndex>(it - vocabulary.begin()));
    }
    if (task != TaskKind::multilabel && truth.size() != 1) {
      throw ParseError(row_no, std::string(to_string(task)) +
                                   " tasks need exactly one truth label, found " +
                                   std::to_string(truth.size()));
    }
    rec.truth.assign(truth.begin(), truth.end());

    rec.scores.reserve(vocabulary.size());
    for (std::size_t k = 0; k < vocabulary.size(); ++k) {
      auto cell = detail::trim(cells[first_score_col + k]);
      double value = 0.0;
      if (!cell.empty()) {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec == std::errc::result_out_of_range) {
          throw ParseError(row_no, "score out of range for 'score:" + vocabulary[k] + "'");
        }
        if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
          throw ParseError(row_no, "non-numeric score '" + std::string(cell) + "' for 'score:" +
                                       vocabulary[k] + "'");
        }
        if (value < 0.0 || value > 1.0) {
          throw ParseError(row_no, "score out of range: " + std::string(cell) + " for 'score:" +
                                       vocabulary[k] + "' (must be in [0, 1])");
        }
      }
      rec.scores.push_back(value);
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ParseError(0, "no data rows");

  try {
    return Dataset(std::move(records), std::move(vocabulary), task, std::move(positive_label),
                   digest);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(0, e.what());
  }
}

/// Task kind when the caller gives none: binary with a positive label, otherwise multilabel
/// if any record carries several truth labels, else multiclass.
inline TaskKind infer_task(std::string_view csv, const std::optional<std::string>& positive_label) {
  if (positive_label) return TaskKind::binary;
  const auto probe = parse_dataset(csv, TaskKind::multilabel);
  for (const auto& r : probe.records()) {
    if (r.truth.size() > 1) return TaskKind::multilabel;
  }
  return TaskKind::multiclass;
}

/// Canonical CSV: `id,truth,score:...` with truth labels in vocabulary order and scores in
/// shortest round-trip form. parse_dataset(to_csv(d)) reproduces d's records exactly.
inline std::string to_csv(const Dataset& dataset) {
  std::string out = "id,truth";
  for (const auto& label : dataset.vocabulary()) out += ",score:" + label;
  out += '\n';
  for (const auto& r : dataset.records()) {
    out += r.id;
    out += ',';
    for (std::size_t i = 0; i < r.truth.size(); ++i) {
      if (i) out += ';';
      out += dataset.label(r.truth[i]);
    }
    for (double s : r.scores) {
      out += ',';
      out += detail::format_double(s);
    }
    out += '\n';
  }
  return out;
}

/// Builds a dataset from in-memory records; the digest is that of the canonical CSV.
inline Dataset make_dataset(std::vector<BenchmarkRecord> records,
                            std::vector<std::string> vocabulary, TaskKind task,
                            std::optional<std::string> positive_label = std::nullopt) {
  Dataset provisional(std::move(records), std::move(vocabulary), task, std::move(positive_label),
                      std::string{});
  auto digest = hex_digest(to_csv(provisional));
  std::vector<BenchmarkRecord> recs(provisional.records().begin(), provisional.records().end());
  std::vector<std::string> vocab(provisional.vocabulary().begin(), provisional.vocabulary().end());
  return Dataset(std::move(recs), std::move(vocab), task, provisional.positive_label(),
                 std::move(digest));
}

inline constexpr std::size_t kHistogramBins = 20;

struct ScoreHistogram {
  std::array<std::size_t, kHistogramBins> positive{};  // records whose truth holds the label
  std::array<std::size_t, kHistogramBins> negative{};

  friend bool operator==(const ScoreHistogram&, const ScoreHistogram&) = default;
};

struct DatasetSummary {
  std::size_t record_count = 0;
  std::size_t label_count = 0;
  TaskKind task = TaskKind::multilabel;
  std::optional<std::string> positive_label;
  std::string content_digest;
  std::map<std::string, std::size_t> per_label_positive_count;
  std::map<std::string, ScoreHistogram> score_histogram;

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

/// Bin k covers [k/20, (k+1)/20); a score of exactly 1.0 lands in the last bin.
inline std::size_t histogram_bin(double score) {
  auto bin = static_cast<std::size_t>(std::floor(score * static_cast<double>(kHistogramBins)));
  return std::min(bin, kHistogramBins - 1);
}

inline DatasetSummary summarize(const Dataset& dataset) {
  DatasetSummary summary;
  summary.record_count = dataset.size();
  summary.label_count = dataset.label_count();
  summary.task = dataset.task();
  summary.positive_label = dataset.positive_label();
  summary.content_digest = dataset.content_digest();
  for (LabelIndex l = 0; l < dataset.label_count(); ++l) {
    const auto& name = dataset.label(l);
    auto& hist = summary.score_histogram[name];
    std::size_t positives = 0;
    for (const auto& r : dataset.records()) {
      const bool truth = r.is_true(l);
      positives += truth ? 1 : 0;
      (truth ? hist.positive : hist.negative)[histogram_bin(r.scores[l])]++;
    }
    summary.per_label_positive_count[name] = positives;
  }
  return summary;
}

}  // namespace threshy
