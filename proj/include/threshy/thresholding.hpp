#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "threshy/dataset.hpp"
#include "threshy/error.hpp"
#include "threshy/task.hpp"

namespace threshy {

/// Per-label decision thresholds. Labels missing from `thresholds` use `default_threshold`.
struct ThresholdProfile {
  std::map<std::string, double> thresholds;
  double default_threshold = 0.5;
  TaskKind task = TaskKind::multilabel;
  std::optional<std::string> positive_label;

  static ThresholdProfile uniform(const Dataset& dataset, double threshold) {
    return ThresholdProfile{{}, threshold, dataset.task(), dataset.positive_label()};
  }

  void validate() const {
    auto check = [](double t, const std::string& what) {
      if (!(t >= 0.0 && t <= 1.0)) {
        throw Error(ErrorCode::validation,
                    "threshold out of range for " + what + ": " + detail::format_double(t) +
                        " (must be in [0, 1])");
      }
    };
    check(default_threshold, "default");
    for (const auto& [label, t] : thresholds) check(t, "'" + label + "'");
  }

  friend bool operator==(const ThresholdProfile&, const ThresholdProfile&) = default;
};

/// A profile bound to one dataset: one threshold per vocabulary label.
struct ResolvedThresholds {
  std::vector<double> values;
  std::vector<std::string> warnings;
};

inline ResolvedThresholds resolve(const ThresholdProfile& profile, const Dataset& dataset) {
  profile.validate();
  if (profile.task != dataset.task()) {
    throw Error(ErrorCode::task_mismatch, "profile task '" + std::string(to_string(profile.task)) +
                                              "' does not match dataset task '" +
                                              std::string(to_string(dataset.task())) + "'");
  }
  if (dataset.task() == TaskKind::binary && profile.positive_label != dataset.positive_label()) {
    throw Error(ErrorCode::task_mismatch,
                "profile positive label '" + profile.positive_label.value_or("<none>") +
                    "' does not match dataset positive label '" +
                    dataset.positive_label().value_or("<none>") + "'");
  }
  ResolvedThresholds out;
  out.values.assign(dataset.label_count(), profile.default_threshold);
  for (const auto& [label, t] : profile.thresholds) {
    if (auto idx = dataset.label_index(label)) {
      out.values[*idx] = t;
    } else {
      out.warnings.push_back("profile label '" + label + "' is not in the dataset; ignored");
    }
  }
  return out;
}

using LabelSet = std::vector<LabelIndex>;  // sorted ascending

/// Emitted label sets, aligned by index with the dataset's records.
struct DecisionSet {
  std::vector<LabelSet> emitted;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t size() const noexcept { return emitted.size(); }
  [[nodiscard]] std::size_t abstentions() const {
    return static_cast<std::size_t>(
        std::count_if(emitted.begin(), emitted.end(), [](const auto& s) { return s.empty(); }));
  }
};

namespace detail {

/// Vocabulary indices ordered by label name, for lexicographic argmax tie-breaks.
inline std::vector<LabelIndex> name_order(const Dataset& dataset) {
  std::vector<LabelIndex> order(dataset.label_count());
  std::iota(order.begin(), order.end(), LabelIndex{0});
  std::sort(order.begin(), order.end(),
            [&](LabelIndex a, LabelIndex b) { return dataset.label(a) < dataset.label(b); });
  return order;
}

inline LabelIndex argmax_label(const BenchmarkRecord& record, std::span<const LabelIndex> order) {
  LabelIndex best = order.front();
  for (LabelIndex l : order) {
    if (record.scores[l] > record.scores[best]) best = l;
  }
  return best;
}

}  // namespace detail

/// Applies one threshold per vocabulary label (inclusive comparison, score >= threshold).
///
/// multilabel: every label at or above its threshold.
/// multiclass: the top-scoring label (ties to the smallest name) if it clears its threshold,
///             otherwise nothing (abstain).
/// binary:     the positive label if it clears its threshold, otherwise the negative one.
inline std::vector<LabelSet> decide_labels(const Dataset& dataset,
                                           std::span<const double> thresholds) {
  if (thresholds.size() != dataset.label_count()) {
    throw Error(ErrorCode::validation, "threshold vector length does not match vocabulary");
  }
  std::vector<LabelSet> emitted(dataset.size());
  const auto records = dataset.records();
  switch (dataset.task()) {
    case TaskKind::multilabel:
      for (std::size_t i = 0; i < records.size(); ++i) {
        for (LabelIndex l = 0; l < dataset.label_count(); ++l) {
          if (records[i].scores[l] >= thresholds[l]) emitted[i].push_back(l);
        }
      }
      break;
    case TaskKind::multiclass: {
      const auto order = detail::name_order(dataset);
      for (std::size_t i = 0; i < records.size(); ++i) {
        const LabelIndex top = detail::argmax_label(records[i], order);
        if (records[i].scores[top] >= thresholds[top]) emitted[i].push_back(top);
      }
      break;
    }
    case TaskKind::binary: {
      const LabelIndex pos = dataset.positive_index();
      for (std::size_t i = 0; i < records.size(); ++i) {
        emitted[i].push_back(records[i].scores[pos] >= thresholds[pos] ? pos
                                                                       : dataset.negative_index());
      }
      break;
    }
  }
  return emitted;
}

inline DecisionSet decide(const Dataset& dataset, const ThresholdProfile& profile) {
  auto resolved = resolve(profile, dataset);
  return DecisionSet{decide_labels(dataset, resolved.values), std::move(resolved.warnings)};
}

}  // namespace threshy
