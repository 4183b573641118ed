#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "threshy/dataset.hpp"
#include "threshy/thresholding.hpp"

namespace threshy {

/// The three constructs kept per label. True negatives are deliberately not tracked.
struct ConstructCounts {
  std::size_t tp = 0;  // emitted and true
  std::size_t fp = 0;  // emitted, not true
  std::size_t mp = 0;  // true, not emitted (missed positive)

  ConstructCounts& operator+=(const ConstructCounts& o) {
    tp += o.tp;
    fp += o.fp;
    mp += o.mp;
    return *this;
  }
  friend bool operator==(const ConstructCounts&, const ConstructCounts&) = default;
};

/// Per-label three-construct summary, in vocabulary order.
struct ConfusionSummary {
  std::vector<std::string> labels;
  std::vector<ConstructCounts> counts;
  std::size_t n_labels = 0;   // largest truth-set size seen (1 unless multilabel)
  std::size_t m_classes = 0;  // vocabulary size

  [[nodiscard]] ConstructCounts totals() const {
    ConstructCounts sum;
    for (const auto& c : counts) sum += c;
    return sum;
  }

  [[nodiscard]] const ConstructCounts* find(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? nullptr : &counts[static_cast<std::size_t>(it - labels.begin())];
  }

  friend bool operator==(const ConfusionSummary&, const ConfusionSummary&) = default;
};

inline ConfusionSummary confusion(const Dataset& dataset, std::span<const LabelSet> emitted) {
  if (emitted.size() != dataset.size()) {
    throw Error(ErrorCode::validation,
                "decision set has " + std::to_string(emitted.size()) + " entries but dataset has " +
                    std::to_string(dataset.size()) + " records");
  }
  ConfusionSummary summary;
  summary.labels.assign(dataset.vocabulary().begin(), dataset.vocabulary().end());
  summary.counts.resize(dataset.label_count());
  summary.m_classes = dataset.label_count();

  const auto records = dataset.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& truth = records[i].truth;
    const auto& out = emitted[i];
    summary.n_labels = std::max(summary.n_labels, truth.size());
    // Both sets are sorted; walk them together.
    std::size_t a = 0;
    std::size_t b = 0;
    while (a < truth.size() || b < out.size()) {
      if (b == out.size() || (a < truth.size() && truth[a] < out[b])) {
        summary.counts[truth[a++]].mp++;
      } else if (a == truth.size() || out[b] < truth[a]) {
        summary.counts[out[b++]].fp++;
      } else {
        summary.counts[truth[a]].tp++;
        ++a;
        ++b;
      }
    }
  }
  return summary;
}

inline ConfusionSummary confusion(const Dataset& dataset, const DecisionSet& decisions) {
  return confusion(dataset, std::span<const LabelSet>(decisions.emitted));
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const PrecisionRecall&, const PrecisionRecall&) = default;
};

/// Zero-denominator values are reported as 0.0 and flagged as degenerate.
struct LabelMetrics {
  std::string label;
  PrecisionRecall values;
  bool precision_degenerate = false;  // nothing emitted
  bool recall_degenerate = false;     // no positives

  friend bool operator==(const LabelMetrics&, const LabelMetrics&) = default;
};

struct MetricReport {
  std::vector<LabelMetrics> per_label;  // vocabulary order
  PrecisionRecall micro;
  PrecisionRecall macro;
  std::optional<std::size_t> abstain_count;  // multiclass only

  [[nodiscard]] const LabelMetrics* find(const std::string& label) const {
    auto it = std::find_if(per_label.begin(), per_label.end(),
                           [&](const auto& m) { return m.label == label; });
    return it == per_label.end() ? nullptr : &*it;
  }

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// 2tp / (2tp + fp + mp): the harmonic mean of precision and recall, written on counts so
// that f1 == 1 exactly when fp == mp == 0 and tp > 0.
inline double f1_score(const ConstructCounts& c) { return ratio(2 * c.tp, 2 * c.tp + c.fp + c.mp); }

inline PrecisionRecall from_counts(const ConstructCounts& c) {
  return {ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.mp), f1_score(c)};
}

}  // namespace detail

inline MetricReport metrics_from_confusion(const ConfusionSummary& summary,
                                           std::optional<std::size_t> abstain_count = {}) {
  MetricReport report;
  report.abstain_count = abstain_count;
  PrecisionRecall sum;
  for (std::size_t i = 0; i < summary.counts.size(); ++i) {
    const auto& c = summary.counts[i];
    LabelMetrics m{summary.labels[i], detail::from_counts(c), c.tp + c.fp == 0, c.tp + c.mp == 0};
    sum.precision += m.values.precision;
    sum.recall += m.values.recall;
    sum.f1 += m.values.f1;
    report.per_label.push_back(std::move(m));
  }
  report.micro = detail::from_counts(summary.totals());
  if (!summary.counts.empty()) {
    const auto n = static_cast<double>(summary.counts.size());
    report.macro = {sum.precision / n, sum.recall / n, sum.f1 / n};
  }
  return report;
}

/// decide + confusion + metrics in one call; the abstain count is filled for multiclass.
struct Evaluation {
  ConfusionSummary confusion;
  MetricReport metrics;
  std::vector<std::string> warnings;
};

inline Evaluation evaluate(const Dataset& dataset, const ThresholdProfile& profile) {
  auto decisions = decide(dataset, profile);
  Evaluation out;
  out.confusion = confusion(dataset, decisions);
  std::optional<std::size_t> abstained;
  if (dataset.task() == TaskKind::multiclass) abstained = decisions.abstentions();
  out.metrics = metrics_from_confusion(out.confusion, abstained);
  out.warnings = std::move(decisions.warnings);
  return out;
}

}  // namespace threshy
