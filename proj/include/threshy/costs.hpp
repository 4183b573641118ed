#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "threshy/dataset.hpp"
#include "threshy/error.hpp"
#include "threshy/metrics.hpp"

namespace threshy {

/// Monetary weight of each construct for one label. `correct` may be negative (a reward).
struct CostWeights {
  double correct = 0.0;
  double false_positive = 1.0;
  double missed_positive = 1.0;

  friend bool operator==(const CostWeights&, const CostWeights&) = default;
};

struct CostSchedule {
  std::map<std::string, CostWeights> per_label;  // unlisted labels weigh (0, 1, 1)
  std::string currency_tag;

  [[nodiscard]] CostWeights weights_for(const std::string& label) const {
    auto it = per_label.find(label);
    return it == per_label.end() ? CostWeights{} : it->second;
  }

  void validate() const {
    for (const auto& [label, w] : per_label) {
      if (!(w.false_positive >= 0.0) || !(w.missed_positive >= 0.0)) {
        throw Error(ErrorCode::validation,
                    "cost schedule for '" + label + "': false-positive and missed-positive "
                    "costs must be non-negative");
      }
      if (!std::isfinite(w.correct) || !std::isfinite(w.false_positive) ||
          !std::isfinite(w.missed_positive)) {
        throw Error(ErrorCode::validation, "cost schedule for '" + label + "': costs must be finite");
      }
    }
  }

  /// Warnings for schedule labels the dataset does not know.
  [[nodiscard]] std::vector<std::string> unknown_labels(const Dataset& dataset) const {
    std::vector<std::string> warnings;
    for (const auto& [label, w] : per_label) {
      if (!dataset.label_index(label)) {
        warnings.push_back("cost schedule label '" + label + "' is not in the dataset; ignored");
      }
    }
    return warnings;
  }

  friend bool operator==(const CostSchedule&, const CostSchedule&) = default;
};

/// Sum over labels of tp*correct + fp*false_positive + mp*missed_positive.
inline double total_cost(const ConfusionSummary& summary, const CostSchedule& schedule) {
  double cost = 0.0;
  for (std::size_t i = 0; i < summary.counts.size(); ++i) {
    const auto w = schedule.weights_for(summary.labels[i]);
    const auto& c = summary.counts[i];
    cost += static_cast<double>(c.tp) * w.correct + static_cast<double>(c.fp) * w.false_positive +
            static_cast<double>(c.mp) * w.missed_positive;
  }
  return cost;
}

/// Digest of a canonical text rendering (labels sorted, shortest round-trip numbers).
inline std::string cost_schedule_digest(const CostSchedule& schedule) {
  std::string text = schedule.currency_tag + '\n';
  for (const auto& [label, w] : schedule.per_label) {
    text += label + ':' + detail::format_double(w.correct) + ',' +
            detail::format_double(w.false_positive) + ',' +
            detail::format_double(w.missed_positive) + '\n';
  }
  return hex_digest(text);
}

}  // namespace threshy
