#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "threshy/costs.hpp"
#include "threshy/dataset.hpp"
#include "threshy/json_io.hpp"
#include "threshy/metrics.hpp"
#include "threshy/profile.hpp"

namespace threshy {

inline constexpr double kDefaultMonitorTolerance = 0.05;

struct MetricDelta {
  double precision = 0.0;  // current - baseline
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const MetricDelta&, const MetricDelta&) = default;
};

struct Violation {
  std::string scope;   // label name, or "aggregate"
  std::string metric;  // "micro_f1", "f1", "total_cost"
  double baseline = 0.0;
  double current = 0.0;
  double relative_drop = 0.0;  // relative degradation (for cost: relative increase)

  friend bool operator==(const Violation&, const Violation&) = default;
};

enum class Verdict { pass, regress };

struct RegressionReport {
  MetricReport baseline_metrics;
  MetricReport current_metrics;
  std::optional<double> baseline_cost;
  std::optional<double> current_cost;
  std::map<std::string, MetricDelta> per_label_deltas;
  std::vector<Violation> violations;
  double tolerance = kDefaultMonitorTolerance;
  std::optional<double> cost_tolerance;
  std::vector<std::string> warnings;
  Verdict verdict = Verdict::pass;

  friend bool operator==(const RegressionReport&, const RegressionReport&) = default;
};

/// Re-applies a profile's thresholds to fresh data and compares against its embedded baseline.
///
/// A violation is recorded for micro-F1 and for the F1 of every label with baseline support,
/// whenever the relative drop (baseline - current) / baseline exceeds `tolerance`. Cost only
/// gates when `cost_tolerance` is given and both costs are known.
inline RegressionReport monitor_compare(const ProfileDocument& profile, const Dataset& dataset,
                                        double tolerance = kDefaultMonitorTolerance,
                                        std::optional<double> cost_tolerance = std::nullopt) {
  if (!(tolerance >= 0.0 && tolerance <= 1.0)) {
    throw Error(ErrorCode::validation, "tolerance must be in [0, 1]");
  }
  if (cost_tolerance && !(*cost_tolerance >= 0.0)) {
    throw Error(ErrorCode::validation, "cost tolerance must be >= 0");
  }
  if (!profile.baseline) {
    throw Error(ErrorCode::validation,
                "profile has no baseline; re-export it with baseline metrics to use it for "
                "monitoring");
  }
  const Baseline& base = *profile.baseline;

  std::set<std::string> profile_labels(base.confusion.labels.begin(), base.confusion.labels.end());
  for (const auto& [label, t] : profile.thresholds) profile_labels.insert(label);
  const bool overlap = std::any_of(profile_labels.begin(), profile_labels.end(),
                                   [&](const auto& l) { return dataset.label_index(l).has_value(); });
  if (!overlap) {
    throw Error(ErrorCode::validation,
                "dataset vocabulary shares no labels with the profile; wrong dataset?");
  }

  const auto current = evaluate(dataset, profile.threshold_profile());

  RegressionReport report;
  report.tolerance = tolerance;
  report.cost_tolerance = cost_tolerance;
  report.baseline_metrics = base.metrics;
  report.current_metrics = current.metrics;
  std::sort(report.current_metrics.per_label.begin(), report.current_metrics.per_label.end(),
            [](const auto& a, const auto& b) { return a.label < b.label; });
  report.baseline_cost = base.total_cost;
  if (profile.costs) report.current_cost = total_cost(current.confusion, *profile.costs);

  for (const auto& label : profile_labels) {
    if (!dataset.label_index(label)) {
      report.warnings.push_back("coverage: profile label '" + label +
                                "' is absent from the dataset and was not checked");
    }
  }

  auto check = [&](const std::string& scope, const std::string& metric, double b, double c) {
    if (b <= 0.0) return;
    const double drop = (b - c) / b;
    if (drop > tolerance) report.violations.push_back({scope, metric, b, c, drop});
  };
  check("aggregate", "micro_f1", base.metrics.micro.f1, current.metrics.micro.f1);

  for (const auto& cur : report.current_metrics.per_label) {
    const auto* b = base.metrics.find(cur.label);
    if (!b) continue;
    report.per_label_deltas[cur.label] = {cur.values.precision - b->values.precision,
                                          cur.values.recall - b->values.recall,
                                          cur.values.f1 - b->values.f1};
    const auto* support = base.confusion.find(cur.label);
    if (support && support->tp + support->mp > 0) {
      check(cur.label, "f1", b->values.f1, cur.values.f1);
    }
  }

  if (cost_tolerance) {
    if (!report.baseline_cost || !report.current_cost) {
      report.warnings.push_back("cost tolerance given but the profile carries no cost baseline");
    } else if (*report.baseline_cost == 0.0) {
      report.warnings.push_back("baseline cost is zero; relative cost change is undefined");
    } else {
      const double increase =
          (*report.current_cost - *report.baseline_cost) / std::fabs(*report.baseline_cost);
      if (increase > *cost_tolerance) {
        report.violations.push_back(
            {"aggregate", "total_cost", *report.baseline_cost, *report.current_cost, increase});
      }
    }
  }

  report.verdict = report.violations.empty() ? Verdict::pass : Verdict::regress;
  return report;
}

inline Json as_json(const RegressionReport& r) {
  Json deltas = Json::object();
  for (const auto& [label, d] : r.per_label_deltas) {
    deltas[label] = {{"precision", d.precision}, {"recall", d.recall}, {"f1", d.f1}};
  }
  Json violations = Json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"scope", v.scope},
                          {"metric", v.metric},
                          {"baseline", v.baseline},
                          {"current", v.current},
                          {"relative_drop", v.relative_drop}});
  }
  auto opt = [](const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); };
  return {
      {"verdict", r.verdict == Verdict::pass ? "pass" : "regress"},
      {"tolerance", r.tolerance},
      {"cost_tolerance", opt(r.cost_tolerance)},
      {"baseline_metrics", as_json(r.baseline_metrics)},
      {"current_metrics", as_json(r.current_metrics)},
      {"baseline_cost", opt(r.baseline_cost)},
      {"current_cost", opt(r.current_cost)},
      {"per_label_deltas", deltas},
      {"violations", violations},
      {"warnings", r.warnings},
  };
}

inline std::string format_report_table(const RegressionReport& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "verdict: %s (tolerance %.3f)\n",
                r.verdict == Verdict::pass ? "PASS" : "REGRESS", r.tolerance);
  out += line;
  std::snprintf(line, sizeof line, "%-20s %10s %10s %10s\n", "label", "base f1", "cur f1", "delta");
  out += line;
  for (const auto& [label, d] : r.per_label_deltas) {
    const auto* b = r.baseline_metrics.find(label);
    const auto* c = r.current_metrics.find(label);
    std::snprintf(line, sizeof line, "%-20s %10.4f %10.4f %+10.4f\n", label.c_str(),
                  b ? b->values.f1 : 0.0, c ? c->values.f1 : 0.0, d.f1);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-20s %10.4f %10.4f %+10.4f\n", "(micro)",
                r.baseline_metrics.micro.f1, r.current_metrics.micro.f1,
                r.current_metrics.micro.f1 - r.baseline_metrics.micro.f1);
  out += line;
  for (const auto& v : r.violations) {
    std::snprintf(line, sizeof line, "violation: %s %s %.4f -> %.4f (%.1f%%)\n", v.scope.c_str(),
                  v.metric.c_str(), v.baseline, v.current, 100.0 * v.relative_drop);
    out += line;
  }
  for (const auto& w : r.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace threshy
