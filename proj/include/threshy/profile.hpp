#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <optional>
#include <numeric>
#include <regex>
#include <set>
#include <string>

#include "threshy/costs.hpp"
#include "threshy/json_io.hpp"
#include "threshy/metrics.hpp"
#include "threshy/optimizer.hpp"
#include "threshy/thresholding.hpp"
#include "threshy/version.hpp"

namespace threshy {

inline constexpr int kProfileFormatVersion = 1;
inline constexpr const char* kProfileExtension = ".threshy.json";

/// Metrics captured when a profile is exported; the monitor compares against these.
struct Baseline {
  ConfusionSummary confusion;  // labels sorted by name
  MetricReport metrics;        // labels sorted by name
  std::optional<double> total_cost;

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

struct ProfileProvenance {
  std::string dataset_digest;
  std::optional<OptimizerSettings> optimizer;  // absent = thresholds set by hand
  std::string engine_version = kEngineVersion;
  std::string created_at;  // RFC-3339, UTC

  friend bool operator==(const ProfileProvenance&, const ProfileProvenance&) = default;
};

/// The exportable threshold configuration (`*.threshy.json`).
struct ProfileDocument {
  int format_version = kProfileFormatVersion;
  TaskKind task = TaskKind::multilabel;
  std::optional<std::string> positive_label;
  std::map<std::string, double> thresholds;
  double default_threshold = 0.5;
  std::optional<CostSchedule> costs;
  std::optional<Baseline> baseline;
  ProfileProvenance provenance;
  Json extra = Json::object();  // unknown top-level fields, re-emitted verbatim

  [[nodiscard]] ThresholdProfile threshold_profile() const {
    return {thresholds, default_threshold, task, positive_label};
  }

  friend bool operator==(const ProfileDocument&, const ProfileDocument&) = default;
};

/// Current UTC time, second precision, e.g. 2020-11-08T09:30:00Z.
inline std::string utc_now_rfc3339() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline bool is_rfc3339(const std::string& text) {
  static const std::regex pattern(
      R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$)");
  return std::regex_match(text, pattern);
}

namespace detail {

template <typename T>
void sort_by_label(std::vector<std::string>& labels, std::vector<T>& values) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  std::vector<std::string> l;
  std::vector<T> v;
  for (auto i : order) {
    l.push_back(labels[i]);
    v.push_back(values[i]);
  }
  labels = std::move(l);
  values = std::move(v);
}

}  // namespace detail

/// Evaluates `profile` on `dataset` and stores the result in canonical (label-sorted) form.
inline Baseline make_baseline(const Dataset& dataset, const ThresholdProfile& profile,
                              const CostSchedule* costs) {
  auto eval = evaluate(dataset, profile);
  Baseline b;
  if (costs) b.total_cost = total_cost(eval.confusion, *costs);
  b.confusion = std::move(eval.confusion);
  detail::sort_by_label(b.confusion.labels, b.confusion.counts);
  b.metrics = std::move(eval.metrics);
  std::sort(b.metrics.per_label.begin(), b.metrics.per_label.end(),
            [](const auto& a, const auto& c) { return a.label < c.label; });
  return b;
}

/// Builds a complete document for `profile` with its baseline measured on `dataset`.
inline ProfileDocument make_profile_document(const Dataset& dataset, const ThresholdProfile& profile,
                                             std::optional<CostSchedule> costs,
                                             std::optional<OptimizerSettings> optimizer,
                                             std::string created_at) {
  ProfileDocument doc;
  doc.task = profile.task;
  doc.positive_label = profile.positive_label;
  doc.thresholds = profile.thresholds;
  doc.default_threshold = profile.default_threshold;
  doc.baseline = make_baseline(dataset, profile, costs ? &*costs : nullptr);
  doc.costs = std::move(costs);
  doc.provenance.dataset_digest = dataset.content_digest();
  doc.provenance.optimizer = std::move(optimizer);
  doc.provenance.created_at = std::move(created_at);
  return doc;
}

/// Document for one solution of an optimization run.
inline ProfileDocument profile_from_result(const Dataset& dataset, const OptimizationResult& result,
                                           std::size_t solution_index,
                                           std::optional<CostSchedule> costs,
                                           std::string created_at) {
  if (solution_index >= result.front.size()) {
    throw Error(ErrorCode::validation, "solution index " + std::to_string(solution_index) +
                                           " is out of range (front has " +
                                           std::to_string(result.front.size()) + " members)");
  }
  return make_profile_document(dataset,
                               profile_from_genes(dataset, result.front[solution_index].thresholds),
                               std::move(costs), result.provenance.settings, std::move(created_at));
}

inline Json as_json(const Baseline& b) {
  return {{"confusion", as_json(b.confusion)},
          {"metrics", as_json(b.metrics)},
          {"total_cost", b.total_cost ? Json(*b.total_cost) : Json(nullptr)}};
}

inline Json as_json(const ProfileDocument& d) {
  Json out = d.extra.is_object() ? d.extra : Json::object();
  out["format_version"] = d.format_version;
  out["task"] = std::string(to_string(d.task));
  out["positive_label"] = d.positive_label ? Json(*d.positive_label) : Json(nullptr);
  out["thresholds"] = d.thresholds;
  out["default_threshold"] = d.default_threshold;
  out["costs"] = d.costs ? as_json(*d.costs) : Json(nullptr);
  out["baseline"] = d.baseline ? as_json(*d.baseline) : Json(nullptr);
  Json prov = {{"dataset_digest", d.provenance.dataset_digest},
               {"engine_version", d.provenance.engine_version},
               {"created_at", d.provenance.created_at}};
  if (d.provenance.optimizer) {
    prov["optimizer"] = as_json(*d.provenance.optimizer);
    prov["rng_seed"] = d.provenance.optimizer->rng_seed;
  } else {
    prov["optimizer"] = "manual";
  }
  out["provenance"] = prov;
  return out;
}

/// Canonical bytes: sorted keys, shortest round-trip numbers, newline-terminated.
inline std::string export_profile(const ProfileDocument& doc) { return dump_canonical(as_json(doc)); }

inline ProfileDocument profile_from_json(const Json& j) {
  constexpr const char* ctx = "profile";
  if (!j.is_object()) throw Error(ErrorCode::parse, "profile must be a JSON object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw Error(ErrorCode::parse, "profile: missing integer 'format_version'");
  }
  ProfileDocument d;
  d.format_version = j["format_version"].get<int>();
  if (d.format_version != kProfileFormatVersion) {
    throw Error(ErrorCode::version, "unsupported profile format_version " +
                                        std::to_string(d.format_version) +
                                        " (supported versions: " +
                                        std::to_string(kProfileFormatVersion) + ")");
  }
  try {
    d.task = parse_task(detail::require<std::string>(j, "task", ctx));
  } catch (const Error& e) {
    throw Error(ErrorCode::parse, std::string("profile: ") + e.what());
  }
  if (j.contains("positive_label") && !j["positive_label"].is_null()) {
    d.positive_label = detail::require<std::string>(j, "positive_label", ctx);
  }
  const auto& thresholds = detail::require<Json>(j, "thresholds", ctx);
  if (!thresholds.is_object()) throw Error(ErrorCode::parse, "profile: 'thresholds' must be an object");
  for (const auto& [label, value] : thresholds.items()) {
    if (!value.is_number()) {
      throw Error(ErrorCode::parse, "profile: threshold for '" + label + "' must be a number");
    }
    d.thresholds[label] = value.get<double>();
  }
  d.default_threshold = detail::require_number(j, "default_threshold", ctx);
  d.threshold_profile().validate();
  if (d.task == TaskKind::binary && !d.positive_label) {
    throw Error(ErrorCode::validation, "profile: binary task requires 'positive_label'");
  }

  if (j.contains("costs") && !j["costs"].is_null()) d.costs = cost_schedule_from_json(j["costs"]);
  if (j.contains("baseline") && !j["baseline"].is_null()) {
    const auto& b = j["baseline"];
    Baseline base;
    base.confusion = confusion_from_json(detail::require<Json>(b, "confusion", ctx));
    base.metrics = metrics_from_json(detail::require<Json>(b, "metrics", ctx));
    if (b.contains("total_cost") && !b["total_cost"].is_null()) {
      base.total_cost = detail::require_number(b, "total_cost", ctx);
    }
    d.baseline = std::move(base);
  }

  const auto& prov = detail::require<Json>(j, "provenance", ctx);
  d.provenance.dataset_digest = detail::require<std::string>(prov, "dataset_digest", ctx);
  d.provenance.engine_version = detail::require<std::string>(prov, "engine_version", ctx);
  d.provenance.created_at = detail::require<std::string>(prov, "created_at", ctx);
  if (!is_rfc3339(d.provenance.created_at)) {
    throw Error(ErrorCode::parse, "profile: created_at '" + d.provenance.created_at +
                                      "' is not an RFC-3339 timestamp");
  }
  if (prov.contains("optimizer") && prov["optimizer"].is_object()) {
    d.provenance.optimizer = settings_from_json(prov["optimizer"]);
  } else if (!prov.contains("optimizer") || prov["optimizer"] != "manual") {
    throw Error(ErrorCode::parse, "profile: provenance.optimizer must be settings or \"manual\"");
  }

  static const std::set<std::string> known = {"format_version", "task",     "positive_label",
                                              "thresholds",     "default_threshold", "costs",
                                              "baseline",       "provenance"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) d.extra[key] = value;
  }
  return d;
}

inline ProfileDocument parse_profile(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("profile is not valid JSON: ") + e.what());
  }
  return profile_from_json(j);
}

}  // namespace threshy
