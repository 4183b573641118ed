#pragma once

// JSON renderings shared by the CLI and the HTTP service, so both emit identical bytes.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "threshy/costs.hpp"
#include "threshy/dataset.hpp"
#include "threshy/metrics.hpp"
#include "threshy/optimizer.hpp"

namespace threshy {

using Json = nlohmann::json;

/// Canonical text form used for every machine-readable output: 2-space indent, sorted keys,
/// trailing newline.
inline std::string dump_canonical(const Json& value) { return value.dump(2) + "\n"; }

namespace detail {

inline Json json_number(double value) {
  // Integral values (counts, objective components) print without a fraction.
  if (std::isfinite(value) && std::trunc(value) == value && std::fabs(value) < 9.0e15) {
    return static_cast<std::int64_t>(value);
  }
  return value;
}

template <typename T>
T require(const Json& obj, const char* key, const char* context) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::parse, std::string(context) + ": missing '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::parse, std::string(context) + ": '" + key + "' has the wrong type");
  }
}

inline double require_number(const Json& obj, const char* key, const char* context) {
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_number()) {
    throw Error(ErrorCode::parse, std::string(context) + ": '" + key + "' must be a number");
  }
  return obj.at(key).get<double>();
}

inline double number_or(const Json& obj, const char* key, double fallback, const char* context) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  return require_number(obj, key, context);
}

}  // namespace detail

// ---- dataset ---------------------------------------------------------------------------

inline Json as_json(const DatasetSummary& s) {
  Json hist = Json::object();
  for (const auto& [label, h] : s.score_histogram) {
    hist[label] = {{"positive", h.positive}, {"negative", h.negative}};
  }
  return {
      {"record_count", s.record_count},
      {"label_count", s.label_count},
      {"task", std::string(to_string(s.task))},
      {"positive_label", s.positive_label ? Json(*s.positive_label) : Json(nullptr)},
      {"content_digest", s.content_digest},
      {"per_label_positive_count", s.per_label_positive_count},
      {"score_histogram", hist},
      {"histogram_bins", kHistogramBins},
  };
}

inline DatasetSummary summary_from_json(const Json& j) {
  constexpr const char* ctx = "dataset summary";
  DatasetSummary s;
  s.record_count = detail::require<std::size_t>(j, "record_count", ctx);
  s.label_count = detail::require<std::size_t>(j, "label_count", ctx);
  s.task = parse_task(detail::require<std::string>(j, "task", ctx));
  if (j.contains("positive_label") && !j["positive_label"].is_null()) {
    s.positive_label = j["positive_label"].get<std::string>();
  }
  s.content_digest = detail::require<std::string>(j, "content_digest", ctx);
  s.per_label_positive_count =
      detail::require<std::map<std::string, std::size_t>>(j, "per_label_positive_count", ctx);
  for (const Json obj = detail::require<Json>(j, "score_histogram", ctx); const auto& [label, h] : obj.items()) {
    ScoreHistogram hist;
    hist.positive = detail::require<std::array<std::size_t, kHistogramBins>>(h, "positive", ctx);
    hist.negative = detail::require<std::array<std::size_t, kHistogramBins>>(h, "negative", ctx);
    s.score_histogram[label] = hist;
  }
  return s;
}

// ---- metrics ---------------------------------------------------------------------------

/// Exactly three numbers per label: {"tp", "fp", "mp"}.
inline Json as_json(const ConfusionSummary& s) {
  Json per_label = Json::object();
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    per_label[s.labels[i]] = {{"tp", s.counts[i].tp}, {"fp", s.counts[i].fp}, {"mp", s.counts[i].mp}};
  }
  return {{"per_label", per_label}, {"n_labels", s.n_labels}, {"m_classes", s.m_classes}};
}

/// Labels come back sorted by name.
inline ConfusionSummary confusion_from_json(const Json& j) {
  constexpr const char* ctx = "confusion summary";
  ConfusionSummary s;
  s.n_labels = detail::require<std::size_t>(j, "n_labels", ctx);
  s.m_classes = detail::require<std::size_t>(j, "m_classes", ctx);
  for (const Json obj = detail::require<Json>(j, "per_label", ctx); const auto& [label, c] : obj.items()) {
    s.labels.push_back(label);
    s.counts.push_back({detail::require<std::size_t>(c, "tp", ctx),
                        detail::require<std::size_t>(c, "fp", ctx),
                        detail::require<std::size_t>(c, "mp", ctx)});
  }
  return s;
}

inline Json as_json(const PrecisionRecall& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

inline PrecisionRecall precision_recall_from_json(const Json& j, const char* ctx) {
  return {detail::require_number(j, "precision", ctx), detail::require_number(j, "recall", ctx),
          detail::require_number(j, "f1", ctx)};
}

inline Json as_json(const MetricReport& r) {
  Json per_label = Json::object();
  for (const auto& m : r.per_label) {
    Json entry = as_json(m.values);
    Json degenerate = Json::array();
    if (m.precision_degenerate) degenerate.push_back("precision");
    if (m.recall_degenerate) degenerate.push_back("recall");
    entry["degenerate"] = degenerate;
    per_label[m.label] = entry;
  }
  Json out = {{"per_label", per_label}, {"micro", as_json(r.micro)}, {"macro", as_json(r.macro)}};
  out["abstain_count"] = r.abstain_count ? Json(*r.abstain_count) : Json(nullptr);
  return out;
}

inline MetricReport metrics_from_json(const Json& j) {
  constexpr const char* ctx = "metric report";
  MetricReport r;
  for (const Json obj = detail::require<Json>(j, "per_label", ctx); const auto& [label, m] : obj.items()) {
    LabelMetrics lm{label, precision_recall_from_json(m, ctx), false, false};
    if (m.contains("degenerate")) {
      for (const auto& flag : m["degenerate"]) {
        if (flag == "precision") lm.precision_degenerate = true;
        if (flag == "recall") lm.recall_degenerate = true;
      }
    }
    r.per_label.push_back(std::move(lm));
  }
  r.micro = precision_recall_from_json(detail::require<Json>(j, "micro", ctx), ctx);
  r.macro = precision_recall_from_json(detail::require<Json>(j, "macro", ctx), ctx);
  if (j.contains("abstain_count") && !j["abstain_count"].is_null()) {
    r.abstain_count = j["abstain_count"].get<std::size_t>();
  }
  return r;
}

/// Evaluation response body: confusion, metrics, optional cost and warnings.
inline Json as_json(const Evaluation& e, const CostSchedule* schedule = nullptr) {
  Json out = {{"confusion", as_json(e.confusion)}, {"metrics", as_json(e.metrics)}};
  out["total_cost"] = schedule ? Json(total_cost(e.confusion, *schedule)) : Json(nullptr);
  out["warnings"] = e.warnings;
  return out;
}

// ---- costs -----------------------------------------------------------------------------

inline Json as_json(const CostSchedule& s) {
  Json labels = Json::object();
  for (const auto& [label, w] : s.per_label) {
    labels[label] = {{"correct", w.correct},
                     {"false_positive", w.false_positive},
                     {"missed_positive", w.missed_positive}};
  }
  return {{"currency", s.currency_tag}, {"labels", labels}};
}

/// Missing weight fields take the defaults (0, 1, 1).
inline CostSchedule cost_schedule_from_json(const Json& j) {
  constexpr const char* ctx = "cost schedule";
  if (!j.is_object()) throw Error(ErrorCode::parse, "cost schedule must be a JSON object");
  CostSchedule s;
  if (j.contains("currency") && !j["currency"].is_null()) {
    s.currency_tag = detail::require<std::string>(j, "currency", ctx);
  }
  if (j.contains("labels")) {
    if (!j["labels"].is_object()) throw Error(ErrorCode::parse, "cost schedule: 'labels' must be an object");
    for (const auto& [label, w] : j["labels"].items()) {
      if (!w.is_object()) {
        throw Error(ErrorCode::parse, "cost schedule: entry for '" + label + "' must be an object");
      }
      const CostWeights defaults;
      s.per_label[label] = {detail::number_or(w, "correct", defaults.correct, ctx),
                            detail::number_or(w, "false_positive", defaults.false_positive, ctx),
                            detail::number_or(w, "missed_positive", defaults.missed_positive, ctx)};
    }
  }
  s.validate();
  return s;
}

inline CostSchedule parse_cost_schedule(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("cost schedule is not valid JSON: ") + e.what());
  }
  return cost_schedule_from_json(j);
}

// ---- optimizer -------------------------------------------------------------------------

inline Json as_json(const OptimizerSettings& s) {
  return {
      {"population_size", s.population_size},
      {"generations", s.generations},
      {"crossover_probability", s.crossover_probability},
      {"crossover_distribution_index", s.crossover_distribution_index},
      {"mutation_probability_per_gene",
       s.mutation_probability_per_gene ? Json(*s.mutation_probability_per_gene) : Json(nullptr)},
      {"mutation_distribution_index", s.mutation_distribution_index},
      {"rng_seed", s.rng_seed},
  };
}

/// Every field is optional; absent fields keep their defaults.
inline OptimizerSettings settings_from_json(const Json& j) {
  constexpr const char* ctx = "optimizer settings";
  OptimizerSettings s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw Error(ErrorCode::parse, "optimizer settings must be a JSON object");
  auto get_size = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0) {
      throw Error(ErrorCode::validation, std::string(ctx) + ": '" + key +
                                             "' must be a non-negative integer");
    }
    field = j[key].get<std::size_t>();
  };
  get_size("population_size", s.population_size);
  get_size("generations", s.generations);
  s.crossover_probability = detail::number_or(j, "crossover_probability", s.crossover_probability, ctx);
  s.crossover_distribution_index =
      detail::number_or(j, "crossover_distribution_index", s.crossover_distribution_index, ctx);
  if (j.contains("mutation_probability_per_gene") && !j["mutation_probability_per_gene"].is_null()) {
    s.mutation_probability_per_gene = detail::require_number(j, "mutation_probability_per_gene", ctx);
  }
  s.mutation_distribution_index =
      detail::number_or(j, "mutation_distribution_index", s.mutation_distribution_index, ctx);
  if (j.contains("rng_seed")) {
    if (!j["rng_seed"].is_number_unsigned() && !(j["rng_seed"].is_number_integer() &&
                                                 j["rng_seed"].get<std::int64_t>() >= 0)) {
      throw Error(ErrorCode::validation, "optimizer settings: 'rng_seed' must be an unsigned integer");
    }
    s.rng_seed = j["rng_seed"].get<std::uint64_t>();
  }
  s.validate();
  return s;
}

inline Json objectives_json(const ObjectiveVector& o) {
  return {{"neg_tp", detail::json_number(o[0])},
          {"fp", detail::json_number(o[1])},
          {"mp", detail::json_number(o[2])}};
}

inline Json as_json(const OptimizationResult& r) {
  Json front = Json::array();
  for (const auto& s : r.front) {
    Json thresholds = Json::object();
    for (std::size_t i = 0; i < r.labels.size(); ++i) thresholds[r.labels[i]] = s.thresholds[i];
    front.push_back({{"thresholds", thresholds},
                     {"objectives", objectives_json(s.objectives)},
                     {"rank", s.rank},
                     {"crowding", std::isinf(s.crowding) ? Json(nullptr) : Json(s.crowding)}});
  }
  return {
      {"labels", r.labels},
      {"front", front},
      {"recommended_index", r.recommended_index},
      {"provenance",
       {{"settings", as_json(r.provenance.settings)},
        {"dataset_digest", r.provenance.dataset_digest},
        {"cost_schedule_digest", r.provenance.cost_schedule_digest
                                     ? Json(*r.provenance.cost_schedule_digest)
                                     : Json(nullptr)},
        {"engine_version", r.provenance.engine_version}}},
      {"warnings", r.warnings},
  };
}

}  // namespace threshy
