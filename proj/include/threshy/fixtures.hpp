#pragma once

// Seeded synthetic benchmark datasets. Scores are rendered with three decimals so that a
// 0.001 threshold grid reaches every distinct decision.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "threshy/dataset.hpp"
#include "threshy/json_io.hpp"
#include "threshy/nsga2.hpp"
#include "threshy/task.hpp"

namespace threshy::fixtures {

struct ScoreRange {
  double low = 0.0;
  double high = 1.0;
};

/// Binary spam/ham predictions; the `spam` column is the score that matters.
struct SpamParams {
  std::size_t ham_count = 60;
  std::size_t spam_count = 40;
  ScoreRange ham;   // spam score of ham emails
  ScoreRange spam;  // spam score of spam emails
  double positive_shift = 0.0;  // added to the spam score of spam emails, clamped to [0, 1]
  std::uint64_t order_seed = 2020;  // truth order; shared so both models score the same emails
};

/// Multilabel tomato type + ripeness predictions.
struct TomatoParams {
  std::size_t count = 1000;
  std::vector<std::string> types = {"roma", "cherry", "plum", "green", "yellow"};
  ScoreRange true_type{0.55, 0.98};
  ScoreRange other_type{0.02, 0.62};
  double ripe_fraction = 0.5;
  ScoreRange ripe{0.35, 0.95};    // triangular over the range
  ScoreRange unripe{0.05, 0.72};  // triangular over the range
};

struct StaticCsv {
  std::string text;
};

struct FixtureSpec {
  std::string name;
  TaskKind task = TaskKind::binary;
  std::optional<std::string> positive_label;
  std::uint64_t seed = 0;
  std::variant<SpamParams, TomatoParams, StaticCsv> params;
  Json expected = Json::object();

  [[nodiscard]] std::string file_name() const { return name + ".csv"; }
};

namespace detail {

inline long milli(double x) { return std::lround(std::clamp(x, 0.0, 1.0) * 1000.0); }

inline std::string milli_str(long m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld.%03ld", m / 1000, m % 1000);
  return buf;
}

inline long draw(nsga2::Rng& rng, const ScoreRange& r) {
  return milli(r.low + nsga2::uniform01(rng) * (r.high - r.low));
}

inline long draw_triangular(nsga2::Rng& rng, const ScoreRange& r) {
  const double u = 0.5 * (nsga2::uniform01(rng) + nsga2::uniform01(rng));
  return milli(r.low + u * (r.high - r.low));
}

inline std::string generate(const SpamParams& p, std::uint64_t seed) {
  std::vector<bool> is_spam(p.ham_count, false);
  is_spam.insert(is_spam.end(), p.spam_count, true);
  nsga2::Rng order(p.order_seed);
  for (std::size_t k = is_spam.size(); k > 1; --k) {
    const std::size_t j = nsga2::uniform_index(order, k);
    const bool tmp = is_spam[k - 1];
    is_spam[k - 1] = is_spam[j];
    is_spam[j] = tmp;
  }
  nsga2::Rng rng(seed);
  std::string out = "id,truth,score:spam,score:ham\n";
  char id[32];
  for (std::size_t i = 0; i < is_spam.size(); ++i) {
    long spam = draw(rng, is_spam[i] ? p.spam : p.ham);
    if (is_spam[i]) spam = std::clamp(spam + std::lround(p.positive_shift * 1000.0), 0L, 1000L);
    std::snprintf(id, sizeof id, "email-%03zu", i + 1);
    out += std::string(id) + ',' + (is_spam[i] ? "spam" : "ham") + ',' + milli_str(spam) + ',' +
           milli_str(1000 - spam) + '\n';
  }
  return out;
}

inline std::string generate(const TomatoParams& p, std::uint64_t seed) {
  nsga2::Rng rng(seed);
  std::string out = "id,truth";
  for (const auto& t : p.types) out += ",score:" + t;
  out += ",score:ripe\n";
  char id[32];
  for (std::size_t i = 0; i < p.count; ++i) {
    const std::size_t type = nsga2::uniform_index(rng, p.types.size());
    const bool ripe = nsga2::uniform01(rng) < p.ripe_fraction;
    std::snprintf(id, sizeof id, "tomato-%04zu", i + 1);
    out += id;
    out += ',' + p.types[type] + (ripe ? ";ripe" : "");
    for (std::size_t t = 0; t < p.types.size(); ++t) {
      out += ',' + milli_str(draw(rng, t == type ? p.true_type : p.other_type));
    }
    out += ',' + milli_str(draw_triangular(rng, ripe ? p.ripe : p.unripe)) + '\n';
  }
  return out;
}

inline std::string generate(const StaticCsv& p, std::uint64_t) { return p.text; }

}  // namespace detail

/// Deterministic CSV bytes for a fixture spec.
inline std::string generate_fixture(const FixtureSpec& spec) {
  return std::visit([&](const auto& p) { return detail::generate(p, spec.seed); }, spec.params);
}

inline Dataset load_fixture(const FixtureSpec& spec) {
  return parse_dataset(generate_fixture(spec), spec.task, spec.positive_label);
}

inline FixtureSpec spam_model_1() {
  SpamParams p;
  p.ham = {0.05, 0.19};
  p.spam = {0.70, 0.95};
  return {"spam_model_1", TaskKind::binary, "spam", 20200101, p,
          {{"records", 100}, {"gap", {0.19, 0.70}}, {"ham_center", 0.12}}};
}

inline FixtureSpec spam_model_2() {
  SpamParams p;
  p.ham = {0.60, 0.70};
  p.spam = {0.75, 0.95};
  return {"spam_model_2", TaskKind::binary, "spam", 20200102, p,
          {{"records", 100}, {"gap", {0.70, 0.75}}, {"ham_center", 0.65}}};
}

/// spam_model_2 with every spam score lowered by 0.5: spam now scores in [0.25, 0.45].
inline FixtureSpec spam_model_2_degraded() {
  auto spec = spam_model_2();
  spec.name = "spam_model_2_degraded";
  std::get<SpamParams>(spec.params).positive_shift = -0.5;
  spec.expected = {{"records", 100}, {"degraded_from", "spam_model_2"}, {"positive_shift", -0.5}};
  return spec;
}

inline FixtureSpec tomatoes() {
  return {"tomatoes", TaskKind::multilabel, std::nullopt, 20200103, TomatoParams{},
          {{"records", 1000}, {"types", 5}, {"ripeness_label", "ripe"}}};
}

/// One image, one detected label with the service's 0.792 confidence.
inline FixtureSpec dog_cat() {
  return {"dog_cat", TaskKind::multiclass, std::nullopt, 0,
          StaticCsv{"id,truth,score:dog,score:cat\nimage-1,dog,0.792,0.0\n"},
          {{"records", 1}}};
}

/// Truths a,a,b,b; at threshold 0.5 the decisions are a, abstain, b, a.
inline FixtureSpec four_record_multiclass() {
  return {"four_record_multiclass", TaskKind::multiclass, std::nullopt, 0,
          StaticCsv{"id,truth,score:a,score:b\n"
                    "r1,a,0.9,0.1\n"
                    "r2,a,0.4,0.3\n"
                    "r3,b,0.2,0.8\n"
                    "r4,b,0.7,0.2\n"},
          {{"records", 4},
           {"threshold", 0.5},
           {"confusion", {{"a", {1, 1, 1}}, {"b", {1, 0, 1}}}}}};
}

inline std::vector<FixtureSpec> all_fixtures() {
  return {spam_model_1(), spam_model_2(), spam_model_2_degraded(), tomatoes(), dog_cat(),
          four_record_multiclass()};
}

inline std::optional<FixtureSpec> find_fixture(const std::string& name) {
  for (auto& spec : all_fixtures()) {
    if (spec.name == name) return spec;
  }
  return std::nullopt;
}

inline Json params_json(const FixtureSpec& spec) {
  struct Visitor {
    Json operator()(const SpamParams& p) const {
      return {{"generator", "spam"},
              {"ham_count", p.ham_count},
              {"spam_count", p.spam_count},
              {"ham_range", {p.ham.low, p.ham.high}},
              {"spam_range", {p.spam.low, p.spam.high}},
              {"positive_shift", p.positive_shift},
              {"order_seed", p.order_seed}};
    }
    Json operator()(const TomatoParams& p) const {
      return {{"generator", "tomatoes"},
              {"count", p.count},
              {"types", p.types},
              {"true_type_range", {p.true_type.low, p.true_type.high}},
              {"other_type_range", {p.other_type.low, p.other_type.high}},
              {"ripe_fraction", p.ripe_fraction},
              {"ripe_range", {p.ripe.low, p.ripe.high}},
              {"unripe_range", {p.unripe.low, p.unripe.high}}};
    }
    Json operator()(const StaticCsv&) const { return {{"generator", "static"}}; }
  };
  return std::visit(Visitor{}, spec.params);
}

/// The `fixtures/manifest.json` document.
inline Json manifest() {
  Json list = Json::array();
  for (const auto& spec : all_fixtures()) {
    list.push_back({{"name", spec.name},
                    {"file", spec.file_name()},
                    {"task", std::string(to_string(spec.task))},
                    {"positive_label", spec.positive_label ? Json(*spec.positive_label) : Json(nullptr)},
                    {"seed", spec.seed},
                    {"params", params_json(spec)},
                    {"expected", spec.expected}});
  }
  return {{"fixtures", list}};
}

}  // namespace threshy::fixtures
