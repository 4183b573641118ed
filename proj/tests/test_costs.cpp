#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "threshy/costs.hpp"
#include "threshy/json_io.hpp"

using namespace threshy;

TEST_CASE("default weights count every error once") {
  oracle::Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = oracle::random_dataset(rng, oracle::random_task(rng), 15, 3);
    const auto s = confusion(d, decide_labels(d, oracle::random_thresholds(rng, d.label_count())));
    const auto t = s.totals();
    CHECK(total_cost(s, CostSchedule{}) == static_cast<double>(t.fp + t.mp));
  }
}

TEST_CASE("cost is linear in the counts") {
  ConfusionSummary s{{"ripe", "roma"}, {{10, 3, 2}, {4, 1, 0}}, 2, 2};
  CostSchedule c;
  c.per_label["ripe"] = {-1.0, 5.0, 0.5};
  CHECK(total_cost(s, c) == -10.0 + 15.0 + 1.0 + 1.0 + 0.0);

  oracle::Rng rng(32);
  for (int trial = 0; trial < 500; ++trial) {
    std::uniform_int_distribution<std::size_t> n(0, 50);
    std::uniform_real_distribution<double> w(0.0, 10.0);
    ConfusionSummary a{{"x"}, {{n(rng), n(rng), n(rng)}}, 1, 1};
    ConfusionSummary b{{"x"}, {{n(rng), n(rng), n(rng)}}, 1, 1};
    ConfusionSummary sum{{"x"}, {a.counts[0]}, 1, 1};
    sum.counts[0] += b.counts[0];
    CostSchedule sched;
    sched.per_label["x"] = {w(rng) - 5.0, w(rng), w(rng)};
    CHECK(total_cost(sum, sched) == Catch::Approx(total_cost(a, sched) + total_cost(b, sched)));
  }
}

TEST_CASE("cost schedule JSON") {
  const auto s = parse_cost_schedule(
      R"({"currency": "AUD", "labels": {"ripe": {"false_positive": 5}, "roma": {"correct": -0.5}}})");
  CHECK(s.currency_tag == "AUD");
  CHECK(s.weights_for("ripe") == CostWeights{0.0, 5.0, 1.0});
  CHECK(s.weights_for("roma") == CostWeights{-0.5, 1.0, 1.0});
  CHECK(s.weights_for("other") == CostWeights{});
  CHECK(cost_schedule_from_json(as_json(s)) == s);
  CHECK(cost_schedule_digest(s) == cost_schedule_digest(cost_schedule_from_json(as_json(s))));

  CostSchedule other = s;
  other.per_label["ripe"].false_positive = 6;
  CHECK(cost_schedule_digest(other) != cost_schedule_digest(s));
}

TEST_CASE("invalid schedules are rejected") {
  CHECK_THROWS_AS(parse_cost_schedule(R"({"labels": {"a": {"false_positive": -1}}})"), Error);
  CHECK_THROWS_AS(parse_cost_schedule(R"({"labels": {"a": {"missed_positive": "x"}}})"), Error);
  CHECK_THROWS_AS(parse_cost_schedule("{"), Error);
  CHECK_THROWS_AS(parse_cost_schedule("[]"), Error);
}

TEST_CASE("unknown schedule labels produce warnings") {
  oracle::Rng rng(33);
  const auto d = oracle::random_dataset(rng, TaskKind::multilabel, 5, 2);
  CostSchedule s;
  s.per_label["nope"] = {};
  s.per_label[d.label(0)] = {};
  const auto w = s.unknown_labels(d);
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("nope") != std::string::npos);
}

TEST_CASE("an expensive false positive pushes the cost-optimal threshold up") {
  // Sweep oracle on a single multilabel column: the cost minimiser under fp-heavy weights
  // never sits below the minimiser under equal weights.
  oracle::Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_dataset(rng, TaskKind::multilabel, 40, 2);
    CostSchedule equal, heavy;
    heavy.per_label[d.label(0)] = {0.0, 5.0, 1.0};
    auto best = [&](const CostSchedule& c) {
      double arg = 0.0, low = 1e300;
      for (int i = 0; i <= 1000; ++i) {
        std::vector<double> t{i / 1000.0, 0.5};
        const double v = total_cost(confusion(d, decide_labels(d, t)), c);
        if (v < low) {
          low = v;
          arg = t[0];
        }
      }
      return arg;
    };
    CHECK(best(heavy) >= best(equal));
  }
}
