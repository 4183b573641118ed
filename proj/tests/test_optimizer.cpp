#include <catch_amalgamated.hpp>

#include <thread>

#include "oracles.hpp"
#include "threshy/fixtures.hpp"
#include "threshy/optimizer.hpp"

using namespace threshy;

namespace {

std::set<oracle::Triple> front_set(const OptimizationResult& r) {
  std::set<oracle::Triple> out;
  for (const auto& s : r.front) out.insert(s.objectives);
  return out;
}

OptimizerSettings small_settings(std::uint64_t seed = 42) {
  OptimizerSettings s;
  s.population_size = 40;
  s.generations = 20;
  s.rng_seed = seed;
  return s;
}

}  // namespace

TEST_CASE("settings validation") {
  OptimizerSettings s;
  s.population_size = 3;
  CHECK_THROWS_AS(s.validate(), Error);
  s.population_size = 6;
  CHECK_NOTHROW(s.validate());
  s.population_size = 7;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.generations = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.crossover_probability = 1.5;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.mutation_probability_per_gene = -0.1;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK(OptimizerSettings{}.mutation_probability(4) == 0.25);
}

TEST_CASE("front objectives are consistent and mutually non-dominated") {
  oracle::Rng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const auto d = oracle::random_dataset(rng, oracle::random_task(rng), 30, 3);
    const auto r = optimize(d, small_settings(trial));
    REQUIRE(!r.front.empty());
    REQUIRE(r.recommended_index < r.front.size());
    for (const auto& s : r.front) {
      CHECK(s.objectives == oracle::objectives(d, oracle::brute_confusion(d, s.thresholds)));
      for (double g : s.thresholds) CHECK((g >= 0.0 && g <= 1.0));
      for (const auto& o : r.front) CHECK_FALSE(nsga2::dominates(o.objectives, s.objectives));
    }
    CHECK(std::is_sorted(r.front.begin(), r.front.end(),
                         [](const auto& a, const auto& b) { return a.objectives < b.objectives; }));
  }
}

TEST_CASE("small random problems: front equals the grid oracle") {
  oracle::Rng rng(52);
  for (int trial = 0; trial < 6; ++trial) {
    const auto task = static_cast<TaskKind>(trial % 3);
    const auto d = oracle::random_dataset(rng, task, 10 + trial * 5, 2);
    const auto r = optimize(d, OptimizerSettings{});
    INFO("trial " << trial << " task " << to_string(task));
    CHECK(front_set(r) == oracle::grid_front(d));
  }
}

TEST_CASE("same seed, same result; different seed may differ") {
  const auto d = fixtures::load_fixture(fixtures::tomatoes());
  const auto a = optimize(d, small_settings(7));
  const auto b = optimize(d, small_settings(7));
  CHECK(a == b);
}

TEST_CASE("binary search only moves the positive gene") {
  const auto d = fixtures::load_fixture(fixtures::spam_model_1());
  const auto r = optimize(d, small_settings());
  const auto neg = d.negative_index();
  for (const auto& s : r.front) CHECK(s.thresholds[neg] == 0.0);
  const auto p = profile_from_genes(d, r.recommended().thresholds);
  CHECK(p.thresholds.size() == 1);
  CHECK(p.thresholds.count("spam") == 1);
}

TEST_CASE("progress reports every generation with non-decreasing hypervolume") {
  const auto d = fixtures::load_fixture(fixtures::tomatoes());
  std::vector<OptimizerProgress> seen;
  const auto s = small_settings();
  optimize(d, s, nullptr, [&](const OptimizerProgress& p) { seen.push_back(p); });
  REQUIRE(seen.size() == s.generations + 1);
  for (std::size_t g = 0; g < seen.size(); ++g) {
    CHECK(seen[g].generation == g);
    CHECK(seen[g].generations_total == s.generations);
    if (g > 0) CHECK(seen[g].hypervolume >= seen[g - 1].hypervolume);
    for (std::size_t k = 0; k < 3; ++k) {
      if (g > 0) CHECK(seen[g].best[k] <= seen[g - 1].best[k]);
    }
  }
}

TEST_CASE("cancellation between generations") {
  const auto d = fixtures::load_fixture(fixtures::tomatoes());
  std::stop_source stop;
  std::size_t last = 0;
  auto observer = [&](const OptimizerProgress& p) {
    last = p.generation;
    if (p.generation == 3) stop.request_stop();
  };
  try {
    optimize(d, small_settings(), nullptr, observer, stop.get_token());
    FAIL("expected cancellation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::cancelled);
  }
  CHECK(last == 3);
}

TEST_CASE("labels without positives") {
  const auto d = parse_dataset("truth,score:spam,score:ham\nham,0.2,0.8\nham,0.6,0.4\n",
                               TaskKind::binary, "spam");
  const auto r = optimize(d, small_settings());
  REQUIRE(r.front.size() == 1);
  CHECK(r.front[0].thresholds[d.positive_index()] == 1.0);
  CHECK(!r.warnings.empty());
}

TEST_CASE("recommendation rules") {
  const auto d = fixtures::load_fixture(fixtures::four_record_multiclass());
  // Front members built from known genes.
  auto member = [&](std::vector<double> g) {
    return ParetoSolution{g, evaluate_genes(d, g), 0, 0.0};
  };
  std::vector<ParetoSolution> front{member({0.95, 0.95}), member({0.5, 0.5}), member({0.0, 0.0})};
  // At 0.0 every record emits its argmax: a,a,b,a -> a(2,1,0) b(1,0,1): micro f1 = 6/8.
  CHECK(recommend(front, d, nullptr) == 2);

  CostSchedule fp_heavy;
  fp_heavy.per_label["a"] = {0.0, 100.0, 1.0};
  fp_heavy.per_label["b"] = {0.0, 100.0, 1.0};
  CHECK(recommend(front, d, &fp_heavy) == 0);

  // Identical objectives: smaller genes win.
  std::vector<ParetoSolution> twins{member({0.3, 0.01}), member({0.2, 0.01})};
  CHECK(recommend(twins, d, nullptr) == 1);
  CHECK_THROWS_AS(recommend(std::vector<ParetoSolution>{}, d, nullptr), Error);
}

TEST_CASE("cost schedule digest lands in provenance") {
  const auto d = fixtures::load_fixture(fixtures::dog_cat());
  CostSchedule c;
  c.per_label["dog"] = {0.0, 2.0, 1.0};
  const auto r = optimize(d, small_settings(), &c);
  CHECK(r.provenance.cost_schedule_digest == cost_schedule_digest(c));
  CHECK(r.provenance.dataset_digest == d.content_digest());
  CHECK(optimize(d, small_settings()).provenance.cost_schedule_digest == std::nullopt);
}

TEST_CASE("elite archive keeps only non-dominated vectors") {
  detail::EliteArchive a;
  a.offer({-1, 1, 1}, {0.5});
  a.offer({-2, 0, 0}, {0.4});
  a.offer({-1, 1, 1}, {0.1});
  a.offer({-2, 0, 0}, {0.3});
  REQUIRE(a.members().size() == 1);
  CHECK(a.members().begin()->second == std::vector<double>{0.3});
  a.offer({-3, 1, 0}, {0.9});
  CHECK(a.members().size() == 2);
}
