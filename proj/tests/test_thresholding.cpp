#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "threshy/fixtures.hpp"
#include "threshy/thresholding.hpp"

using namespace threshy;

namespace {

std::set<std::string> names(const Dataset& d, const LabelSet& s) {
  std::set<std::string> out;
  for (auto l : s) out.insert(d.label(l));
  return out;
}

}  // namespace

TEST_CASE("dog/cat record: 0.792 clears 0.5 but not 0.8") {
  const auto d = fixtures::load_fixture(fixtures::dog_cat());
  auto at = [&](double t) { return decide(d, ThresholdProfile::uniform(d, t)).emitted[0]; };
  CHECK(names(d, at(0.5)) == std::set<std::string>{"dog"});
  CHECK(names(d, at(0.792)) == std::set<std::string>{"dog"});
  CHECK(at(0.793).empty());
}

TEST_CASE("multiclass ties go to the smallest label name") {
  const auto d = parse_dataset("truth,score:zeta,score:alpha\nzeta,0.6,0.6\n", TaskKind::multiclass);
  CHECK(names(d, decide(d, ThresholdProfile::uniform(d, 0.5)).emitted[0]) ==
        std::set<std::string>{"alpha"});
  // Threshold on the argmax label only: alpha is the winner and it fails its own threshold.
  ThresholdProfile p = ThresholdProfile::uniform(d, 0.5);
  p.thresholds["alpha"] = 0.7;
  CHECK(decide(d, p).emitted[0].empty());
}

TEST_CASE("binary emits exactly one of the two labels") {
  const auto d = parse_dataset("truth,score:spam,score:ham\nspam,0.7,0.3\nham,0.2,0.8\n",
                               TaskKind::binary, "spam");
  const auto dec = decide(d, ThresholdProfile::uniform(d, 0.7));
  CHECK(names(d, dec.emitted[0]) == std::set<std::string>{"spam"});
  CHECK(names(d, dec.emitted[1]) == std::set<std::string>{"ham"});
  const auto high = decide(d, ThresholdProfile::uniform(d, 0.71));
  CHECK(names(d, high.emitted[0]) == std::set<std::string>{"ham"});
}

TEST_CASE("threshold extremes") {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_dataset(rng, TaskKind::multilabel, 20, 4);
    for (const auto& s : decide(d, ThresholdProfile::uniform(d, 0.0)).emitted) CHECK(s.size() == 4);
    const auto mc = oracle::random_dataset(rng, TaskKind::multiclass, 20, 4);
    for (const auto& s : decide(mc, ThresholdProfile::uniform(mc, 0.0)).emitted) CHECK(s.size() == 1);
  }
}

TEST_CASE("decisions match the reference implementation") {
  oracle::Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto d = oracle::random_dataset(rng, oracle::random_task(rng), 1 + trial % 25, 2 + trial % 5);
    const auto t = oracle::random_thresholds(rng, d.label_count());
    const auto emitted = decide_labels(d, t);
    for (std::size_t r = 0; r < d.size(); ++r) {
      REQUIRE(std::is_sorted(emitted[r].begin(), emitted[r].end()));
      CHECK(names(d, emitted[r]) == oracle::emitted_names(d, r, t));
    }
  }
}

TEST_CASE("profile resolution") {
  const auto d = parse_dataset("truth,score:a,score:b\na,0.1,0.2\n", TaskKind::multiclass);
  ThresholdProfile p{{{"a", 0.3}, {"ghost", 0.9}}, 0.6, TaskKind::multiclass, std::nullopt};
  const auto r = resolve(p, d);
  CHECK(r.values == std::vector<double>{0.3, 0.6});
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("ghost") != std::string::npos);

  p.task = TaskKind::multilabel;
  try {
    resolve(p, d);
    FAIL("expected task mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::task_mismatch);
  }

  p.task = TaskKind::multiclass;
  p.thresholds["a"] = 1.5;
  try {
    resolve(p, d);
    FAIL("expected validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
    CHECK(std::string(e.what()).find("out of range") != std::string::npos);
  }
}

TEST_CASE("binary profiles must agree on the positive label") {
  const auto d = parse_dataset("truth,score:spam,score:ham\nspam,0.7,0.3\n", TaskKind::binary, "spam");
  ThresholdProfile p{{}, 0.5, TaskKind::binary, "ham"};
  CHECK_THROWS_AS(resolve(p, d), Error);
}
