#include <doctest.h>

#include <cmath>
#include <unordered_map>
#include <vector>

#include "prevalence/labeling.hpp"
#include "prevalence/rng.hpp"

using namespace prevalence;

namespace {

SampleDraw make_draw(std::string id, double weight = 1.0) {
  SampleDraw d;
  d.content_id = std::move(id);
  d.impressions = 1;
  d.weight = weight;
  d.draw_probability = 0.5;
  return d;
}

TruthLookup map_lookup(const std::unordered_map<std::string, int>& truth) {
  return [&truth](const std::string& id) -> std::optional<int> {
    auto it = truth.find(id);
    if (it == truth.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST_CASE("synthetic oracle echoes ground truth") {
  std::unordered_map<std::string, int> truth = {{"a", 1}, {"b", 0}};
  SyntheticOracleProvider provider(map_lookup(truth), "oracle-1");
  std::vector<SampleDraw> draws = {make_draw("a"), make_draw("b")};
  auto summary = label_sample(draws, provider);
  CHECK(summary.labeled == 2);
  CHECK(summary.abstained == 0);
  CHECK(*draws[0].label == 1);
  CHECK(*draws[1].label == 0);
  CHECK(summary.provider_version == "oracle-1");
}

TEST_CASE("oracle abstains on unknown ids and the caller sees the count") {
  std::unordered_map<std::string, int> truth = {{"a", 1}};
  SyntheticOracleProvider provider(map_lookup(truth), "oracle-1");
  std::vector<SampleDraw> draws = {make_draw("a"), make_draw("mystery")};
  auto summary = label_sample(draws, provider);
  CHECK(summary.labeled == 1);
  CHECK(summary.abstained == 1);
  CHECK(summary.abstained_ids == std::vector<std::string>{"mystery"});
  CHECK(!draws[1].label.has_value());
}

TEST_CASE("file join raises an error payload listing uncovered ids") {
  std::unordered_map<std::string, LabelResult> labels = {{"a", {1, 0.9}}};
  FileJoinProvider provider(std::move(labels), "delivered-3");
  std::vector<SampleDraw> draws = {make_draw("a"), make_draw("b"), make_draw("c")};
  try {
    label_sample(draws, provider);
    FAIL("expected MissingLabelsError");
  } catch (const MissingLabelsError& e) {
    CHECK(e.missing_ids == std::vector<std::string>{"b", "c"});
  }
}

TEST_CASE("mock labeler") {
  std::unordered_map<std::string, int> truth;
  for (int i = 0; i < 100; ++i) truth["p" + std::to_string(i)] = 1;
  for (int i = 0; i < 100; ++i) truth["n" + std::to_string(i)] = 0;

  SUBCASE("perfect settings reproduce truth") {
    MockRemoteProvider provider(map_lookup(truth), 1.0, 0.0, 7, 0.0, "mock-1");
    std::vector<SampleDraw> draws;
    for (const auto& [id, y] : truth) draws.push_back(make_draw(id));
    label_sample(draws, provider);
    for (const auto& d : draws) CHECK(*d.label == truth[d.content_id]);
  }
  SUBCASE("deterministic and order-independent") {
    MockRemoteProvider p1(map_lookup(truth), 0.8, 0.1, 42, 0.0, "mock-1");
    MockRemoteProvider p2(map_lookup(truth), 0.8, 0.1, 42, 0.0, "mock-1");
    auto d1 = make_draw("p3");
    auto d2 = make_draw("p3");
    CHECK(*p1.label(d1).label == *p2.label(d2).label);
    // same id after labeling others first
    p2.label(make_draw("n1"));
    auto d3 = make_draw("p3");
    CHECK(*p1.label(d1).label == *p2.label(d3).label);
  }
  SUBCASE("empirical flip rates match the configured rates") {
    const int n = 100000;
    std::unordered_map<std::string, int> big;
    for (int i = 0; i < n; ++i) big["pos" + std::to_string(i)] = 1;
    for (int i = 0; i < n; ++i) big["neg" + std::to_string(i)] = 0;
    MockRemoteProvider provider(map_lookup(big), 0.9, 0.05, 1234, 0.0, "mock-1");
    int tp = 0, fp = 0;
    for (int i = 0; i < n; ++i) {
      if (*provider.label(make_draw("pos" + std::to_string(i))).label == 1) ++tp;
      if (*provider.label(make_draw("neg" + std::to_string(i))).label == 1) ++fp;
    }
    CHECK(std::abs(static_cast<double>(tp) / n - 0.9) < 0.005);
    CHECK(std::abs(static_cast<double>(fp) / n - 0.05) < 0.005);
  }
  SUBCASE("latency is accounted, not slept") {
    MockRemoteProvider provider(map_lookup(truth), 1.0, 0.0, 7, 2.5, "mock-1");
    provider.label(make_draw("p1"));
    provider.label(make_draw("p2"));
    auto meta = provider.cost_metadata();
    CHECK(meta.at("simulated_latency_ms") == doctest::Approx(5.0));
    CHECK(meta.at("units_labeled") == doctest::Approx(2.0));
  }
}

TEST_CASE("gold set evaluation") {
  SUBCASE("perfect predictions") {
    std::vector<int> truths = {1, 0, 1, 0};
    auto r = evaluate_gold_set(truths, truths);
    CHECK(r.accuracy == 1.0);
    CHECK(*r.f1 == 1.0);
    CHECK(*r.false_positive_rate == 0.0);
  }
  SUBCASE("complemented predictions") {
    std::vector<int> truths = {1, 0, 1, 0};
    std::vector<int> preds = {0, 1, 0, 1};
    CHECK(evaluate_gold_set(preds, truths).accuracy == 0.0);
  }
  SUBCASE("worked confusion matrix") {
    // TP=8, FN=2, FP=1, TN=89.
    std::vector<int> truths, preds;
    auto add = [&](int t, int p, int count) {
      for (int i = 0; i < count; ++i) {
        truths.push_back(t);
        preds.push_back(p);
      }
    };
    add(1, 1, 8);
    add(1, 0, 2);
    add(0, 1, 1);
    add(0, 0, 89);
    auto r = evaluate_gold_set(preds, truths);
    CHECK(r.n == 100);
    CHECK(r.true_positives + r.false_negatives + r.false_positives + r.true_negatives == r.n);
    CHECK(*r.recall == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(*r.false_positive_rate == doctest::Approx(1.0 / 90.0).epsilon(1e-12));
    CHECK(r.accuracy == doctest::Approx(0.97).epsilon(1e-12));
    CHECK(*r.precision == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(*r.f1 == doctest::Approx(0.842105).epsilon(1e-5));
    // report fields recompute exactly from the persisted counts
    CHECK(*r.recall == static_cast<double>(r.true_positives) /
                           static_cast<double>(r.true_positives + r.false_negatives));
    CHECK(r.accuracy == static_cast<double>(r.true_positives + r.true_negatives) /
                            static_cast<double>(r.n));
    auto q = r.labeler_quality();
    CHECK(q.sensitivity == *r.recall);
    CHECK(q.false_positive_rate == *r.false_positive_rate);
    CHECK(q.sensitivity_se == doctest::Approx(std::sqrt(0.8 * 0.2 / 10.0)));
  }
  SUBCASE("no gold positives leaves recall undefined") {
    std::vector<int> truths = {0, 0, 0};
    std::vector<int> preds = {0, 1, 0};
    auto r = evaluate_gold_set(preds, truths);
    CHECK(!r.recall.has_value());
    CHECK(r.false_positive_rate.has_value());
    CHECK_THROWS_AS(r.labeler_quality(), Error);
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(evaluate_gold_set(std::vector<int>{1}, std::vector<int>{1, 0}), Error);
    CHECK_THROWS_AS(evaluate_gold_set(std::vector<int>{}, std::vector<int>{}), Error);
    CHECK_THROWS_AS(evaluate_gold_set(std::vector<int>{2}, std::vector<int>{1}), Error);
  }
}

TEST_CASE("quality gate") {
  std::vector<int> truths, preds;
  auto add = [&](int t, int p, int count) {
    for (int i = 0; i < count; ++i) {
      truths.push_back(t);
      preds.push_back(p);
    }
  };
  add(1, 1, 8);
  add(1, 0, 2);
  add(0, 1, 1);
  add(0, 0, 89);
  auto report = evaluate_gold_set(preds, truths);

  SUBCASE("passes generous thresholds") {
    QualityThresholds t;
    t.min_accuracy = 0.9;
    t.min_f1 = 0.8;
    t.min_recall = 0.7;
    t.max_false_positive_rate = 0.05;
    auto g = quality_gate(report, t);
    CHECK(g.pass);
    CHECK(g.reasons.empty());
  }
  SUBCASE("a hair-thin miss names the metric") {
    QualityThresholds t;
    t.min_f1 = *report.f1 + 0.001;
    auto g = quality_gate(report, t);
    CHECK(!g.pass);
    REQUIRE(g.reasons.size() == 1);
    CHECK(g.reasons[0].find("f1") == 0);
  }
  SUBCASE("undefined recall fails with an insufficient-positives reason") {
    auto empty_report = evaluate_gold_set(std::vector<int>{0, 0}, std::vector<int>{0, 0});
    QualityThresholds t;
    t.min_recall = 0.5;
    auto g = quality_gate(empty_report, t);
    CHECK(!g.pass);
    bool found = false;
    for (const auto& r : g.reasons) {
      if (r.find("insufficient gold positives") != std::string::npos) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("validation subsample") {
  std::vector<SampleDraw> draws;
  for (int i = 0; i < 50; ++i) draws.push_back(make_draw("d" + std::to_string(i), 1.0 + i));

  SUBCASE("deterministic, unique, and size-bounded") {
    auto a = validation_subsample(draws, 10, SubsampleMode::uniform, 5);
    auto b = validation_subsample(draws, 10, SubsampleMode::uniform, 5);
    CHECK(a == b);
    CHECK(a.size() == 10);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::unique(sorted.begin(), sorted.end()) == sorted.end());
    CHECK_THROWS_AS(validation_subsample(draws, 51, SubsampleMode::uniform, 5), Error);
  }
  SUBCASE("weighted mode leans toward heavy draws") {
    int heavy_uniform = 0, heavy_weighted = 0;
    for (int seed = 0; seed < 400; ++seed) {
      for (auto idx : validation_subsample(draws, 5, SubsampleMode::uniform, seed))
        if (idx >= 40) ++heavy_uniform;
      for (auto idx : validation_subsample(draws, 5, SubsampleMode::weighted, seed))
        if (idx >= 40) ++heavy_weighted;
    }
    CHECK(heavy_weighted > heavy_uniform);
  }
}
