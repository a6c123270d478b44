#include <doctest.h>

#include "prevalence/dates.hpp"
#include "prevalence/formats.hpp"
#include "prevalence/rng.hpp"

using namespace prevalence;

TEST_CASE("impression records round-trip and validate") {
  SUBCASE("round trip with all fields") {
    ContentRecord r;
    r.content_id = "pin-1";
    r.impressions = 42;
    r.segment_impressions = {{"surface:homefeed", 40}, {"surface:search", 2}};
    r.score = 0.25;
    auto back = content_record_from_json(to_json(r));
    CHECK(back.content_id == r.content_id);
    CHECK(back.impressions == r.impressions);
    CHECK(back.segment_impressions == r.segment_impressions);
    CHECK(*back.score == *r.score);
  }
  SUBCASE("unknown keys are rejected") {
    json j = {{"content_id", "a"}, {"impressions", 1}, {"surprise", true}};
    CHECK_THROWS_WITH_AS(content_record_from_json(j), doctest::Contains("surprise"), Error);
  }
  SUBCASE("segment counts must sum to the total") {
    json j = {{"content_id", "a"}, {"impressions", 10}, {"segments", {{"g", 3}}}};
    CHECK_THROWS_AS(content_record_from_json(j), Error);
  }
  SUBCASE("score range is enforced") {
    json j = {{"content_id", "a"}, {"impressions", 1}, {"score", 1.5}};
    CHECK_THROWS_AS(content_record_from_json(j), Error);
    j["score"] = 0.0;
    CHECK_THROWS_AS(content_record_from_json(j), Error);
  }
  SUBCASE("zero impressions are out of frame") {
    json j = {{"content_id", "a"}, {"impressions", 0}};
    CHECK_THROWS_AS(content_record_from_json(j), Error);
  }
}

TEST_CASE("sample draws and headers round-trip") {
  rng::SplitMix64 g(3);
  for (int rep = 0; rep < 20; ++rep) {
    SampleDraw d;
    d.content_id = "c" + std::to_string(g.next_u64() % 1000);
    d.impressions = 1 + g.next_u64() % 100;
    d.weight = g.next_unit_open_low() * 100.0;
    if (g.next_unit() < 0.5) {
      d.draw_probability = g.next_unit_open_low();
    } else {
      d.inclusion_probability = g.next_unit_open_low();
    }
    if (g.next_unit() < 0.5) d.label = static_cast<int>(g.next_u64() % 2);
    if (g.next_unit() < 0.5) d.segment_impressions["g"] = d.impressions;
    auto back = sample_draw_from_json(to_json(d));
    CHECK(back.content_id == d.content_id);
    CHECK(back.weight == d.weight);  // bit-exact through JSON
    CHECK(back.draw_probability == d.draw_probability);
    CHECK(back.inclusion_probability == d.inclusion_probability);
    CHECK(back.label == d.label);
  }

  SampleFileHeader h;
  h.policy_id = "p";
  h.day = "2026-07-01";
  h.scheme = "ppswor";
  h.sample_size = 100;
  h.seed = 7;
  h.threshold = 0.0123456789;
  h.total_weight_seen = 1e9;
  h.items_seen = 12345;
  h.imputation_value = 0.31;
  h.config_hash = "abc";
  h.sample_id = "def";
  auto back = sample_header_from_json(to_json(h));
  CHECK(*back.threshold == *h.threshold);
  CHECK(back.total_weight_seen == h.total_weight_seen);
}

TEST_CASE("label records represent abstention as null") {
  LabelRecord r;
  r.content_id = "x";
  r.provider_version = "v2";
  auto j = to_json(r);
  CHECK(j.at("label").is_null());
  auto back = label_record_from_json(j);
  CHECK(!back.label.has_value());

  r.label = 1;
  r.confidence = 0.75;
  back = label_record_from_json(to_json(r));
  CHECK(*back.label == 1);
  CHECK(*back.confidence == 0.75);

  json bad = {{"content_id", "x"}, {"label", 3}, {"provider_version", "v"}};
  CHECK_THROWS_AS(label_record_from_json(bad), Error);
}

TEST_CASE("estimate records carry flags and diagnostics") {
  EstimateRecord r;
  r.policy_id = "p";
  r.day = "2026-07-02";
  r.segment = "ALL";
  r.sample_id = "s1";
  r.estimate.theta_hat = 0.01;
  r.estimate.variance = 1e-7;
  r.estimate.ci_low = 0.009;
  r.estimate.ci_high = 0.011;
  r.estimate.raw_theta_hat = 0.01;
  r.estimate.raw_ci_low = 0.009;
  r.estimate.raw_ci_high = 0.011;
  r.estimate.ess = 321.5;
  r.estimate.sample_positive_rate = 0.2;
  r.estimate.n_draws = 400;
  r.estimate.kind = EstimatorKind::ht_hajek;
  r.estimate.flags.hajek_variance_approx = true;
  r.estimate.flags.ci_clamped = true;

  auto back = estimate_record_from_json(to_json(r));
  CHECK(back.segment == "ALL");
  CHECK(back.estimate.kind == EstimatorKind::ht_hajek);
  CHECK(back.estimate.flags.hajek_variance_approx);
  CHECK(back.estimate.flags.ci_clamped);
  CHECK(!back.estimate.flags.rogan_gladen_corrected);
  CHECK(back.estimate.theta_hat == r.estimate.theta_hat);
  CHECK(back.estimate.raw_ci_low == r.estimate.raw_ci_low);
  CHECK(back.estimate.n_draws == 400);
}

TEST_CASE("day parsing") {
  CHECK(parse_day("1970-01-01") == 0);
  CHECK(parse_day("1970-01-08") == 7);
  CHECK(format_day(parse_day("2026-02-28")) == "2026-02-28");
  CHECK(parse_day("2024-02-29") == parse_day("2024-02-28") + 1);  // leap day
  CHECK_THROWS_AS(parse_day("2026-13-01"), Error);
  CHECK_THROWS_AS(parse_day("2026-02-30"), Error);
  CHECK_THROWS_AS(parse_day("garbage"), Error);
  CHECK_THROWS_AS(parse_day("2026-1-2"), Error);
}

TEST_CASE("content hash is stable and key-order independent") {
  json a = {{"b", 1}, {"a", 2}};
  json b = {{"a", 2}, {"b", 1}};
  CHECK(content_hash(a) == content_hash(b));
  json c = {{"a", 2}, {"b", 2}};
  CHECK(content_hash(a) != content_hash(c));
}
