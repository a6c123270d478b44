#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "prevalence/sampler.hpp"
#include "oracles.hpp"

using namespace prevalence;

namespace {

ContentRecord make_record(std::string id, std::uint64_t impressions,
                          std::optional<double> score = std::nullopt) {
  ContentRecord r;
  r.content_id = std::move(id);
  r.impressions = impressions;
  r.score = score;
  return r;
}

SamplingConfig make_config(std::uint64_t m, double nu, double gamma, std::uint64_t seed = 7) {
  SamplingConfig c;
  c.sample_size = m;
  c.impression_exponent = nu;
  c.score_exponent = gamma;
  c.score_floor = 1e-6;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("weight formula matches the design regimes") {
  SUBCASE("ml-assisted") {
    auto c = make_config(1, 1.0, 1.0);
    CHECK(compute_weight(make_record("a", 10, 0.5), c, 0.3) == doctest::Approx(5.00001).epsilon(1e-12));
  }
  SUBCASE("near-uniform when both exponents are zero") {
    auto c = make_config(1, 0.0, 0.0);
    CHECK(compute_weight(make_record("a", 7, 0.3), c, 0.3) ==
          doctest::Approx(1.0 + 1e-6).epsilon(1e-15));
  }
  SUBCASE("exposure-only when the score exponent is zero") {
    auto c = make_config(1, 1.0, 0.0);
    CHECK(compute_weight(make_record("a", 12, 0.9), c, 0.3) ==
          doctest::Approx(12.0 * (1.0 + 1e-6)).epsilon(1e-15));
  }
  SUBCASE("score exponent zero yields probabilities proportional to impressions exactly") {
    auto c = make_config(1, 1.0, 0.0);
    std::vector<std::uint64_t> impressions = {3, 17, 40, 1};
    std::vector<double> weights;
    double total = 0.0, total_c = 0.0;
    for (std::size_t i = 0; i < impressions.size(); ++i) {
      weights.push_back(compute_weight(make_record("u" + std::to_string(i), impressions[i],
                                                   0.1 + 0.2 * static_cast<double>(i)),
                                       c, 0.5));
      total += weights.back();
      total_c += static_cast<double>(impressions[i]);
    }
    for (std::size_t i = 0; i < impressions.size(); ++i) {
      CHECK(weights[i] / total ==
            doctest::Approx(static_cast<double>(impressions[i]) / total_c).epsilon(1e-12));
    }
  }
  SUBCASE("uniform regime gives every unit the same weight") {
    auto c = make_config(1, 0.0, 0.0);
    CHECK(compute_weight(make_record("a", 1, 0.01), c, 0.5) ==
          compute_weight(make_record("b", 100000, 0.99), c, 0.5));
  }
  SUBCASE("imputed score used only when the record has none") {
    auto c = make_config(1, 1.0, 1.0);
    CHECK(compute_weight(make_record("a", 10), c, 0.25) ==
          doctest::Approx(10.0 * (0.25 + 1e-6)));
  }
  SUBCASE("overflow is rejected with the unit named") {
    auto c = make_config(1, 5000.0, 0.0);
    CHECK_THROWS_WITH_AS(compute_weight(make_record("hot-item", 1000000, 0.5), c, 0.5),
                         doctest::Contains("hot-item"), Error);
  }
}

TEST_CASE("score imputation") {
  ScoreImputation day_median;
  SUBCASE("median of present scores") {
    std::vector<ContentRecord> records = {make_record("a", 1, 0.2), make_record("b", 1, 0.4),
                                          make_record("c", 1)};
    auto scores = impute_scores(records, day_median);
    CHECK(scores[0] == 0.2);
    CHECK(scores[1] == 0.4);
    CHECK(scores[2] == doctest::Approx(0.3));
  }
  SUBCASE("fixed policy") {
    ScoreImputation fixed{ScoreImputation::Kind::fixed, 0.1};
    std::vector<ContentRecord> records = {make_record("a", 1, 0.5), make_record("b", 1)};
    auto scores = impute_scores(records, fixed);
    CHECK(scores[1] == 0.1);
  }
  SUBCASE("no scores at all under day_median is an error") {
    std::vector<ContentRecord> records = {make_record("a", 1), make_record("b", 1)};
    CHECK_THROWS_WITH_AS(impute_scores(records, day_median), doctest::Contains("fixed"), Error);
  }
}

TEST_CASE("reservoir keys") {
  CHECK(reservoir_key(1.0, std::exp(-1.0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(reservoir_key(2.0, std::exp(-1.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(reservoir_key(5.0, 1.0) == 0.0);
  CHECK_THROWS_AS(reservoir_key(1.0, 0.0), Error);
  CHECK_THROWS_AS(reservoir_key(0.0, 0.5), Error);
}

TEST_CASE("reservoir keeps the smallest keys") {
  Reservoir r(make_config(2, 1.0, 0.0));
  r.offer_keyed(make_record("a", 1), 1.0, 3.0);
  r.offer_keyed(make_record("b", 1), 1.0, 1.0);
  r.offer_keyed(make_record("c", 1), 1.0, 2.0);
  auto entries = r.sorted_entries();
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].key == 1.0);
  CHECK(entries[1].key == 2.0);
  CHECK(r.threshold() == 2.0);
  CHECK(r.items_seen() == 3);
  CHECK(r.total_weight_seen() == doctest::Approx(3.0));
}

TEST_CASE("underfull reservoir has no threshold and acts as a census") {
  Reservoir r(make_config(3, 1.0, 0.0));
  r.offer_keyed(make_record("a", 1), 1.0, 0.5);
  r.offer_keyed(make_record("b", 1), 1.0, 0.25);
  CHECK(r.size() == 2);
  CHECK_THROWS_AS(r.threshold(), Error);
  auto draws = r.draws();
  REQUIRE(draws.size() == 2);
  CHECK(*draws[0].inclusion_probability == 1.0);
}

TEST_CASE("duplicate ids in one stream are rejected") {
  Reservoir r(make_config(4, 1.0, 0.0));
  r.offer(make_record("a", 3, 0.5), 0.5);
  CHECK_THROWS_WITH_AS(r.offer(make_record("a", 3, 0.5), 0.5), doctest::Contains("duplicate"),
                       Error);
}

TEST_CASE("retention frequencies match the exponential-race oracle") {
  // Oracle first: exact inclusion probabilities for weights {1,1,2,4}, m=2.
  const std::vector<double> weights = {1.0, 1.0, 2.0, 4.0};
  const auto oracle = oracles::exact_inclusion_probabilities(weights, 2);
  CHECK(oracle[3] == doctest::Approx(0.80952380952).epsilon(1e-9));
  CHECK(oracle[0] + oracle[1] + oracle[2] + oracle[3] == doctest::Approx(2.0).epsilon(1e-12));

  const int runs = 1000000;
  std::vector<int> retained_count(4, 0);
  auto config = make_config(2, 1.0, 0.0);
  for (int run = 0; run < runs; ++run) {
    config.seed = rng::derive_seed(99, run);
    Reservoir r(config);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      ContentRecord record = make_record("item" + std::to_string(i), 1);
      r.offer_keyed(std::move(record), weights[i],
                    reservoir_key(weights[i], rng::item_uniform(config.seed, "item" + std::to_string(i))));
    }
    for (const auto& e : r.sorted_entries()) {
      retained_count[static_cast<std::size_t>(e.record.content_id.back() - '0')]++;
    }
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double empirical = static_cast<double>(retained_count[i]) / runs;
    const double se = std::sqrt(oracle[i] * (1.0 - oracle[i]) / runs);
    INFO("item ", i, " empirical ", empirical, " oracle ", oracle[i]);
    CHECK(std::abs(empirical - oracle[i]) <= std::max(3.0 * se, 1e-9));
    CHECK(std::abs(empirical - oracle[i]) < 0.005);
  }
}

TEST_CASE("inclusion probability approximation") {
  CHECK(inclusion_probability(1.0, 0.01) == doctest::Approx(0.0099502).epsilon(1e-4));
  CHECK(inclusion_probability(2000.0, 0.01) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_THROWS_AS(inclusion_probability(1.0, 0.0), Error);
  CHECK_THROWS_AS(inclusion_probability(0.0, 0.01), Error);
}

TEST_CASE("ppswr draws carry the normalized probabilities") {
  SUBCASE("two equal weights") {
    std::vector<ContentRecord> records = {make_record("a", 1), make_record("b", 1)};
    std::vector<double> weights = {1.0, 1.0};
    auto draws = ppswr_sample(records, weights, 10, 3);
    for (const auto& d : draws) CHECK(*d.draw_probability == doctest::Approx(0.5));
  }
  SUBCASE("empirical frequencies for weights {1,3}") {
    std::vector<ContentRecord> records = {make_record("a", 1), make_record("b", 1)};
    std::vector<double> weights = {1.0, 3.0};
    const std::uint64_t m = 1000000;
    auto draws = ppswr_sample(records, weights, m, 11);
    std::uint64_t b_count = 0;
    for (const auto& d : draws) {
      if (d.content_id == "b") {
        ++b_count;
        CHECK(*d.draw_probability == doctest::Approx(0.75));
      }
    }
    const double freq = static_cast<double>(b_count) / static_cast<double>(m);
    CHECK(std::abs(freq - 0.75) < 0.002);
  }
  SUBCASE("single item is drawn every time with probability one") {
    std::vector<ContentRecord> records = {make_record("only", 2)};
    std::vector<double> weights = {5.0};
    auto draws = ppswr_sample(records, weights, 5, 1);
    REQUIRE(draws.size() == 5);
    for (const auto& d : draws) {
      CHECK(d.content_id == "only");
      CHECK(*d.draw_probability == 1.0);
    }
  }
  SUBCASE("empty population is an error") {
    CHECK_THROWS_AS(ppswr_sample({}, {}, 3, 1), Error);
  }
}

namespace {

std::vector<ContentRecord> synthetic_stream(std::size_t n) {
  std::vector<ContentRecord> records;
  records.reserve(n);
  rng::SplitMix64 g(4242);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = make_record("c" + std::to_string(i), 1 + (g.next_u64() % 50));
    r.score = 0.05 + 0.9 * g.next_unit();
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<std::string> retained_ids(const Reservoir& r) {
  std::vector<std::string> ids;
  for (const auto& e : r.sorted_entries()) ids.push_back(e.record.content_id);
  return ids;
}

}  // namespace

TEST_CASE("retained set is independent of stream order") {
  auto records = synthetic_stream(500);
  auto config = make_config(40, 1.0, 1.0, 123);

  Reservoir forward(config);
  for (const auto& r : records) forward.offer(r, 0.5);

  // deterministic shuffle
  auto shuffled = records;
  rng::SplitMix64 g(777);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[g.next_u64() % i]);

  Reservoir permuted(config);
  for (const auto& r : shuffled) permuted.offer(r, 0.5);

  CHECK(retained_ids(forward) == retained_ids(permuted));
  CHECK(forward.threshold() == permuted.threshold());
}

TEST_CASE("merge equals single-stream processing and is associative") {
  auto records = synthetic_stream(300);
  auto config = make_config(25, 1.0, 1.0, 5);

  Reservoir whole(config);
  for (const auto& r : records) whole.offer(r, 0.5);

  Reservoir a(config), b(config), c(config);
  for (std::size_t i = 0; i < records.size(); ++i) {
    (i % 3 == 0 ? a : i % 3 == 1 ? b : c).offer(records[i], 0.5);
  }
  auto merged = Reservoir::merge(Reservoir::merge(a, b), c);
  auto merged_right = Reservoir::merge(a, Reservoir::merge(b, c));

  CHECK(retained_ids(merged) == retained_ids(whole));
  CHECK(retained_ids(merged_right) == retained_ids(whole));
  CHECK(merged.threshold() == whole.threshold());
  CHECK(merged.items_seen() == whole.items_seen());
  CHECK(merged.total_weight_seen() == doctest::Approx(whole.total_weight_seen()).epsilon(1e-12));

  SUBCASE("merge with an empty reservoir is the identity") {
    Reservoir empty(config);
    auto same = Reservoir::merge(whole, empty);
    CHECK(retained_ids(same) == retained_ids(whole));
  }
  SUBCASE("capacity mismatch is rejected") {
    Reservoir other(make_config(10, 1.0, 1.0, 5));
    CHECK_THROWS_AS(Reservoir::merge(whole, other), Error);
  }
  SUBCASE("shared ids across shards are rejected") {
    Reservoir dup(config);
    dup.offer(records[0], 0.5);
    CHECK_THROWS_AS(Reservoir::merge(whole, dup), Error);
  }
}

TEST_CASE("reservoir state stays at capacity on long streams") {
  auto config = make_config(64, 1.0, 0.0, 99);
  Reservoir r(config);
  rng::SplitMix64 g(1);
  for (std::size_t i = 0; i < 100000; ++i) {
    r.offer(make_record("s" + std::to_string(i), 1 + (g.next_u64() % 9)), 0.5);
  }
  CHECK(r.size() == 64);
  CHECK(r.items_seen() == 100000);
}

TEST_CASE("poissonized inclusion tracks weight share at small sampling fractions") {
  // 1000 units, m = 10 (1% fraction). The formula pi = 1 - exp(-w tau) should
  // track both the empirical retention frequency of a heavy unit and the
  // weight-proportionality pi_i/pi_j ~ w_i/w_j.
  const std::size_t n = 1000;
  const std::size_t m = 10;
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = 1.0 + 0.1 * static_cast<double>(i % 10);
  weights[0] = 15.0;  // heavy unit under test
  weights[1] = 7.5;   // half its weight

  const int runs = 40000;
  int retained0 = 0;
  double formula0 = 0.0, formula1 = 0.0;
  auto config = make_config(m, 1.0, 0.0);
  for (int run = 0; run < runs; ++run) {
    config.seed = rng::derive_seed(31337, run);
    Reservoir r(config);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "u" + std::to_string(i);
      r.offer_keyed(make_record(id, 1), weights[i],
                    reservoir_key(weights[i], rng::item_uniform(config.seed, id)));
    }
    const double tau = r.threshold();
    formula0 += inclusion_probability(weights[0], tau);
    formula1 += inclusion_probability(weights[1], tau);
    for (const auto& e : r.sorted_entries()) {
      if (e.record.content_id == "u0") ++retained0;
    }
  }
  const double empirical0 = static_cast<double>(retained0) / runs;
  formula0 /= runs;
  formula1 /= runs;
  INFO("empirical ", empirical0, " formula ", formula0);
  CHECK(std::abs(formula0 - empirical0) / empirical0 < 0.05);
  // proportionality: pi ratio matches the weight ratio within 2%
  CHECK(std::abs(formula0 / formula1 - 2.0) / 2.0 < 0.02);
}
