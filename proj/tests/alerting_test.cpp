#include <doctest.h>

#include <cmath>
#include <vector>

#include "prevalence/alerting.hpp"
#include "prevalence/dates.hpp"
#include "prevalence/numeric.hpp"
#include "prevalence/rng.hpp"
#include "oracles.hpp"

using namespace prevalence;

namespace {

DailySeries make_series(int start_day, const std::vector<double>& thetas, double variance = 0.0) {
  std::vector<DayPoint> points;
  for (std::size_t i = 0; i < thetas.size(); ++i)
    points.push_back(DayPoint{start_day + static_cast<int>(i), thetas[i], variance});
  return DailySeries(std::move(points));
}

}  // namespace

TEST_CASE("normal quantile matches the bisection oracle") {
  for (double p : {0.001, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999}) {
    CHECK(numeric::normal_quantile(p) ==
          doctest::Approx(oracles::normal_quantile_bisect(p)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(numeric::normal_quantile(0.0), Error);
  CHECK_THROWS_AS(numeric::normal_quantile(1.0), Error);
}

TEST_CASE("sensitivity is the CI half-width") {
  PrevalenceEstimate e;
  e.variance = 0.0;
  CHECK(sensitivity_half_width(e) == 0.0);
  e.variance = 1e-8;
  CHECK(sensitivity_half_width(e) == doctest::Approx(1.96e-4).epsilon(1e-12));
  e.raw_theta_hat = 0.4;
  e.raw_ci_low = 0.4 - 1.96e-4;
  e.raw_ci_high = 0.4 + 1.96e-4;
  CHECK(sensitivity_half_width(e) ==
        doctest::Approx((e.raw_ci_high - e.raw_ci_low) / 2.0).epsilon(1e-12));
}

TEST_CASE("ess-based sensitivity approximation") {
  auto s = sensitivity_from_ess(0.5, 100.0);
  CHECK(s.binomial == doctest::Approx(0.098).epsilon(1e-12));
  CHECK(!s.rare_event);

  CHECK(sensitivity_from_ess(0.0, 50.0).binomial == 0.0);

  SUBCASE("doubling the effective sample size shrinks width by sqrt(2)") {
    const double h1 = sensitivity_from_ess(0.3, 1000.0).binomial;
    const double h2 = sensitivity_from_ess(0.3, 2000.0).binomial;
    CHECK(h1 / h2 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("rare-event simplification appears below one percent") {
    auto rare = sensitivity_from_ess(0.005, 4000.0);
    REQUIRE(rare.rare_event.has_value());
    CHECK(*rare.rare_event == doctest::Approx(1.96 * std::sqrt(0.005 / 4000.0)).epsilon(1e-12));
    CHECK(*rare.rare_event >= rare.binomial);
  }
}

TEST_CASE("seven-day moving average") {
  const int day0 = parse_day("2026-03-01");
  SUBCASE("constant series") {
    auto series = make_series(day0, std::vector<double>(10, 0.42));
    CHECK(moving_average_7(series, day0 + 9) == doctest::Approx(0.42).epsilon(1e-15));
  }
  SUBCASE("arithmetic series 1..7 averages to 4") {
    auto series = make_series(day0, {1, 2, 3, 4, 5, 6, 7});
    CHECK(moving_average_7(series, day0 + 6) == doctest::Approx(4.0).epsilon(1e-15));
  }
  SUBCASE("gaps are reported with the missing dates") {
    std::vector<DayPoint> points;
    for (int i = 0; i < 7; ++i) {
      if (i == 3) continue;
      points.push_back(DayPoint{day0 + i, 0.1, 0.0});
    }
    DailySeries series{std::move(points)};
    CHECK_THROWS_WITH_AS(moving_average_7(series, day0 + 6),
                         doctest::Contains(format_day(day0 + 3).c_str()), Error);
  }
  SUBCASE("smoothing divides the variance by seven") {
    // 1e5 simulated weeks of unit-variance noise.
    rng::SplitMix64 g(555);
    const int trials = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> week(7);
      for (auto& v : week) v = rng::next_normal(g);
      auto series = make_series(day0, week);
      const double ma = moving_average_7(series, day0 + 6);
      sum += ma;
      sum_sq += ma * ma;
    }
    const double mean = sum / trials;
    const double var = sum_sq / trials - mean * mean;
    CHECK(std::abs(var - 1.0 / 7.0) / (1.0 / 7.0) < 0.05);
  }
}

TEST_CASE("absolute weekly minimum detectable effect") {
  CHECK(mde_absolute(0.0, 0.05, 0.8) == 0.0);
  SUBCASE("matches the quantile oracle") {
    const double expected = (oracles::normal_quantile_bisect(0.975) +
                             oracles::normal_quantile_bisect(0.8)) *
                            std::sqrt(2.0 / 7.0) * 0.001;
    CHECK(mde_absolute(0.001, 0.05, 0.8) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(mde_absolute(0.001, 0.05, 0.8) == doctest::Approx(0.0014975).epsilon(1e-4));
  }
  SUBCASE("linear in sigma") {
    CHECK(mde_absolute(0.002, 0.05, 0.8) ==
          doctest::Approx(2.0 * mde_absolute(0.001, 0.05, 0.8)).epsilon(1e-12));
  }
}

TEST_CASE("relative weekly minimum detectable effect") {
  SUBCASE("leading coefficient at the default operating point") {
    const double coefficient = mde_relative(1.0, 1.0, 0.05, 0.8);
    CHECK(std::abs(coefficient - 0.764) <= 0.001);
    CHECK(std::abs(coefficient - 0.7641) <= 0.001);
  }
  CHECK(mde_relative(0.0, 0.5, 0.05, 0.8) == 0.0);
  CHECK_THROWS_AS(mde_relative(0.01, 0.0, 0.05, 0.8), Error);

  SUBCASE("consistent with the absolute form") {
    for (double alpha : {0.05, 0.01, 0.1}) {
      for (double power : {0.8, 0.9, 0.5}) {
        const double h = 0.0123;
        const double theta0 = 0.004;
        const double z_test = numeric::normal_quantile(1.0 - alpha / 2.0);
        const double lhs = mde_relative(h, theta0, alpha, power) * theta0;
        const double rhs = mde_absolute(h / z_test, alpha, power);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("autocorrelation variance inflation") {
  std::vector<double> rho(6, 0.0);
  CHECK(variance_inflation(rho) == doctest::Approx(1.0).epsilon(1e-12));

  std::fill(rho.begin(), rho.end(), 1.0);
  CHECK(variance_inflation(rho) == doctest::Approx(7.0).epsilon(1e-12));

  std::fill(rho.begin(), rho.end(), 0.0);
  rho[0] = 0.5;
  CHECK(variance_inflation(rho) == doctest::Approx(1.0 + 2.0 * (6.0 / 7.0) * 0.5).epsilon(1e-12));

  SUBCASE("pathological negative correlation is flagged") {
    std::fill(rho.begin(), rho.end(), -1.0);
    CHECK_THROWS_AS(variance_inflation(rho), Error);
  }
  SUBCASE("monotone nondecreasing in each lag") {
    rng::SplitMix64 g(9);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> base(6);
      for (auto& r : base) r = -0.1 + 1.1 * g.next_unit();
      const double f0 = variance_inflation(base);
      const std::size_t lag = g.next_u64() % 6;
      auto bumped = base;
      bumped[lag] = std::min(1.0, bumped[lag] + 0.2);
      CHECK(variance_inflation(bumped) >= f0 - 1e-12);
    }
  }
  SUBCASE("wrong lag count rejected") {
    CHECK_THROWS_AS(variance_inflation(std::vector<double>(5, 0.0)), Error);
  }
}

TEST_CASE("sample autocorrelation of a daily series") {
  const int day0 = parse_day("2026-01-01");
  SUBCASE("white noise stays within the sampling band") {
    rng::SplitMix64 g(808);
    std::vector<double> values(365);
    for (auto& v : values) v = rng::next_normal(g);
    auto rho = estimate_autocorrelation(make_series(day0, values));
    for (double r : rho) CHECK(std::abs(r) < 3.0 / std::sqrt(365.0));
  }
  SUBCASE("constant series is degenerate") {
    CHECK_THROWS_AS(estimate_autocorrelation(make_series(day0, std::vector<double>(30, 0.2))),
                    Error);
  }
  SUBCASE("alternating series has lag-1 correlation near minus one") {
    std::vector<double> values(40);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = i % 2 == 0 ? 0.01 : -0.01;
    auto rho = estimate_autocorrelation(make_series(day0, values));
    CHECK(rho[0] == doctest::Approx(-1.0).epsilon(0.05));
  }
  SUBCASE("insufficient history names the minimum") {
    CHECK_THROWS_WITH_AS(estimate_autocorrelation(make_series(day0, std::vector<double>(20, 0.1))),
                         doctest::Contains("28"), Error);
  }
}

TEST_CASE("weekly alert evaluation") {
  const int day0 = parse_day("2026-05-01");
  MdePlan plan;
  plan.mde_abs = 0.01;

  SUBCASE("identical windows stay quiet") {
    auto series = make_series(day0, std::vector<double>(14, 0.3));
    auto d = evaluate_alert(series, plan);
    CHECK(d.outcome == AlertDecision::Outcome::quiet);
    CHECK(d.delta == 0.0);
  }
  SUBCASE("a step of twice the threshold fires") {
    std::vector<double> values(14, 0.3);
    for (int i = 7; i < 14; ++i) values[i] = 0.3 + 2.0 * plan.mde_abs;
    auto d = evaluate_alert(make_series(day0, values), plan);
    CHECK(d.outcome == AlertDecision::Outcome::fire);
    CHECK(d.delta == doctest::Approx(2.0 * plan.mde_abs));
    CHECK(d.threshold == plan.mde_abs);
  }
  SUBCASE("incomplete windows produce a flagged no-decision") {
    std::vector<DayPoint> points;
    for (int i = 0; i < 14; ++i) {
      if (i == 2) continue;
      points.push_back(DayPoint{day0 + i, 0.3, 0.0});
    }
    auto d = evaluate_alert(DailySeries{std::move(points)}, plan);
    CHECK(d.outcome == AlertDecision::Outcome::no_decision);
    REQUIRE(d.missing_days.size() == 1);
    CHECK(d.missing_days[0] == day0 + 2);
  }
  SUBCASE("decision is invariant to a common level shift") {
    std::vector<double> values(14, 0.3);
    for (int i = 7; i < 14; ++i) values[i] = 0.3045;
    auto d1 = evaluate_alert(make_series(day0, values), plan);
    for (auto& v : values) v += 0.2;
    auto d2 = evaluate_alert(make_series(day0, values), plan);
    CHECK(d1.outcome == d2.outcome);
    CHECK(d1.delta == doctest::Approx(d2.delta).epsilon(1e-12));
  }
  SUBCASE("a gap between windows shifts the comparison window") {
    std::vector<double> values(17, 0.3);
    auto d = evaluate_alert(make_series(day0, values), plan, 3);
    CHECK(d.outcome == AlertDecision::Outcome::quiet);
    CHECK(d.previous_end_day == day0 + 16 - 7 - 3);
  }
  SUBCASE("false-alarm rate under the null matches the test level") {
    // With power 0.5 the absolute MDE equals the alpha-level critical value,
    // so firing on |delta| > mde_abs is an exact alpha-level test.
    const double alpha = 0.05;
    const double sigma = 0.01;
    MdePlan null_plan;
    null_plan.alpha = alpha;
    null_plan.power = 0.5;
    null_plan.mde_abs = mde_absolute(sigma, alpha, 0.5);

    rng::SplitMix64 g(31415);
    const int trials = 10000;
    int fires = 0;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> values(14);
      for (auto& v : values) v = 0.2 + sigma * rng::next_normal(g);
      if (evaluate_alert(make_series(day0, values), null_plan).outcome ==
          AlertDecision::Outcome::fire)
        ++fires;
    }
    const double rate = static_cast<double>(fires) / trials;
    CHECK(std::abs(rate - alpha) < 0.01);
  }
}
