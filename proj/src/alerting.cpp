// Copyright 2026 The prevalence toolkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prevalence/alerting.hpp"

#include <algorithm>
#include <cmath>

#include "prevalence/dates.hpp"
#include "prevalence/numeric.hpp"

namespace prevalence {

namespace {

constexpr double kZ95 = 1.96;
constexpr int kWindow = 7;
constexpr int kMinAutocorrDays = 28;

double sqrt_two_sevenths() { return std::sqrt(2.0 / 7.0); }

void check_level(double alpha, double power) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::invalid_argument, "alpha must be in (0,1)");
  if (!(power > 0.0 && power < 1.0)) throw Error(Errc::invalid_argument, "power must be in (0,1)");
}

}  // namespace

DailySeries::DailySeries(std::vector<DayPoint> points) : points_(std::move(points)) {
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (points_[i - 1].day >= points_[i].day)
      throw Error(Errc::invalid_argument, "series days must be strictly increasing");
  }
}

std::optional<DayPoint> DailySeries::at_day(int day) const {
  auto it = std::lower_bound(points_.begin(), points_.end(), day,
                             [](const DayPoint& p, int d) { return p.day < d; });
  if (it == points_.end() || it->day != day) return std::nullopt;
  return *it;
}

bool DailySeries::has_gaps() const {
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (points_[i].day != points_[i - 1].day + 1) return true;
  }
  return false;
}

double sensitivity_half_width(const PrevalenceEstimate& estimate) {
  if (estimate.flags.variance_unavailable)
    throw Error(Errc::insufficient_data, "sensitivity undefined: variance unavailable");
  return kZ95 * std::sqrt(estimate.variance);
}

EssSensitivity sensitivity_from_ess(double theta, double ess) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw Error(Errc::invalid_argument, "theta must be in [0,1]");
  if (!(ess > 0.0)) throw Error(Errc::invalid_argument, "ess must be > 0");
  EssSensitivity s;
  s.binomial = kZ95 * std::sqrt(theta * (1.0 - theta) / ess);
  if (theta < 0.01) s.rare_event = kZ95 * std::sqrt(theta / ess);
  return s;
}

double moving_average_7(const DailySeries& series, int day) {
  std::vector<int> missing;
  numeric::CompensatedSum sum;
  for (int d = day - kWindow + 1; d <= day; ++d) {
    auto p = series.at_day(d);
    if (!p) {
      missing.push_back(d);
      continue;
    }
    sum.add(p->theta);
  }
  if (!missing.empty()) {
    std::string dates;
    for (int d : missing) {
      if (!dates.empty()) dates += ", ";
      dates += format_day(d);
    }
    throw Error(Errc::insufficient_data, "7-day window ending " + format_day(day) +
                                             " has gaps; missing: " + dates);
  }
  return sum.value() / static_cast<double>(kWindow);
}

double mde_absolute(double sigma, double alpha, double power) {
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "sigma must be >= 0");
  check_level(alpha, power);
  const double z_test = numeric::normal_quantile(1.0 - alpha / 2.0);
  const double z_power = numeric::normal_quantile(power);
  return (z_test + z_power) * sqrt_two_sevenths() * sigma;
}

double mde_relative(double half_width, double baseline, double alpha, double power) {
  if (!(baseline > 0.0))
    throw Error(Errc::invalid_argument, "relative MDE needs a positive baseline");
  if (!(half_width >= 0.0)) throw Error(Errc::invalid_argument, "half-width must be >= 0");
  check_level(alpha, power);
  const double z_test = numeric::normal_quantile(1.0 - alpha / 2.0);
  const double z_power = numeric::normal_quantile(power);
  return (z_test + z_power) / z_test * sqrt_two_sevenths() * (half_width / baseline);
}

double variance_inflation(std::span<const double> autocorrelations) {
  if (autocorrelations.size() != 6)
    throw Error(Errc::invalid_argument, "variance inflation expects lags 1..6");
  double factor = 1.0;
  for (std::size_t l = 1; l <= 6; ++l) {
    const double rho = autocorrelations[l - 1];
    if (!(rho >= -1.0 && rho <= 1.0))
      throw Error(Errc::invalid_argument, "autocorrelation out of [-1,1] at lag " +
                                              std::to_string(l));
    factor += 2.0 * (1.0 - static_cast<double>(l) / 7.0) * rho;
  }
  if (!(factor > 0.0))
    throw Error(Errc::estimation,
                "variance inflation factor is not positive; series flagged as pathological");
  return factor;
}

std::array<double, 6> estimate_autocorrelation(const DailySeries& series, bool mean_removed) {
  const auto& pts = series.points();
  if (pts.size() < kMinAutocorrDays)
    throw Error(Errc::insufficient_data,
                "autocorrelation needs at least " + std::to_string(kMinAutocorrDays) +
                    " days of history, have " + std::to_string(pts.size()));
  if (series.has_gaps())
    throw Error(Errc::insufficient_data, "autocorrelation needs a gap-free daily series");

  const std::size_t n = pts.size();
  double mean = 0.0;
  if (mean_removed) {
    numeric::CompensatedSum s;
    for (const auto& p : pts) s.add(p.theta);
    mean = s.value() / static_cast<double>(n);
  }
  numeric::CompensatedSum denom;
  for (const auto& p : pts) denom.add((p.theta - mean) * (p.theta - mean));
  if (denom.value() == 0.0)
    throw Error(Errc::estimation, "autocorrelation undefined for a constant series");

  std::array<double, 6> rho{};
  for (std::size_t lag = 1; lag <= 6; ++lag) {
    numeric::CompensatedSum num;
    for (std::size_t t = lag; t < n; ++t)
      num.add((pts[t].theta - mean) * (pts[t - lag].theta - mean));
    rho[lag - 1] = num.value() / denom.value();
  }
  return rho;
}

AlertDecision evaluate_alert(const DailySeries& series, const MdePlan& plan, int gap_days) {
  if (plan.window_days != kWindow)
    throw Error(Errc::invalid_argument, "alert windows are 7 days (the MDE formulas assume it)");
  if (gap_days < 0) throw Error(Errc::invalid_argument, "gap_days must be >= 0");

  AlertDecision decision;
  if (series.empty()) return decision;
  decision.recent_end_day = series.points().back().day;
  decision.previous_end_day = decision.recent_end_day - kWindow - gap_days;
  decision.threshold = plan.mde_abs;

  auto window_mean = [&](int end_day) -> std::optional<double> {
    numeric::CompensatedSum sum;
    bool complete = true;
    for (int d = end_day - kWindow + 1; d <= end_day; ++d) {
      auto p = series.at_day(d);
      if (!p) {
        decision.missing_days.push_back(d);
        complete = false;
        continue;
      }
      sum.add(p->theta);
    }
    if (!complete) return std::nullopt;
    return sum.value() / static_cast<double>(kWindow);
  };

  auto recent = window_mean(decision.recent_end_day);
  auto previous = window_mean(decision.previous_end_day);
  if (!recent || !previous) {
    decision.outcome = AlertDecision::Outcome::no_decision;
    return decision;
  }
  decision.mean_recent = *recent;
  decision.mean_previous = *previous;
  decision.delta = *recent - *previous;
  decision.outcome = std::abs(decision.delta) > plan.mde_abs ? AlertDecision::Outcome::fire
                                                             : AlertDecision::Outcome::quiet;
  return decision;
}

}  // namespace prevalence
