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

#ifndef PREVALENCE_ALERTING_HPP
#define PREVALENCE_ALERTING_HPP

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "prevalence/estimator.hpp"
#include "prevalence/types.hpp"

namespace prevalence {

/// One day's estimate in a policy time series. `day` is a day number
/// (days since 1970-01-01; see dates.hpp).
struct DayPoint {
  int day = 0;
  double theta = 0.0;
  double variance = 0.0;
};

/// Day-ordered series; gaps are allowed and surface as explicit errors or
/// no-decision results in the operations below.
class DailySeries {
 public:
  DailySeries() = default;
  explicit DailySeries(std::vector<DayPoint> points);

  const std::vector<DayPoint>& points() const { return points_; }
  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  std::optional<DayPoint> at_day(int day) const;
  bool has_gaps() const;

 private:
  std::vector<DayPoint> points_;
};

/// Weekly detection plan: two-sided level alpha, power 1-beta, 7-day windows,
/// and the resulting absolute/relative minimum detectable effects.
struct MdePlan {
  double alpha = 0.05;
  double power = 0.8;
  int window_days = 7;
  double baseline = 0.0;  // theta_0 for relative MDE
  double mde_abs = 0.0;
  double mde_rel = 0.0;
};

/// Daily sensitivity: half-width of the 95% CI.
double sensitivity_half_width(const PrevalenceEstimate& estimate);

struct EssSensitivity {
  double binomial = 0.0;                    // 1.96 sqrt(theta(1-theta)/ESS)
  std::optional<double> rare_event;         // 1.96 sqrt(theta/ESS) when theta < 0.01
};

/// Back-of-envelope sensitivity from an effective sample size.
EssSensitivity sensitivity_from_ess(double theta, double ess);

/// Mean of the 7 values ending at `day`; errors listing any missing dates.
double moving_average_7(const DailySeries& series, int day);

/// Absolute weekly MDE (z_{1-alpha/2} + z_{power}) * sqrt(2/7) * sigma for a
/// two-window comparison of 7-day means with daily noise sigma.
double mde_absolute(double sigma, double alpha, double power);

/// Relative weekly MDE [(z_{1-alpha/2}+z_{power}) / z_{1-alpha/2}] * sqrt(2/7)
/// * half_width / baseline. The leading coefficient is ~0.764 at alpha=0.05,
/// power=0.8.
double mde_relative(double half_width, double baseline, double alpha, double power);

/// Variance inflation of a 7-day mean under lag correlations rho_1..rho_6:
/// 1 + 2 * sum (1 - l/7) rho_l. Errors if the factor is not positive.
double variance_inflation(std::span<const double> autocorrelations);

/// Sample autocorrelations at lags 1..6 of the series (mean-removed residuals
/// by default). Requires at least 28 consecutive days.
std::array<double, 6> estimate_autocorrelation(const DailySeries& series,
                                               bool mean_removed = true);

struct AlertDecision {
  enum class Outcome { fire, quiet, no_decision };
  Outcome outcome = Outcome::no_decision;
  double delta = 0.0;          // recent mean - previous mean
  double threshold = 0.0;      // plan.mde_abs
  double mean_recent = 0.0;
  double mean_previous = 0.0;
  int recent_end_day = 0;
  int previous_end_day = 0;
  std::vector<int> missing_days;  // why no_decision, when applicable
};

/// Compare the mean of the last 7 days against the preceding 7-day window
/// (separated by gap_days, 0 = adjacent) and fire when |delta| exceeds the
/// plan's absolute MDE. Incomplete windows yield no_decision, not an error.
AlertDecision evaluate_alert(const DailySeries& series, const MdePlan& plan, int gap_days = 0);

}  // namespace prevalence

#endif  // PREVALENCE_ALERTING_HPP
