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

#ifndef PREVALENCE_ESTIMATOR_HPP
#define PREVALENCE_ESTIMATOR_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prevalence/types.hpp"

namespace prevalence {

/// Segment key under which the full sample is reported.
inline constexpr const char* kAllSegment = "ALL";

enum class EstimatorKind { hh_ratio, ht_known_denominator, ht_hajek };

struct EstimateFlags {
  bool ci_clamped = false;            // reported CI truncated to [0,1]
  bool theta_clamped = false;         // reported point truncated to [0,1]
  bool variance_unavailable = false;  // fewer than 2 draws
  bool rogan_gladen_corrected = false;
  bool hajek_variance_approx = false;  // with-replacement variance reused for PPSWOR
};

/// Point estimate with uncertainty and weighting diagnostics for one
/// (day, segment). Reported values are clamped to [0,1]; the raw ratio and
/// interval are kept alongside for diagnostics.
struct PrevalenceEstimate {
  double theta_hat = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double raw_theta_hat = 0.0;
  double raw_ci_low = 0.0;
  double raw_ci_high = 0.0;
  double ess = 0.0;                  // Kish effective sample size
  double sample_positive_rate = 0.0; // unweighted share of contributing draws with Y=1
  std::uint64_t n_draws = 0;         // draws contributing impressions to this scope
  EstimatorKind kind = EstimatorKind::hh_ratio;
  EstimateFlags flags;
};

/// Labeler decision quality estimated on a validation set: sensitivity r and
/// false positive rate f, with standard errors. Requires r > f.
struct LabelerQuality {
  double sensitivity = 1.0;
  double false_positive_rate = 0.0;
  double sensitivity_se = 0.0;
  double fpr_se = 0.0;
};

/// One draw's estimator inputs: exposure x, violating exposure z = x * Y, and
/// the probability the design assigns it (draw probability for
/// with-replacement designs; inclusion probability / m for PPSWOR, which
/// makes every with-replacement formula below apply unchanged).
struct WeightedObs {
  double x = 0.0;
  double z = 0.0;
  double p = 0.0;
};

/// Which probability field of SampleDraw feeds the estimator.
enum class DrawWeighting { draw_probability, inclusion_probability };

/// Hansen--Hurwitz ratio estimate over raw observations:
/// theta = sum(z/p) / sum(x/p), Taylor-linearized variance, 95% CI, Kish ESS.
PrevalenceEstimate hh_ratio(std::span<const WeightedObs> obs);

/// Taylor residuals r_i = (z_i - theta * x_i) / p_i. Their sum is zero by
/// construction when theta is the ratio estimate over the same draws.
std::vector<double> residuals(std::span<const WeightedObs> obs, double theta_hat);

/// Linearized variance of the ratio estimate; requires at least two draws.
double variance_taylor(std::span<const WeightedObs> obs, double theta_hat);

/// Unclamped 95% interval theta +- 1.96 sqrt(variance).
std::pair<double, double> confidence_interval(double theta_hat, double variance);

/// Kish effective sample size (sum a)^2 / sum a^2 with a = x/p. Errors when
/// every a is zero.
double kish_ess(std::span<const WeightedObs> obs);

/// --- Draw-based API -------------------------------------------------------

/// Observations for a segment (or kAllSegment) from labeled draws. All draws
/// must carry labels and the selected probability field.
std::vector<WeightedObs> segment_observations(std::span<const SampleDraw> draws,
                                              const std::string& segment,
                                              DrawWeighting weighting);

/// Global HH ratio estimate from labeled with-replacement draws.
PrevalenceEstimate hh_ratio(std::span<const SampleDraw> draws);

/// Horvitz--Thompson/Hajek ratio estimate from labeled PPSWOR draws, using
/// the stored inclusion probabilities. Variance reuses the with-replacement
/// machinery and is flagged as an approximation.
PrevalenceEstimate ht_hajek(std::span<const SampleDraw> draws);

/// Segment estimate when the segment's impression total is known exactly
/// from logs: only the numerator is estimated; variance is Var(N)/D^2.
PrevalenceEstimate segment_estimate_known_denominator(
    std::span<const SampleDraw> draws, const std::string& segment, double denominator,
    DrawWeighting weighting = DrawWeighting::draw_probability);

/// Segment estimate as a ratio of segment HH sums. Errors with a distinct
/// code when no sampled draw has impressions in the segment.
PrevalenceEstimate segment_estimate_ratio(std::span<const SampleDraw> draws,
                                          const std::string& segment,
                                          DrawWeighting weighting = DrawWeighting::draw_probability);

/// Rogan--Gladen label-error correction (theta_L - f) / (r - f). The
/// corrected variance combines sampling variance with validation uncertainty
/// on (r, f) by the delta method, assuming the three are independent (the
/// validation set is disjoint from the daily sample).
PrevalenceEstimate rogan_gladen_correct(const PrevalenceEstimate& estimate,
                                        const LabelerQuality& quality);

}  // namespace prevalence

#endif  // PREVALENCE_ESTIMATOR_HPP
