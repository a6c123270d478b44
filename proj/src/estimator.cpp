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

#include "prevalence/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "prevalence/numeric.hpp"

namespace prevalence {

namespace {

constexpr double kZ95 = 1.96;

void require_positive_probs(std::span<const WeightedObs> obs) {
  for (const auto& o : obs) {
    if (!(o.p > 0.0))
      throw Error(Errc::invalid_argument, "estimator requires strictly positive probabilities");
  }
}

double clamp_unit(double v) { return std::min(1.0, std::max(0.0, v)); }

/// Fill reporting fields from the raw ratio and variance.
void finalize(PrevalenceEstimate& e) {
  const auto [lo, hi] = confidence_interval(e.raw_theta_hat, e.variance);
  e.raw_ci_low = lo;
  e.raw_ci_high = hi;
  e.theta_hat = clamp_unit(e.raw_theta_hat);
  e.flags.theta_clamped = e.theta_hat != e.raw_theta_hat;
  if (e.flags.variance_unavailable) {
    e.ci_low = e.theta_hat;
    e.ci_high = e.theta_hat;
    return;
  }
  e.ci_low = clamp_unit(lo);
  e.ci_high = clamp_unit(hi);
  e.flags.ci_clamped = e.ci_low != lo || e.ci_high != hi;
}

void fill_diagnostics(PrevalenceEstimate& e, std::span<const WeightedObs> obs) {
  std::uint64_t contributing = 0;
  std::uint64_t positive = 0;
  for (const auto& o : obs) {
    if (o.x > 0.0) {
      ++contributing;
      if (o.z > 0.0) ++positive;
    }
  }
  e.n_draws = contributing;
  e.sample_positive_rate =
      contributing == 0 ? 0.0 : static_cast<double>(positive) / static_cast<double>(contributing);
  // Zero-x draws contribute nothing to either Kish sum, so ESS <= n_draws.
  e.ess = contributing == 0 ? 0.0 : kish_ess(obs);
}

}  // namespace

PrevalenceEstimate hh_ratio(std::span<const WeightedObs> obs) {
  if (obs.empty()) throw Error(Errc::estimation, "no draws to estimate from");
  require_positive_probs(obs);
  const double m = static_cast<double>(obs.size());
  numeric::CompensatedSum num, den;
  for (const auto& o : obs) {
    num.add(o.z / o.p);
    den.add(o.x / o.p);
  }
  const double z_mean = num.value() / m;
  const double x_mean = den.value() / m;
  if (x_mean == 0.0)
    throw Error(Errc::estimation, "undefined estimate: weighted impression total is zero");

  PrevalenceEstimate e;
  e.kind = EstimatorKind::hh_ratio;
  e.raw_theta_hat = z_mean / x_mean;
  if (obs.size() >= 2) {
    e.variance = variance_taylor(obs, e.raw_theta_hat);
  } else {
    e.flags.variance_unavailable = true;
  }
  fill_diagnostics(e, obs);
  finalize(e);
  return e;
}

std::vector<double> residuals(std::span<const WeightedObs> obs, double theta_hat) {
  std::vector<double> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back((o.z - theta_hat * o.x) / o.p);
  return out;
}

double variance_taylor(std::span<const WeightedObs> obs, double theta_hat) {
  const std::size_t m = obs.size();
  if (m < 2) throw Error(Errc::insufficient_data, "variance needs at least 2 draws");
  require_positive_probs(obs);
  numeric::CompensatedSum den;
  for (const auto& o : obs) den.add(o.x / o.p);
  const double x_mean = den.value() / static_cast<double>(m);
  if (x_mean == 0.0)
    throw Error(Errc::estimation, "undefined variance: weighted impression total is zero");

  const std::vector<double> r = residuals(obs, theta_hat);
  const double r_bar = numeric::compensated_total(r) / static_cast<double>(m);
  numeric::CompensatedSum ss;
  for (double ri : r) ss.add((ri - r_bar) * (ri - r_bar));
  const double md = static_cast<double>(m);
  return ss.value() / (x_mean * x_mean * md * (md - 1.0));
}

std::pair<double, double> confidence_interval(double theta_hat, double variance) {
  if (!(variance >= 0.0)) throw Error(Errc::invalid_argument, "variance must be >= 0");
  const double half = kZ95 * std::sqrt(variance);
  return {theta_hat - half, theta_hat + half};
}

double kish_ess(std::span<const WeightedObs> obs) {
  require_positive_probs(obs);
  numeric::CompensatedSum sum, sum_sq;
  for (const auto& o : obs) {
    const double a = o.x / o.p;
    sum.add(a);
    sum_sq.add(a * a);
  }
  if (sum_sq.value() == 0.0)
    throw Error(Errc::estimation, "effective sample size undefined: all weights zero");
  return sum.value() * sum.value() / sum_sq.value();
}

std::vector<WeightedObs> segment_observations(std::span<const SampleDraw> draws,
                                              const std::string& segment,
                                              DrawWeighting weighting) {
  const bool all = segment == kAllSegment;
  const double m = static_cast<double>(draws.size());
  std::vector<WeightedObs> out;
  out.reserve(draws.size());
  for (const auto& d : draws) {
    if (!d.label)
      throw Error(Errc::invalid_argument,
                  "unlabeled draw '" + d.content_id + "'; run labeling before estimation");
    double p;
    if (weighting == DrawWeighting::draw_probability) {
      if (!d.draw_probability)
        throw Error(Errc::invalid_argument,
                    "draw '" + d.content_id + "' carries no draw probability");
      p = *d.draw_probability;
    } else {
      if (!d.inclusion_probability)
        throw Error(Errc::invalid_argument,
                    "draw '" + d.content_id +
                        "' carries no inclusion probability; supply the reservoir threshold");
      // Pseudo draw probability pi/m turns the Hansen--Hurwitz mean
      // (1/m) sum z/p into the Horvitz--Thompson total sum z/pi.
      p = *d.inclusion_probability / m;
    }
    double x;
    if (all) {
      x = static_cast<double>(d.impressions);
    } else {
      auto it = d.segment_impressions.find(segment);
      x = it == d.segment_impressions.end() ? 0.0 : static_cast<double>(it->second);
    }
    out.push_back(WeightedObs{x, *d.label ? x : 0.0, p});
  }
  return out;
}

PrevalenceEstimate hh_ratio(std::span<const SampleDraw> draws) {
  auto obs = segment_observations(draws, kAllSegment, DrawWeighting::draw_probability);
  return hh_ratio(obs);
}

PrevalenceEstimate ht_hajek(std::span<const SampleDraw> draws) {
  auto obs = segment_observations(draws, kAllSegment, DrawWeighting::inclusion_probability);
  PrevalenceEstimate e = hh_ratio(obs);
  e.kind = EstimatorKind::ht_hajek;
  e.flags.hajek_variance_approx = true;
  return e;
}

PrevalenceEstimate segment_estimate_known_denominator(std::span<const SampleDraw> draws,
                                                      const std::string& segment,
                                                      double denominator,
                                                      DrawWeighting weighting) {
  if (!(denominator > 0.0))
    throw Error(Errc::segment_empty, "segment '" + segment + "' has zero impressions in logs");
  auto obs = segment_observations(draws, segment, weighting);
  if (obs.empty()) throw Error(Errc::estimation, "no draws to estimate from");
  const double m = static_cast<double>(obs.size());

  numeric::CompensatedSum num;
  for (const auto& o : obs) num.add(o.z / o.p);
  const double numerator = num.value() / m;

  PrevalenceEstimate e;
  e.kind = EstimatorKind::ht_known_denominator;
  e.flags.hajek_variance_approx = weighting == DrawWeighting::inclusion_probability;
  e.raw_theta_hat = numerator / denominator;
  if (obs.size() >= 2) {
    // Var(N) / D^2: the denominator is a known constant.
    const double u_bar = numerator;
    numeric::CompensatedSum ss;
    for (const auto& o : obs) {
      const double u = o.z / o.p;
      ss.add((u - u_bar) * (u - u_bar));
    }
    const double var_num = ss.value() / (m * (m - 1.0));
    e.variance = var_num / (denominator * denominator);
  } else {
    e.flags.variance_unavailable = true;
  }
  fill_diagnostics(e, obs);
  finalize(e);
  return e;
}

PrevalenceEstimate segment_estimate_ratio(std::span<const SampleDraw> draws,
                                          const std::string& segment, DrawWeighting weighting) {
  auto obs = segment_observations(draws, segment, weighting);
  const bool any_exposure = std::any_of(obs.begin(), obs.end(),
                                        [](const WeightedObs& o) { return o.x > 0.0; });
  if (!any_exposure)
    throw Error(Errc::segment_empty,
                "segment '" + segment + "' has no sampled impressions (insufficient sample)");
  PrevalenceEstimate e = hh_ratio(obs);
  if (weighting == DrawWeighting::inclusion_probability) {
    e.kind = EstimatorKind::ht_hajek;
    e.flags.hajek_variance_approx = true;
  }
  return e;
}

PrevalenceEstimate rogan_gladen_correct(const PrevalenceEstimate& estimate,
                                        const LabelerQuality& quality) {
  const double r = quality.sensitivity;
  const double f = quality.false_positive_rate;
  if (!(r > f))
    throw Error(Errc::estimation,
                "label-error correction undefined: sensitivity must exceed false positive rate");
  const double theta_l = estimate.raw_theta_hat;
  const double span = r - f;

  PrevalenceEstimate e = estimate;
  e.raw_theta_hat = (theta_l - f) / span;
  // Delta method under independence of (theta_L, r, f).
  const double d_theta = 1.0 / span;
  const double d_r = -(theta_l - f) / (span * span);
  const double d_f = (theta_l - r) / (span * span);
  e.variance = d_theta * d_theta * estimate.variance +
               d_r * d_r * quality.sensitivity_se * quality.sensitivity_se +
               d_f * d_f * quality.fpr_se * quality.fpr_se;
  e.flags.rogan_gladen_corrected = true;
  e.flags.variance_unavailable = estimate.flags.variance_unavailable;
  finalize(e);
  return e;
}

}  // namespace prevalence
