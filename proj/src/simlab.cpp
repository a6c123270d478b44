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

#include "prevalence/simlab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "prevalence/estimator.hpp"
#include "prevalence/numeric.hpp"
#include "prevalence/rng.hpp"
#include "prevalence/sampler.hpp"

namespace prevalence::simlab {

namespace {

constexpr std::uint64_t kTrialSalt = 0x53494d4c41422121ULL;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double scheme_score_exponent(SimScheme scheme, const SimExperimentSpec& experiment) {
  return scheme == SimScheme::pps ? 0.0 : experiment.score_exponent;
}

}  // namespace

SimPopulation generate_population(const SimPopulationSpec& spec) {
  if (spec.n < 1) throw Error(Errc::invalid_argument, "population size must be >= 1");
  if (!(spec.base_rate >= 0.0 && spec.base_rate <= 1.0))
    throw Error(Errc::invalid_argument, "base rate must be in [0,1]");
  if (!(spec.p_small >= 0.0 && spec.p_small <= 1.0))
    throw Error(Errc::invalid_argument, "mixture mass must be in [0,1]");
  if (!(spec.pareto_alpha > 0.0) || !(spec.pareto_xm > 0.0))
    throw Error(Errc::invalid_argument, "tail parameters must be positive");
  if (spec.beta_neg_a < 1.0 || spec.beta_neg_b < 1.0 || spec.beta_pos_a < 1.0 ||
      spec.beta_pos_b < 1.0)
    throw Error(Errc::invalid_argument, "score Beta parameters must be >= 1");

  SimPopulation pop;
  pop.units.resize(spec.n);
  rng::SplitMix64 g(spec.seed_pop);
  for (auto& unit : pop.units) {
    unit.positive = g.next_unit() < spec.base_rate;
    if (g.next_unit() < spec.p_small) {
      unit.impressions = 1 + static_cast<std::uint64_t>(g.next_unit() * 10.0);
      if (unit.impressions > 10) unit.impressions = 10;
    } else {
      // Pareto-II shift xm*(1+Lomax(alpha)) collapses to xm * U^{-1/alpha}
      // with U ~ Uniform(0,1]; rounded to the nearest count, at least 1.
      const double u = g.next_unit_open_low();
      const double tail = spec.pareto_xm * std::pow(u, -1.0 / spec.pareto_alpha);
      unit.impressions = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(tail)));
    }
    unit.score = unit.positive ? rng::next_beta(g, spec.beta_pos_a, spec.beta_pos_b)
                               : rng::next_beta(g, spec.beta_neg_a, spec.beta_neg_b);
    pop.total_impressions += unit.impressions;
    if (unit.positive) pop.violating_impressions += unit.impressions;
  }
  return pop;
}

std::vector<double> scheme_weights(const SimPopulation& population, SimScheme scheme,
                                   const SimExperimentSpec& experiment) {
  const double gamma = scheme_score_exponent(scheme, experiment);
  std::vector<double> weights(population.units.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const SimUnit& u = population.units[i];
    weights[i] = std::pow(static_cast<double>(u.impressions), experiment.impression_exponent) *
                 (std::pow(u.score, gamma) + experiment.score_floor);
    if (!std::isfinite(weights[i]) || !(weights[i] > 0.0))
      throw Error(Errc::estimation, "non-finite design weight in simulation population");
  }
  return weights;
}

SimResult run_trials(const SimPopulation& population, const SimExperimentSpec& experiment) {
  if (experiment.trials < 2)
    throw Error(Errc::invalid_argument, "need at least 2 trials for quantile widths");
  if (experiment.sample_sizes.empty())
    throw Error(Errc::invalid_argument, "no sample sizes configured");

  SimResult result;
  result.true_theta = population.true_theta();
  result.normalization_m =
      *std::max_element(experiment.sample_sizes.begin(), experiment.sample_sizes.end());

  const SimScheme schemes[] = {SimScheme::pps, SimScheme::ml_pps};
  DiscreteSampler pps_sampler(scheme_weights(population, SimScheme::pps, experiment));
  DiscreteSampler ml_sampler(scheme_weights(population, SimScheme::ml_pps, experiment));

  std::vector<std::uint64_t> sizes = experiment.sample_sizes;
  std::sort(sizes.begin(), sizes.end());

  std::vector<WeightedObs> obs;
  for (std::uint64_t m : sizes) {
    for (SimScheme scheme : schemes) {
      const DiscreteSampler& sampler = scheme == SimScheme::pps ? pps_sampler : ml_sampler;
      SimCell cell;
      cell.m = m;
      cell.scheme = scheme;
      cell.trial_estimates.reserve(experiment.trials);
      cell.trial_positive_fractions.reserve(experiment.trials);
      for (std::uint32_t t = 0; t < experiment.trials; ++t) {
        const std::uint64_t sub_seed =
            experiment.paired
                ? rng::derive_seed(experiment.seed_mc, kTrialSalt, m, t)
                : rng::derive_seed(experiment.seed_mc, kTrialSalt, m,
                                   static_cast<std::uint64_t>(scheme), t);
        rng::SplitMix64 g(sub_seed);
        obs.clear();
        obs.reserve(m);
        std::uint64_t positives = 0;
        for (std::uint64_t i = 0; i < m; ++i) {
          const std::size_t idx = sampler.draw(g);
          const SimUnit& unit = population.units[idx];
          const double x = static_cast<double>(unit.impressions);
          obs.push_back(WeightedObs{x, unit.positive ? x : 0.0, sampler.probability(idx)});
          if (unit.positive) ++positives;
        }
        const PrevalenceEstimate est = hh_ratio(obs);
        cell.trial_estimates.push_back(est.raw_theta_hat);
        cell.trial_positive_fractions.push_back(static_cast<double>(positives) /
                                                static_cast<double>(m));
      }
      cell.width = numeric::quantile_type7(cell.trial_estimates, 0.975) -
                   numeric::quantile_type7(cell.trial_estimates, 0.025);
      cell.mean_estimate = numeric::compensated_total(cell.trial_estimates) /
                           static_cast<double>(cell.trial_estimates.size());
      cell.bias = cell.mean_estimate - result.true_theta;
      cell.mean_positive_fraction = numeric::compensated_total(cell.trial_positive_fractions) /
                                    static_cast<double>(cell.trial_positive_fractions.size());
      result.cells.push_back(std::move(cell));
    }
  }

  double norm_width = 0.0;
  bool found = false;
  for (const auto& cell : result.cells) {
    if (cell.m == result.normalization_m && cell.scheme == SimScheme::ml_pps) {
      norm_width = cell.width;
      found = true;
    }
  }
  if (!found || !(norm_width > 0.0))
    throw Error(Errc::estimation, "normalization cell missing or degenerate");
  for (auto& cell : result.cells) cell.width_rel = cell.width / norm_width;
  return result;
}

std::vector<LiftPoint> positive_rate_lift(const SimResult& result) {
  std::vector<LiftPoint> lifts;
  for (const auto& cell : result.cells) {
    if (cell.scheme != SimScheme::pps) continue;
    const SimCell* ml = nullptr;
    for (const auto& other : result.cells) {
      if (other.m == cell.m && other.scheme == SimScheme::ml_pps) ml = &other;
    }
    if (ml == nullptr) throw Error(Errc::estimation, "lift needs both schemes per sample size");

    LiftPoint point;
    point.m = cell.m;
    numeric::CompensatedSum pps_sum;
    std::uint32_t pps_kept = 0;
    for (double fraction : cell.trial_positive_fractions) {
      if (fraction == 0.0) {
        ++point.excluded_pps_trials;
        continue;
      }
      pps_sum.add(fraction);
      ++pps_kept;
    }
    if (pps_kept == 0)
      throw Error(Errc::estimation, "every pps trial had zero positives; lift undefined");
    const double ml_mean = numeric::compensated_total(ml->trial_positive_fractions) /
                           static_cast<double>(ml->trial_positive_fractions.size());
    point.lift = ml_mean / (pps_sum.value() / static_cast<double>(pps_kept));
    lifts.push_back(point);
  }
  return lifts;
}

void emit_figure_data(const SimResult& result, const std::filesystem::path& path) {
  bool have_norm = false;
  for (const auto& cell : result.cells) {
    if (cell.m == result.normalization_m && cell.scheme == SimScheme::ml_pps) have_norm = true;
  }
  if (!have_norm)
    throw Error(Errc::estimation, "figure data needs the normalization cell (max m, ml_pps)");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open '" + path.string() + "' for writing");
  out << "m,scheme,width,width_rel,bias,positive_fraction\n";
  for (const auto& cell : result.cells) {
    out << cell.m << ',' << scheme_name(cell.scheme) << ',' << format_double(cell.width) << ','
        << format_double(cell.width_rel) << ',' << format_double(cell.bias) << ','
        << format_double(cell.mean_positive_fraction) << '\n';
  }
  if (!out) throw Error(Errc::io, "failed writing '" + path.string() + "'");
}

std::vector<double> run_ppswor_trials(const SimPopulation& population, std::uint64_t m,
                                      std::uint32_t trials, SimScheme scheme,
                                      const SimExperimentSpec& experiment) {
  std::vector<double> estimates;
  estimates.reserve(trials);
  SamplingConfig config;
  config.sample_size = m;
  config.impression_exponent = experiment.impression_exponent;
  config.score_exponent = scheme_score_exponent(scheme, experiment);
  config.score_floor = experiment.score_floor;
  config.scheme = SamplingScheme::ppswor;

  char id_buf[24];
  for (std::uint32_t t = 0; t < trials; ++t) {
    config.seed = rng::derive_seed(experiment.seed_mc, kTrialSalt, m,
                                   static_cast<std::uint64_t>(scheme), t, std::uint64_t{0x574fULL});
    Reservoir reservoir(config);
    for (std::size_t i = 0; i < population.units.size(); ++i) {
      const SimUnit& unit = population.units[i];
      auto [ptr, ec] = std::to_chars(id_buf, id_buf + sizeof(id_buf), i);
      ContentRecord record;
      record.content_id.assign(id_buf, ptr);
      record.impressions = unit.impressions;
      record.score = unit.score;
      reservoir.offer(record, unit.score);
    }
    auto draws = reservoir.draws();
    for (auto& d : draws) {
      std::size_t idx = 0;
      std::from_chars(d.content_id.data(), d.content_id.data() + d.content_id.size(), idx);
      d.label = population.units[idx].positive ? 1 : 0;
    }
    estimates.push_back(ht_hajek(draws).raw_theta_hat);
  }
  return estimates;
}

}  // namespace prevalence::simlab
