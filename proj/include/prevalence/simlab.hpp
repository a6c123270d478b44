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

#ifndef PREVALENCE_SIMLAB_HPP
#define PREVALENCE_SIMLAB_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prevalence/types.hpp"

namespace prevalence::simlab {

/// Synthetic population: heavy-tailed exposure, rare positives, and a noisy
/// risk score correlated with the true label. Defaults reproduce the
/// simulation lab's reference experiment.
struct SimPopulationSpec {
  std::uint64_t n = 300000;
  double base_rate = 0.005;       // P(label = 1)
  double p_small = 0.93;          // mass of the Unif{1..10} impression component
  double pareto_alpha = 1.4;      // tail index
  double pareto_xm = 10.0;        // tail scale
  double beta_neg_a = 1.5, beta_neg_b = 6.0;  // score | label = 0
  double beta_pos_a = 6.0, beta_pos_b = 1.5;  // score | label = 1
  std::uint64_t seed_pop = 42;
};

struct SimUnit {
  std::uint64_t impressions = 0;
  double score = 0.0;
  bool positive = false;
};

struct SimPopulation {
  std::vector<SimUnit> units;
  std::uint64_t total_impressions = 0;
  std::uint64_t violating_impressions = 0;
  /// Exposure-weighted truth, computed exactly from integer totals.
  double true_theta() const {
    return static_cast<double>(violating_impressions) / static_cast<double>(total_impressions);
  }
};

/// Deterministic under seed_pop. Impressions: Unif{1..10} with probability
/// p_small, else round(xm * U^{-1/alpha}) (the Pareto-II shift xm*(1+Lomax),
/// inverse CDF form), clamped to >= 1. Scores: Beta by label.
SimPopulation generate_population(const SimPopulationSpec& spec);

enum class SimScheme { pps, ml_pps };

inline const char* scheme_name(SimScheme s) { return s == SimScheme::pps ? "pps" : "ml_pps"; }

struct SimExperimentSpec {
  std::vector<std::uint64_t> sample_sizes = {2000, 5000, 10000, 20000, 50000, 100000};
  std::uint32_t trials = 500;
  double impression_exponent = 1.0;  // nu, shared by both schemes
  double score_exponent = 1.0;       // gamma for ml_pps (pps uses 0)
  double score_floor = 1e-6;
  std::uint64_t seed_mc = 123;
  /// Paired trials share per-trial randomness across schemes (variance
  /// reduction for comparisons); unpaired is the default.
  bool paired = false;
};

struct SimCell {
  std::uint64_t m = 0;
  SimScheme scheme = SimScheme::pps;
  double width = 0.0;      // Q0.975 - Q0.025 over trial estimates
  double width_rel = 0.0;  // width / width(max m, ml_pps)
  double mean_estimate = 0.0;
  double bias = 0.0;  // mean_estimate - true theta
  double mean_positive_fraction = 0.0;
  std::vector<double> trial_estimates;
  std::vector<double> trial_positive_fractions;
};

struct SimResult {
  std::vector<SimCell> cells;  // ordered by (m asc, pps before ml_pps)
  double true_theta = 0.0;
  std::uint64_t normalization_m = 0;  // the cell widths are normalized by
};

/// Monte Carlo over (m, scheme) cells: with-replacement draws from the
/// scheme's design, Hansen--Hurwitz ratio estimate per trial. Each trial gets
/// a sub-seed derived from (seed_mc, m, scheme, trial) so any execution order
/// gives the same numbers.
SimResult run_trials(const SimPopulation& population, const SimExperimentSpec& experiment);

struct LiftPoint {
  std::uint64_t m = 0;
  double lift = 0.0;  // mean positive fraction, ml_pps : pps
  std::uint32_t excluded_pps_trials = 0;  // trials with zero positives, dropped from the ratio
};

/// Per-m ratio of mean sample positive fractions (ml_pps over pps).
std::vector<LiftPoint> positive_rate_lift(const SimResult& result);

/// Figure data: header row then one "m,scheme,width,width_rel,bias,
/// positive_fraction" row per cell. Byte-stable across reruns.
void emit_figure_data(const SimResult& result, const std::filesystem::path& path);

/// PPSWOR counterpart for the design-comparison check: per trial, stream the
/// population through a weighted reservoir (trial-specific seed) and estimate
/// with the Hajek ratio. Returns the per-trial point estimates.
std::vector<double> run_ppswor_trials(const SimPopulation& population, std::uint64_t m,
                                      std::uint32_t trials, SimScheme scheme,
                                      const SimExperimentSpec& experiment);

/// Weight vector the given scheme assigns to the population.
std::vector<double> scheme_weights(const SimPopulation& population, SimScheme scheme,
                                   const SimExperimentSpec& experiment);

}  // namespace prevalence::simlab

#endif  // PREVALENCE_SIMLAB_HPP
