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

#ifndef PREVALENCE_SAMPLER_HPP
#define PREVALENCE_SAMPLER_HPP

#include <span>
#include <unordered_set>
#include <vector>

#include "prevalence/numeric.hpp"
#include "prevalence/rng.hpp"
#include "prevalence/types.hpp"

namespace prevalence {

/// Sampling weight for one unit: impressions^nu * (score^gamma + floor).
/// `imputed_score` stands in when the record carries no score. Throws when the
/// result is non-finite (extreme exponents), naming the offending unit.
double compute_weight(const ContentRecord& record, const SamplingConfig& config,
                      double imputed_score);

/// The day-level score used for units with no score of their own: the median
/// of the present scores, or the configured fixed value. Errors if the policy
/// is day_median and no record has a score.
double imputation_value(std::span<const ContentRecord> records, const ScoreImputation& policy);

/// Per-record effective scores after imputation; all strictly positive.
std::vector<double> impute_scores(std::span<const ContentRecord> records,
                                  const ScoreImputation& policy);

/// Exponential-race key: -ln(uniform)/weight. Smaller keys win. uniform must
/// lie in (0,1]; uniform == 1 maps to key 0.
double reservoir_key(double weight, double uniform);

/// Poissonized inclusion probability 1 - exp(-weight * threshold), valid once
/// the reservoir has filled and fixed its threshold.
double inclusion_probability(double weight, double threshold);

/// Fixed-size weighted reservoir keeping the m smallest keys. Per-item
/// uniforms are derived from (seed, content_id), never from stream position,
/// so the retained set is independent of stream order and shards merge
/// losslessly. Exact key ties break by content_id.
class Reservoir {
 public:
  struct Entry {
    double key = 0.0;
    double weight = 0.0;
    ContentRecord record;
  };

  explicit Reservoir(SamplingConfig config);

  /// Offer one unit; computes its weight and key internally.
  void offer(const ContentRecord& record, double imputed_score);

  /// Offer with a precomputed weight and key (testing and replay hook).
  void offer_keyed(ContentRecord record, double weight, double key);

  std::size_t size() const { return entries_.size(); }
  std::uint64_t capacity() const { return config_.sample_size; }
  bool full() const { return entries_.size() == config_.sample_size; }

  /// m-th smallest key seen; defined only once the reservoir is full.
  double threshold() const;

  double total_weight_seen() const;
  std::uint64_t items_seen() const { return items_seen_; }
  const SamplingConfig& config() const { return config_; }

  /// Entries sorted by (key, content_id) ascending.
  std::vector<Entry> sorted_entries() const;

  /// Retained units as estimator-ready draws. When the reservoir filled,
  /// inclusion probabilities come from the final threshold; an underfull
  /// reservoir is a census and every unit gets probability 1.
  std::vector<SampleDraw> draws() const;

  /// Union of two reservoirs built over disjoint streams with the same
  /// design. Equals the reservoir of the concatenated stream.
  static Reservoir merge(const Reservoir& a, const Reservoir& b);

 private:
  void insert(Entry entry);

  SamplingConfig config_;
  // Max-heap over (key, content_id); the root is the first entry to evict.
  std::vector<Entry> entries_;
  std::unordered_set<std::string> retained_ids_;
  numeric::CompensatedSum total_weight_;
  std::uint64_t items_seen_ = 0;
};

/// Walker/Vose alias table for O(1) draws from a fixed weight vector.
/// Construction and draws are fully deterministic.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(std::span<const double> weights);

  std::size_t draw(rng::SplitMix64& g) const;
  double probability(std::size_t index) const;
  double total_weight() const { return total_; }
  std::size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
  std::vector<double> weights_;
  double total_ = 0.0;
};

/// m i.i.d. with-replacement draws from the normalized weights. Records the
/// finalized draw probability w_j / sum(w) on every draw. Weights must be
/// materialized in full first, which is why this design needs two passes.
std::vector<SampleDraw> ppswr_sample(std::span<const ContentRecord> records,
                                     std::span<const double> weights, std::uint64_t sample_size,
                                     std::uint64_t seed);

}  // namespace prevalence

#endif  // PREVALENCE_SAMPLER_HPP
