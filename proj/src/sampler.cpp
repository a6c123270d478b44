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

#include "prevalence/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace prevalence {

namespace {

// Heap order: largest key first so the root is the eviction candidate. Ties
// on key break by content_id (descending here, so the lexicographically
// larger id is evicted first, keeping retention deterministic).
bool heap_before(const Reservoir::Entry& a, const Reservoir::Entry& b) {
  if (a.key != b.key) return a.key < b.key;
  return a.record.content_id < b.record.content_id;
}

constexpr std::uint64_t kPpswrSalt = 0x5757522d53414d50ULL;

}  // namespace

double compute_weight(const ContentRecord& record, const SamplingConfig& config,
                      double imputed_score) {
  if (record.impressions < 1)
    throw Error(Errc::invalid_argument,
                "unit '" + record.content_id + "' has zero impressions; not in frame");
  const double score = record.score ? *record.score : imputed_score;
  if (!(score > 0.0))
    throw Error(Errc::invalid_argument,
                "unit '" + record.content_id + "' has non-positive effective score");
  const double w = std::pow(static_cast<double>(record.impressions), config.impression_exponent) *
                   (std::pow(score, config.score_exponent) + config.score_floor);
  if (!std::isfinite(w) || !(w > 0.0))
    throw Error(Errc::ingestion, "non-finite sampling weight for unit '" + record.content_id +
                                     "' (impressions=" + std::to_string(record.impressions) + ")");
  return w;
}

double imputation_value(std::span<const ContentRecord> records, const ScoreImputation& policy) {
  if (policy.kind == ScoreImputation::Kind::fixed) {
    if (!(policy.fixed_value > 0.0))
      throw Error(Errc::invalid_argument, "fixed imputation value must be > 0");
    return policy.fixed_value;
  }
  std::vector<double> present;
  for (const auto& r : records) {
    if (r.score) present.push_back(*r.score);
  }
  if (present.empty())
    throw Error(Errc::invalid_argument,
                "day_median imputation needs at least one scored record; "
                "use fixed imputation for unscored days");
  return numeric::median(std::move(present));
}

std::vector<double> impute_scores(std::span<const ContentRecord> records,
                                  const ScoreImputation& policy) {
  const double fallback = imputation_value(records, policy);
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.score ? *r.score : fallback);
  return out;
}

double reservoir_key(double weight, double uniform) {
  if (!(weight > 0.0)) throw Error(Errc::invalid_argument, "reservoir key needs weight > 0");
  if (!(uniform > 0.0 && uniform <= 1.0))
    throw Error(Errc::invalid_argument, "reservoir key needs uniform in (0,1]");
  return -std::log(uniform) / weight;
}

double inclusion_probability(double weight, double threshold) {
  if (!(weight > 0.0)) throw Error(Errc::invalid_argument, "inclusion probability needs weight > 0");
  if (!(threshold > 0.0))
    throw Error(Errc::invalid_argument,
                "inclusion probability undefined: reservoir never filled (no threshold)");
  return -std::expm1(-weight * threshold);
}

Reservoir::Reservoir(SamplingConfig config) : config_(std::move(config)) {
  config_.validate();
  entries_.reserve(config_.sample_size);
}

void Reservoir::offer(const ContentRecord& record, double imputed_score) {
  const double weight = compute_weight(record, config_, imputed_score);
  const double uniform = rng::item_uniform(config_.seed, record.content_id);
  offer_keyed(record, weight, reservoir_key(weight, uniform));
}

void Reservoir::offer_keyed(ContentRecord record, double weight, double key) {
  if (!(key >= 0.0)) throw Error(Errc::invalid_argument, "reservoir key must be >= 0");
  // Duplicate detection is scoped to the retained set, which keeps state
  // O(m). A duplicate whose first copy was already rejected carries the same
  // hash-derived key and can never enter the sample either.
  if (retained_ids_.count(record.content_id) > 0)
    throw Error(Errc::ingestion, "duplicate content_id '" + record.content_id +
                                     "' in stream; pre-aggregate units before sampling");
  ++items_seen_;
  total_weight_.add(weight);

  Entry entry{key, weight, std::move(record)};
  if (!full()) {
    insert(std::move(entry));
    return;
  }
  if (!heap_before(entry, entries_.front())) return;
  retained_ids_.erase(entries_.front().record.content_id);
  std::pop_heap(entries_.begin(), entries_.end(), heap_before);
  entries_.pop_back();
  insert(std::move(entry));
}

void Reservoir::insert(Entry entry) {
  retained_ids_.insert(entry.record.content_id);
  entries_.push_back(std::move(entry));
  std::push_heap(entries_.begin(), entries_.end(), heap_before);
}

double Reservoir::threshold() const {
  if (!full())
    throw Error(Errc::invalid_argument, "reservoir threshold undefined until " +
                                            std::to_string(config_.sample_size) +
                                            " items have been offered");
  return entries_.front().key;
}

double Reservoir::total_weight_seen() const { return total_weight_.value(); }

std::vector<Reservoir::Entry> Reservoir::sorted_entries() const {
  std::vector<Entry> out = entries_;
  std::sort(out.begin(), out.end(), heap_before);
  return out;
}

std::vector<SampleDraw> Reservoir::draws() const {
  const bool have_threshold = full();
  const double tau = have_threshold ? threshold() : 0.0;
  std::vector<SampleDraw> out;
  out.reserve(entries_.size());
  for (auto& entry : sorted_entries()) {
    SampleDraw d;
    d.content_id = entry.record.content_id;
    d.impressions = entry.record.impressions;
    d.segment_impressions = entry.record.segment_impressions;
    d.weight = entry.weight;
    d.inclusion_probability =
        have_threshold ? inclusion_probability(entry.weight, tau) : 1.0;  // census when underfull
    out.push_back(std::move(d));
  }
  return out;
}

Reservoir Reservoir::merge(const Reservoir& a, const Reservoir& b) {
  if (a.capacity() != b.capacity())
    throw Error(Errc::invalid_argument, "cannot merge reservoirs of different capacity");
  if (!a.config_.same_design(b.config_))
    throw Error(Errc::invalid_argument, "cannot merge reservoirs built under different configs");
  for (const auto& id : b.retained_ids_) {
    if (a.retained_ids_.count(id) > 0)
      throw Error(Errc::ingestion, "content_id '" + id + "' appears in both shards");
  }
  Reservoir merged(a.config_);
  for (const auto& e : a.entries_) merged.insert(e);
  for (const auto& e : b.entries_) {
    if (!merged.full()) {
      merged.insert(e);
      continue;
    }
    if (!heap_before(e, merged.entries_.front())) continue;
    merged.retained_ids_.erase(merged.entries_.front().record.content_id);
    std::pop_heap(merged.entries_.begin(), merged.entries_.end(), heap_before);
    merged.entries_.pop_back();
    merged.insert(e);
  }
  merged.items_seen_ = a.items_seen_ + b.items_seen_;
  merged.total_weight_ = numeric::CompensatedSum{};
  merged.total_weight_.add(a.total_weight_seen());
  merged.total_weight_.add(b.total_weight_seen());
  return merged;
}

DiscreteSampler::DiscreteSampler(std::span<const double> weights) {
  if (weights.empty()) throw Error(Errc::invalid_argument, "cannot sample from empty population");
  const std::size_t n = weights.size();
  weights_.assign(weights.begin(), weights.end());
  numeric::CompensatedSum sum;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w))
      throw Error(Errc::invalid_argument, "all sampling weights must be positive and finite");
    sum.add(w);
  }
  total_ = sum.value();

  // Vose's alias construction over scaled probabilities n * w / total.
  prob_.resize(n);
  alias_.resize(n);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  small.reserve(n);
  large.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = static_cast<double>(n) * (weights[i] / total_);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    const std::uint32_t l = large.back();
    small.pop_back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (std::uint32_t i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  for (std::uint32_t i : small) {  // leftovers from rounding
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

std::size_t DiscreteSampler::draw(rng::SplitMix64& g) const {
  const double u = g.next_unit() * static_cast<double>(prob_.size());
  std::size_t idx = static_cast<std::size_t>(u);
  if (idx >= prob_.size()) idx = prob_.size() - 1;
  const double frac = u - static_cast<double>(idx);
  return frac < prob_[idx] ? idx : alias_[idx];
}

double DiscreteSampler::probability(std::size_t index) const {
  return weights_[index] / total_;
}

std::vector<SampleDraw> ppswr_sample(std::span<const ContentRecord> records,
                                     std::span<const double> weights, std::uint64_t sample_size,
                                     std::uint64_t seed) {
  if (records.empty()) throw Error(Errc::invalid_argument, "cannot sample from empty population");
  if (records.size() != weights.size())
    throw Error(Errc::invalid_argument, "records/weights length mismatch");
  if (sample_size < 1) throw Error(Errc::invalid_argument, "sample_size must be >= 1");

  DiscreteSampler sampler(weights);
  rng::SplitMix64 g(rng::derive_seed(seed, kPpswrSalt));
  std::vector<SampleDraw> out;
  out.reserve(sample_size);
  for (std::uint64_t i = 0; i < sample_size; ++i) {
    const std::size_t idx = sampler.draw(g);
    const ContentRecord& r = records[idx];
    SampleDraw d;
    d.content_id = r.content_id;
    d.impressions = r.impressions;
    d.segment_impressions = r.segment_impressions;
    d.weight = weights[idx];
    d.draw_probability = sampler.probability(idx);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace prevalence
