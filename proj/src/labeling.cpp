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

#include "prevalence/labeling.hpp"

#include <cmath>

#include "prevalence/numeric.hpp"
#include "prevalence/rng.hpp"
#include "prevalence/sampler.hpp"

namespace prevalence {

namespace {

constexpr std::uint64_t kLabelSalt = 0x4c4142454c455221ULL;
constexpr std::uint64_t kSubsampleSalt = 0x56414c4944415445ULL;

double binomial_se(double p, std::uint64_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace

SyntheticOracleProvider::SyntheticOracleProvider(TruthLookup truth, std::string version)
    : truth_(std::move(truth)), version_(std::move(version)) {}

LabelResult SyntheticOracleProvider::label(const SampleDraw& draw) {
  auto t = truth_(draw.content_id);
  if (!t) return {};  // unknown id: abstain
  return {*t, 1.0};
}

FileJoinProvider::FileJoinProvider(std::unordered_map<std::string, LabelResult> labels,
                                   std::string version)
    : labels_(std::move(labels)), version_(std::move(version)) {}

LabelResult FileJoinProvider::label(const SampleDraw& draw) {
  auto it = labels_.find(draw.content_id);
  if (it == labels_.end()) return {};
  return it->second;
}

MockRemoteProvider::MockRemoteProvider(TruthLookup truth, double sensitivity,
                                       double false_positive_rate, std::uint64_t seed,
                                       double latency_ms_per_item, std::string version)
    : truth_(std::move(truth)),
      sensitivity_(sensitivity),
      false_positive_rate_(false_positive_rate),
      seed_(seed),
      latency_ms_per_item_(latency_ms_per_item),
      version_(std::move(version)) {
  if (!(sensitivity > 0.0 && sensitivity <= 1.0))
    throw Error(Errc::invalid_argument, "mock labeler sensitivity must be in (0,1]");
  if (!(false_positive_rate >= 0.0 && false_positive_rate < 1.0))
    throw Error(Errc::invalid_argument, "mock labeler false positive rate must be in [0,1)");
}

LabelResult MockRemoteProvider::label(const SampleDraw& draw) {
  ++calls_;
  auto t = truth_(draw.content_id);
  if (!t) return {};
  const double u = rng::item_uniform(rng::derive_seed(seed_, kLabelSalt), draw.content_id);
  const int predicted = *t == 1 ? (u <= sensitivity_ ? 1 : 0) : (u <= false_positive_rate_ ? 1 : 0);
  return {predicted, *t == predicted ? u : 1.0 - u};
}

std::unordered_map<std::string, double> MockRemoteProvider::cost_metadata() const {
  return {{"simulated_latency_ms", latency_ms_per_item_ * static_cast<double>(calls_)},
          {"units_labeled", static_cast<double>(calls_)}};
}

LabelingSummary label_sample(std::vector<SampleDraw>& draws, LabelProvider& provider) {
  LabelingSummary summary;
  summary.provider_version = provider.version_id();
  for (auto& d : draws) {
    if (d.label)
      throw Error(Errc::invalid_argument, "draw '" + d.content_id + "' is already labeled");
    LabelResult r = provider.label(d);
    if (r.label) {
      if (*r.label != 0 && *r.label != 1)
        throw Error(Errc::invalid_argument, "provider returned a non-binary label for '" +
                                                d.content_id + "'");
      d.label = r.label;
      ++summary.labeled;
    } else {
      ++summary.abstained;
      summary.abstained_ids.push_back(d.content_id);
    }
  }
  summary.cost_metadata = provider.cost_metadata();
  if (dynamic_cast<FileJoinProvider*>(&provider) != nullptr && summary.abstained > 0) {
    throw MissingLabelsError(summary.abstained_ids,
                             "label file does not cover " + std::to_string(summary.abstained) +
                                 " sampled ids (first: " + summary.abstained_ids.front() + ")");
  }
  return summary;
}

LabelerQuality GoldSetReport::labeler_quality() const {
  if (!recall || !false_positive_rate)
    throw Error(Errc::insufficient_data,
                "labeler quality undefined: gold set lacks positives or negatives");
  LabelerQuality q;
  q.sensitivity = *recall;
  q.false_positive_rate = *false_positive_rate;
  q.sensitivity_se = recall_se.value_or(0.0);
  q.fpr_se = fpr_se.value_or(0.0);
  return q;
}

GoldSetReport evaluate_gold_set(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size())
    throw Error(Errc::invalid_argument, "predictions/truths length mismatch");
  if (predictions.empty()) throw Error(Errc::invalid_argument, "gold set is empty");

  GoldSetReport r;
  r.n = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int t = truths[i];
    if ((p != 0 && p != 1) || (t != 0 && t != 1))
      throw Error(Errc::invalid_argument, "gold set labels must be 0 or 1");
    if (t == 1) {
      p == 1 ? ++r.true_positives : ++r.false_negatives;
    } else {
      p == 1 ? ++r.false_positives : ++r.true_negatives;
    }
  }

  const auto nd = static_cast<double>(r.n);
  r.accuracy = static_cast<double>(r.true_positives + r.true_negatives) / nd;
  r.accuracy_se = binomial_se(r.accuracy, r.n);

  const std::uint64_t gold_positives = r.true_positives + r.false_negatives;
  const std::uint64_t gold_negatives = r.false_positives + r.true_negatives;
  const std::uint64_t predicted_positives = r.true_positives + r.false_positives;

  if (gold_positives > 0) {
    r.recall = static_cast<double>(r.true_positives) / static_cast<double>(gold_positives);
    r.recall_se = binomial_se(*r.recall, gold_positives);
  }
  if (gold_negatives > 0) {
    r.false_positive_rate =
        static_cast<double>(r.false_positives) / static_cast<double>(gold_negatives);
    r.fpr_se = binomial_se(*r.false_positive_rate, gold_negatives);
  }
  if (predicted_positives > 0)
    r.precision = static_cast<double>(r.true_positives) / static_cast<double>(predicted_positives);
  if (r.precision && r.recall && *r.precision + *r.recall > 0.0)
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  return r;
}

GateResult quality_gate(const GoldSetReport& report, const QualityThresholds& thresholds) {
  GateResult result;
  const std::uint64_t gold_positives = report.true_positives + report.false_negatives;
  if (gold_positives < thresholds.min_gold_positives)
    result.reasons.push_back("insufficient gold positives (" + std::to_string(gold_positives) +
                             " < " + std::to_string(thresholds.min_gold_positives) + ")");
  auto check_min = [&](const char* name, const std::optional<double>& threshold,
                       const std::optional<double>& value) {
    if (!threshold) return;
    if (!value) {
      result.reasons.push_back(std::string(name) + " undefined on this gold set");
    } else if (*value < *threshold) {
      result.reasons.push_back(std::string(name) + " below threshold");
    }
  };
  check_min("accuracy", thresholds.min_accuracy, report.accuracy);
  check_min("precision", thresholds.min_precision, report.precision);
  check_min("recall", thresholds.min_recall, report.recall);
  check_min("f1", thresholds.min_f1, report.f1);
  if (thresholds.max_false_positive_rate) {
    if (!report.false_positive_rate) {
      result.reasons.push_back("false_positive_rate undefined on this gold set");
    } else if (*report.false_positive_rate > *thresholds.max_false_positive_rate) {
      result.reasons.push_back("false_positive_rate above threshold");
    }
  }
  result.pass = result.reasons.empty();
  return result;
}

std::vector<std::size_t> validation_subsample(std::span<const SampleDraw> draws, std::size_t k,
                                              SubsampleMode mode, std::uint64_t seed) {
  if (k > draws.size())
    throw Error(Errc::invalid_argument, "validation subsample larger than the sample");
  std::vector<std::size_t> picked;
  if (k == 0) return picked;
  rng::SplitMix64 g(rng::derive_seed(seed, kSubsampleSalt));
  std::vector<std::size_t> pool(draws.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  std::vector<double> weights(draws.size(), 1.0);
  if (mode == SubsampleMode::weighted) {
    for (std::size_t i = 0; i < draws.size(); ++i) weights[i] = draws[i].weight;
  }
  // Sequential weighted draws without replacement.
  for (std::size_t round = 0; round < k; ++round) {
    numeric::CompensatedSum total;
    for (std::size_t i : pool) total.add(weights[i]);
    double target = g.next_unit() * total.value();
    std::size_t chosen = pool.back();
    std::size_t chosen_pos = pool.size() - 1;
    double acc = 0.0;
    for (std::size_t pos = 0; pos < pool.size(); ++pos) {
      acc += weights[pool[pos]];
      if (target < acc) {
        chosen = pool[pos];
        chosen_pos = pos;
        break;
      }
    }
    picked.push_back(chosen);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen_pos));
  }
  return picked;
}

}  // namespace prevalence
