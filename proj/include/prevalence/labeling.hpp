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

#ifndef PREVALENCE_LABELING_HPP
#define PREVALENCE_LABELING_HPP

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prevalence/estimator.hpp"
#include "prevalence/types.hpp"

namespace prevalence {

/// A provider's verdict for one unit. No label means abstention.
struct LabelResult {
  std::optional<int> label;
  std::optional<double> confidence;
};

/// Looks up ground truth for a content id; providers that simulate or echo
/// truth need one. Returns nullopt when the id is unknown.
using TruthLookup = std::function<std::optional<int>(const std::string&)>;

/// Source of labels for sampled units. Implementations must label each id
/// deterministically and independently of call order.
class LabelProvider {
 public:
  virtual ~LabelProvider() = default;
  virtual std::string version_id() const = 0;
  virtual LabelResult label(const SampleDraw& draw) = 0;
  /// Opaque accounting metadata (latency, token counts, ...) carried through
  /// to lineage without interpretation.
  virtual std::unordered_map<std::string, double> cost_metadata() const { return {}; }
};

/// Labels equal simulation ground truth exactly.
class SyntheticOracleProvider : public LabelProvider {
 public:
  SyntheticOracleProvider(TruthLookup truth, std::string version);
  std::string version_id() const override { return version_; }
  LabelResult label(const SampleDraw& draw) override;

 private:
  TruthLookup truth_;
  std::string version_;
};

/// Joins labels delivered in a file keyed by content id; unknown ids abstain
/// (label_sample reports them as an error payload).
class FileJoinProvider : public LabelProvider {
 public:
  FileJoinProvider(std::unordered_map<std::string, LabelResult> labels, std::string version);
  std::string version_id() const override { return version_; }
  LabelResult label(const SampleDraw& draw) override;

 private:
  std::unordered_map<std::string, LabelResult> labels_;
  std::string version_;
};

/// Deterministic stand-in for a remote labeler: flips ground truth with the
/// configured sensitivity and false positive rate, keyed by (seed,
/// content_id). Latency is simulated in-process (accounted, never slept) so
/// tests stay hermetic.
class MockRemoteProvider : public LabelProvider {
 public:
  MockRemoteProvider(TruthLookup truth, double sensitivity, double false_positive_rate,
                     std::uint64_t seed, double latency_ms_per_item, std::string version);
  std::string version_id() const override { return version_; }
  LabelResult label(const SampleDraw& draw) override;
  std::unordered_map<std::string, double> cost_metadata() const override;

 private:
  TruthLookup truth_;
  double sensitivity_;
  double false_positive_rate_;
  std::uint64_t seed_;
  double latency_ms_per_item_;
  std::string version_;
  std::uint64_t calls_ = 0;
};

/// Raised when a provider cannot cover the sample; carries the uncovered ids.
class MissingLabelsError : public Error {
 public:
  MissingLabelsError(std::vector<std::string> ids, const std::string& what)
      : Error(Errc::ingestion, what), missing_ids(std::move(ids)) {}
  std::vector<std::string> missing_ids;
};

struct LabelingSummary {
  std::string provider_version;
  std::uint64_t labeled = 0;
  std::uint64_t abstained = 0;
  std::vector<std::string> abstained_ids;
  std::unordered_map<std::string, double> cost_metadata;
};

/// Attach labels to every draw in place. Abstentions leave the draw
/// unlabeled and are counted; the caller excludes them from estimation.
/// FileJoin gaps raise MissingLabelsError with the uncovered ids.
LabelingSummary label_sample(std::vector<SampleDraw>& draws, LabelProvider& provider);

/// Decision-quality report from a gold set. Metrics with an empty
/// denominator are left unset rather than silently zeroed.
struct GoldSetReport {
  std::uint64_t n = 0;
  std::uint64_t true_positives = 0;
  std::uint64_t false_negatives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t true_negatives = 0;
  double accuracy = 0.0;
  double accuracy_se = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;  // sensitivity r
  std::optional<double> recall_se;
  std::optional<double> f1;
  std::optional<double> false_positive_rate;  // f
  std::optional<double> fpr_se;

  /// (r, f) packaged for Rogan--Gladen; errors if either is undefined.
  LabelerQuality labeler_quality() const;
};

GoldSetReport evaluate_gold_set(std::span<const int> predictions, std::span<const int> truths);

/// Per-policy launch bar. Unset thresholds are not checked.
struct QualityThresholds {
  std::optional<double> min_accuracy;
  std::optional<double> min_precision;
  std::optional<double> min_recall;
  std::optional<double> min_f1;
  std::optional<double> max_false_positive_rate;
  std::uint64_t min_gold_positives = 1;
};

struct GateResult {
  bool pass = false;
  std::vector<std::string> reasons;  // each violated threshold, by name
};

GateResult quality_gate(const GoldSetReport& report, const QualityThresholds& thresholds);

enum class SubsampleMode { uniform, weighted };

/// Indices of k draws routed to human validation, drawn uniformly or
/// proportionally to sampling weight. Deterministic under the seed.
std::vector<std::size_t> validation_subsample(std::span<const SampleDraw> draws, std::size_t k,
                                              SubsampleMode mode, std::uint64_t seed);

}  // namespace prevalence

#endif  // PREVALENCE_LABELING_HPP
