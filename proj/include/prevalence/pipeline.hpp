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

#ifndef PREVALENCE_PIPELINE_HPP
#define PREVALENCE_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prevalence/alerting.hpp"
#include "prevalence/formats.hpp"
#include "prevalence/labeling.hpp"
#include "prevalence/types.hpp"

namespace prevalence {

struct DataSources {
  std::filesystem::path impressions;           // required: daily impression log
  std::optional<std::filesystem::path> scores;  // auxiliary score overlay
  std::optional<std::filesystem::path> labels;  // delivered labels (file_join)
  std::optional<std::filesystem::path> truth;   // ground truth (oracle / mock providers)
  std::optional<std::filesystem::path> gold_set;
};

struct LabelProviderConfig {
  enum class Kind { synthetic_oracle, file_join, mock_remote } kind = Kind::synthetic_oracle;
  std::string version = "v1";
  double sensitivity = 1.0;          // mock_remote
  double false_positive_rate = 0.0;  // mock_remote
  std::uint64_t seed = 0;            // mock_remote
  double latency_ms = 0.0;           // mock_remote, accounted not slept
};

struct QualityGateConfig {
  bool enabled = false;
  QualityThresholds thresholds;
};

struct RoganGladenConfig {
  bool enabled = false;
  enum class Source { gold_set, fixed } source = Source::gold_set;
  enum class Scope { global, all_segments } scope = Scope::global;
  LabelerQuality fixed_quality;  // used when source == fixed
};

struct AlertingConfig {
  bool enabled = false;
  double alpha = 0.05;
  double power = 0.8;
  int window_days = 7;
  double baseline = 0.0;
  int gap_days = 0;
  bool inflate_from_history = false;  // autocorrelation inflation when >= 28 days
};

enum class SegmentEstimator { known_denominator, ratio };

/// One policy metric definition: taxonomy, data sources, sampling design,
/// label provider, quality bar, segments, outputs, and alerting plan. All
/// facets are validated before a run starts.
struct MetricConfig {
  std::string policy_id;
  std::vector<std::string> taxonomy;
  DataSources data;
  SamplingConfig sampling;
  LabelProviderConfig provider;
  QualityGateConfig gate;
  RoganGladenConfig rogan_gladen;
  std::vector<std::string> segments;
  SegmentEstimator segment_estimator = SegmentEstimator::known_denominator;
  std::filesystem::path output_dir;
  AlertingConfig alerting;
  double max_ingest_error_rate = 0.0;
  std::string config_hash;  // canonical content hash, filled on load
};

MetricConfig metric_config_from_json(const json& j);
/// Parses, hashes, and resolves relative paths against the config file's
/// directory. Unknown keys are rejected at every level.
MetricConfig load_metric_config(const std::filesystem::path& path);

/// All validation problems, one message per facet; empty means runnable.
std::vector<std::string> validate_config(const MetricConfig& config);

/// Ingestion summary: counts, per-line errors, exact segment denominators.
struct IngestStats {
  std::uint64_t lines = 0;
  std::uint64_t records = 0;
  std::uint64_t errors = 0;
  std::vector<std::string> error_report;  // "line N: message", capped
  std::map<std::string, std::uint64_t> segment_denominators;  // includes "ALL"
  double imputation_value = 0.0;
};

/// Everything a daily run persists; sufficient to replay the estimates.
struct RunLineage {
  std::filesystem::path run_dir;
  SampleFileHeader header;
  IngestStats ingest;
  LabelingSummary labeling;
  std::optional<GoldSetReport> gold_report;
  std::optional<GateResult> gate_result;
  std::vector<std::string> empty_segments;  // declared segments with no sampled exposure
};

struct RunResult {
  std::vector<EstimateRecord> estimates;
  RunLineage lineage;
  std::optional<AlertDecision> alert;
};

/// Execute ingest -> impute -> weight -> sample -> label -> estimate ->
/// alert-eval for one (policy, day) and persist lineage atomically under
/// output_dir/policy/day. Deterministic: identical inputs give byte-identical
/// lineage and estimates.
RunResult run_daily(const MetricConfig& config, const std::string& day);

/// Recompute every estimate from a persisted run directory alone.
std::vector<EstimateRecord> replay_from_lineage(const std::filesystem::path& run_dir);

struct ScoreComparison {
  EstimateRecord estimate_a;
  EstimateRecord estimate_b;
  std::optional<EstimateRecord> estimate_unweighted;  // score_exponent = 0 reference
  double delta = 0.0;
  double combined_se = 0.0;
  double z = 1.96;
  bool agree = false;           // |delta| <= z * combined_se
  double ci_width_a = 0.0;      // expected locus of change across score versions
  double ci_width_b = 0.0;
};

/// Score-version consistency check: run the same day's sampling and
/// estimation under two score sources (same seed) and test whether the point
/// estimates agree within combined statistical uncertainty.
ScoreComparison compare_score_versions(const MetricConfig& config, const std::string& day,
                                       const std::filesystem::path& scores_a,
                                       const std::filesystem::path& scores_b, double z = 1.96,
                                       bool include_unweighted = false);

/// Plot-ready tabular outputs: a per-policy time series (with the 7-day
/// moving average where computable) and one segment pivot file per day.
void emit_dashboard_data(const std::vector<EstimateRecord>& estimates,
                         const std::filesystem::path& out_dir);

}  // namespace prevalence

#endif  // PREVALENCE_PIPELINE_HPP
