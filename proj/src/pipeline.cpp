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

#include "prevalence/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "prevalence/dates.hpp"
#include "prevalence/numeric.hpp"
#include "prevalence/sampler.hpp"

namespace prevalence {

namespace {

constexpr std::size_t kErrorReportCap = 100;
constexpr std::size_t kCoverageReportCap = 20;

using TruthMap = std::unordered_map<std::string, int>;
using ScoreMap = std::unordered_map<std::string, double>;

// --- config ------------------------------------------------------------------

std::filesystem::path get_path(const json& j, const char* key) { return j.at(key).get<std::string>(); }

ScoreImputation imputation_from_json(const json& j) {
  require_known_keys(j, {"policy", "value"}, "sampling.score_imputation");
  ScoreImputation imp;
  const std::string policy = j.at("policy").get<std::string>();
  if (policy == "day_median") {
    imp.kind = ScoreImputation::Kind::day_median;
  } else if (policy == "fixed") {
    imp.kind = ScoreImputation::Kind::fixed;
    if (!j.contains("value"))
      throw Error(Errc::invalid_config, "fixed score imputation needs a 'value'");
    imp.fixed_value = j.at("value").get<double>();
  } else {
    throw Error(Errc::invalid_config, "unknown imputation policy '" + policy + "'");
  }
  return imp;
}

json imputation_to_json(const ScoreImputation& imp) {
  json j;
  j["policy"] = imp.kind == ScoreImputation::Kind::day_median ? "day_median" : "fixed";
  if (imp.kind == ScoreImputation::Kind::fixed) j["value"] = imp.fixed_value;
  return j;
}

SamplingConfig sampling_from_json(const json& j) {
  require_known_keys(j,
                     {"sample_size", "impression_exponent", "score_exponent", "score_floor",
                      "scheme", "seed", "score_imputation"},
                     "sampling");
  SamplingConfig c;
  c.sample_size = j.at("sample_size").get<std::uint64_t>();
  c.impression_exponent = j.value("impression_exponent", 1.0);
  c.score_exponent = j.value("score_exponent", 0.0);
  c.score_floor = j.value("score_floor", 1e-6);
  const std::string scheme = j.value("scheme", "ppswor");
  if (scheme == "ppswor") {
    c.scheme = SamplingScheme::ppswor;
  } else if (scheme == "ppswr") {
    c.scheme = SamplingScheme::ppswr;
  } else {
    throw Error(Errc::invalid_config, "unknown sampling scheme '" + scheme + "'");
  }
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("score_imputation")) c.score_imputation = imputation_from_json(j.at("score_imputation"));
  return c;
}

}  // namespace

MetricConfig metric_config_from_json(const json& j) {
  require_known_keys(j,
                     {"policy_id", "taxonomy", "data", "sampling", "labeling", "quality_gate",
                      "rogan_gladen", "segments", "segment_estimator", "output_dir", "alerting",
                      "ingest"},
                     "config");
  MetricConfig c;
  c.policy_id = j.value("policy_id", "");
  if (j.contains("taxonomy"))
    c.taxonomy = j.at("taxonomy").get<std::vector<std::string>>();

  if (j.contains("data")) {
    const json& d = j.at("data");
    require_known_keys(d, {"impressions", "scores", "labels", "truth", "gold_set"}, "data");
    if (d.contains("impressions")) c.data.impressions = get_path(d, "impressions");
    if (d.contains("scores")) c.data.scores = get_path(d, "scores");
    if (d.contains("labels")) c.data.labels = get_path(d, "labels");
    if (d.contains("truth")) c.data.truth = get_path(d, "truth");
    if (d.contains("gold_set")) c.data.gold_set = get_path(d, "gold_set");
  }

  if (j.contains("sampling")) c.sampling = sampling_from_json(j.at("sampling"));

  if (j.contains("labeling")) {
    const json& l = j.at("labeling");
    require_known_keys(
        l, {"provider", "version", "sensitivity", "false_positive_rate", "seed", "latency_ms"},
        "labeling");
    const std::string kind = l.value("provider", "synthetic_oracle");
    if (kind == "synthetic_oracle") {
      c.provider.kind = LabelProviderConfig::Kind::synthetic_oracle;
    } else if (kind == "file_join") {
      c.provider.kind = LabelProviderConfig::Kind::file_join;
    } else if (kind == "mock_remote") {
      c.provider.kind = LabelProviderConfig::Kind::mock_remote;
    } else {
      throw Error(Errc::invalid_config, "unknown label provider '" + kind + "'");
    }
    c.provider.version = l.value("version", "v1");
    c.provider.sensitivity = l.value("sensitivity", 1.0);
    c.provider.false_positive_rate = l.value("false_positive_rate", 0.0);
    c.provider.seed = l.value("seed", std::uint64_t{0});
    c.provider.latency_ms = l.value("latency_ms", 0.0);
  }

  if (j.contains("quality_gate")) {
    const json& g = j.at("quality_gate");
    require_known_keys(g,
                       {"enabled", "min_accuracy", "min_precision", "min_recall", "min_f1",
                        "max_false_positive_rate", "min_gold_positives"},
                       "quality_gate");
    c.gate.enabled = g.value("enabled", false);
    if (g.contains("min_accuracy")) c.gate.thresholds.min_accuracy = g.at("min_accuracy").get<double>();
    if (g.contains("min_precision"))
      c.gate.thresholds.min_precision = g.at("min_precision").get<double>();
    if (g.contains("min_recall")) c.gate.thresholds.min_recall = g.at("min_recall").get<double>();
    if (g.contains("min_f1")) c.gate.thresholds.min_f1 = g.at("min_f1").get<double>();
    if (g.contains("max_false_positive_rate"))
      c.gate.thresholds.max_false_positive_rate = g.at("max_false_positive_rate").get<double>();
    c.gate.thresholds.min_gold_positives = g.value("min_gold_positives", std::uint64_t{1});
  }

  if (j.contains("rogan_gladen")) {
    const json& r = j.at("rogan_gladen");
    require_known_keys(r,
                       {"enabled", "source", "scope", "sensitivity", "false_positive_rate",
                        "sensitivity_se", "fpr_se"},
                       "rogan_gladen");
    c.rogan_gladen.enabled = r.value("enabled", false);
    const std::string source = r.value("source", "gold_set");
    if (source == "gold_set") {
      c.rogan_gladen.source = RoganGladenConfig::Source::gold_set;
    } else if (source == "fixed") {
      c.rogan_gladen.source = RoganGladenConfig::Source::fixed;
    } else {
      throw Error(Errc::invalid_config, "unknown rogan_gladen source '" + source + "'");
    }
    const std::string scope = r.value("scope", "global");
    if (scope == "global") {
      c.rogan_gladen.scope = RoganGladenConfig::Scope::global;
    } else if (scope == "all_segments") {
      c.rogan_gladen.scope = RoganGladenConfig::Scope::all_segments;
    } else {
      throw Error(Errc::invalid_config, "unknown rogan_gladen scope '" + scope + "'");
    }
    c.rogan_gladen.fixed_quality.sensitivity = r.value("sensitivity", 1.0);
    c.rogan_gladen.fixed_quality.false_positive_rate = r.value("false_positive_rate", 0.0);
    c.rogan_gladen.fixed_quality.sensitivity_se = r.value("sensitivity_se", 0.0);
    c.rogan_gladen.fixed_quality.fpr_se = r.value("fpr_se", 0.0);
  }

  if (j.contains("segments")) c.segments = j.at("segments").get<std::vector<std::string>>();
  if (j.contains("segment_estimator")) {
    const std::string s = j.at("segment_estimator").get<std::string>();
    if (s == "known_denominator") {
      c.segment_estimator = SegmentEstimator::known_denominator;
    } else if (s == "ratio") {
      c.segment_estimator = SegmentEstimator::ratio;
    } else {
      throw Error(Errc::invalid_config, "unknown segment_estimator '" + s + "'");
    }
  }
  if (j.contains("output_dir")) c.output_dir = get_path(j, "output_dir");

  if (j.contains("alerting")) {
    const json& a = j.at("alerting");
    require_known_keys(a,
                       {"enabled", "alpha", "power", "window_days", "baseline", "gap_days",
                        "inflate_from_history"},
                       "alerting");
    c.alerting.enabled = a.value("enabled", false);
    c.alerting.alpha = a.value("alpha", 0.05);
    c.alerting.power = a.value("power", 0.8);
    c.alerting.window_days = a.value("window_days", 7);
    c.alerting.baseline = a.value("baseline", 0.0);
    c.alerting.gap_days = a.value("gap_days", 0);
    c.alerting.inflate_from_history = a.value("inflate_from_history", false);
  }

  if (j.contains("ingest")) {
    const json& i = j.at("ingest");
    require_known_keys(i, {"max_error_rate"}, "ingest");
    c.max_ingest_error_rate = i.value("max_error_rate", 0.0);
  }

  c.config_hash = content_hash(j);
  return c;
}

MetricConfig load_metric_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_config, "cannot open config '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw Error(Errc::invalid_config, "config '" + path.string() + "' is not valid JSON");
  MetricConfig c;
  try {
    c = metric_config_from_json(j);
  } catch (const Error& e) {
    throw Error(Errc::invalid_config, path.string() + ": " + e.what());
  }
  const std::filesystem::path base = path.has_parent_path() ? path.parent_path() : ".";
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  auto resolve_opt = [&](std::optional<std::filesystem::path>& p) {
    if (p && p->is_relative()) *p = base / *p;
  };
  resolve(c.data.impressions);
  resolve_opt(c.data.scores);
  resolve_opt(c.data.labels);
  resolve_opt(c.data.truth);
  resolve_opt(c.data.gold_set);
  resolve(c.output_dir);
  return c;
}

std::vector<std::string> validate_config(const MetricConfig& config) {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };
  auto file_exists = [](const std::filesystem::path& p) {
    return std::filesystem::exists(p) && std::filesystem::is_regular_file(p);
  };

  check(!config.policy_id.empty(), "policy_id: must be nonempty");
  check(!config.data.impressions.empty(), "data.impressions: impression log path is required");
  if (!config.data.impressions.empty())
    check(file_exists(config.data.impressions),
          "data.impressions: path '" + config.data.impressions.string() + "' is not a file");
  for (const auto& [name, p] :
       {std::pair{"data.scores", config.data.scores}, {"data.labels", config.data.labels},
        {"data.truth", config.data.truth}, {"data.gold_set", config.data.gold_set}}) {
    if (p) check(file_exists(*p), std::string(name) + ": path '" + p->string() + "' is not a file");
  }

  check(config.sampling.sample_size >= 1, "sampling.sample_size: must be >= 1");
  check(config.sampling.impression_exponent >= 0.0,
        "sampling.impression_exponent: must be >= 0");
  check(config.sampling.score_exponent >= 0.0, "sampling.score_exponent: must be >= 0");
  check(config.sampling.score_floor > 0.0,
        "sampling.score_floor: must be > 0 (the weight formula adds it to the score term so "
        "every in-frame unit keeps positive probability)");
  if (config.sampling.score_imputation.kind == ScoreImputation::Kind::fixed)
    check(config.sampling.score_imputation.fixed_value > 0.0,
          "sampling.score_imputation.value: fixed imputation must be > 0");

  if (config.provider.kind == LabelProviderConfig::Kind::file_join)
    check(config.data.labels.has_value(), "labeling: file_join provider needs data.labels");
  if (config.provider.kind == LabelProviderConfig::Kind::synthetic_oracle ||
      config.provider.kind == LabelProviderConfig::Kind::mock_remote)
    check(config.data.truth.has_value(),
          "labeling: oracle and mock providers need data.truth (ground truth file)");
  if (config.provider.kind == LabelProviderConfig::Kind::mock_remote) {
    check(config.provider.sensitivity > 0.0 && config.provider.sensitivity <= 1.0,
          "labeling.sensitivity: must be in (0,1]");
    check(config.provider.false_positive_rate >= 0.0 && config.provider.false_positive_rate < 1.0,
          "labeling.false_positive_rate: must be in [0,1)");
  }

  if (config.gate.enabled)
    check(config.data.gold_set.has_value(),
          "quality_gate: enabled but data.gold_set is missing");
  if (config.rogan_gladen.enabled) {
    if (config.rogan_gladen.source == RoganGladenConfig::Source::gold_set) {
      check(config.data.gold_set.has_value(), "rogan_gladen: gold_set source needs data.gold_set");
    } else {
      check(config.rogan_gladen.fixed_quality.sensitivity >
                config.rogan_gladen.fixed_quality.false_positive_rate,
            "rogan_gladen: sensitivity must exceed false_positive_rate");
    }
  }

  for (const auto& s : config.segments)
    check(!s.empty() && s != kAllSegment,
          "segments: '" + s + "' is reserved or empty ('ALL' names the full sample)");

  check(!config.output_dir.empty(), "output_dir: must be set");

  check(config.alerting.alpha > 0.0 && config.alerting.alpha < 1.0,
        "alerting.alpha: must be in (0,1)");
  check(config.alerting.power > 0.0 && config.alerting.power < 1.0,
        "alerting.power: must be in (0,1)");
  check(config.alerting.window_days == 7,
        "alerting.window_days: must be 7 (the weekly MDE formulas assume 7-day windows)");
  check(config.alerting.gap_days >= 0, "alerting.gap_days: must be >= 0");
  check(config.alerting.baseline >= 0.0, "alerting.baseline: must be >= 0");

  check(config.max_ingest_error_rate >= 0.0 && config.max_ingest_error_rate <= 1.0,
        "ingest.max_error_rate: must be in [0,1]");
  return errors;
}

// --- ingestion ---------------------------------------------------------------

namespace {

ScoreMap load_score_overlay(const std::filesystem::path& path) {
  ScoreMap scores;
  for (const json& j : read_jsonl(path)) {
    require_known_keys(j, {"content_id", "score"}, "score record");
    const std::string id = j.at("content_id").get<std::string>();
    const double s = j.at("score").get<double>();
    if (!(s > 0.0 && s <= 1.0))
      throw Error(Errc::ingestion, "score for '" + id + "' must lie in (0,1]");
    scores[id] = s;
  }
  return scores;
}

TruthMap load_truth(const std::filesystem::path& path) {
  TruthMap truth;
  for (const json& j : read_jsonl(path)) {
    GoldRecord r = gold_record_from_json(j);
    truth[r.content_id] = r.truth;
  }
  return truth;
}

template <typename Fn>
void for_each_record_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    fn(line_no, line);
  }
}

std::optional<ContentRecord> parse_record(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ingestion, "invalid JSON");
  return content_record_from_json(j);
}

void apply_overlay(ContentRecord& record, const ScoreMap* overlay) {
  if (overlay == nullptr) return;
  auto it = overlay->find(record.content_id);
  if (it != overlay->end()) record.score = it->second;
}

/// First streaming pass: validate every line, accumulate exact segment
/// denominators, and collect scores for median imputation.
IngestStats ingest_scan(const std::filesystem::path& path, const ScoreMap* overlay,
                        const ScoreImputation& imputation, double max_error_rate) {
  IngestStats stats;
  std::vector<double> present_scores;
  bool any_scoreless = false;
  for_each_record_line(path, [&](std::size_t line_no, const std::string& line) {
    ++stats.lines;
    try {
      auto record = parse_record(line);
      apply_overlay(*record, overlay);
      ++stats.records;
      stats.segment_denominators[kAllSegment] += record->impressions;
      for (const auto& [seg, count] : record->segment_impressions)
        stats.segment_denominators[seg] += count;
      if (record->score) {
        present_scores.push_back(*record->score);
      } else {
        any_scoreless = true;
      }
    } catch (const Error& e) {
      ++stats.errors;
      if (stats.error_report.size() < kErrorReportCap)
        stats.error_report.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  });
  if (stats.records == 0)
    throw Error(Errc::ingestion, "impression log '" + path.string() + "' has no valid records");
  const double error_rate =
      static_cast<double>(stats.errors) / static_cast<double>(stats.lines);
  if (stats.errors > 0 && error_rate > max_error_rate) {
    std::string report = "ingestion error rate " + std::to_string(error_rate) +
                         " exceeds threshold " + std::to_string(max_error_rate) + " (" +
                         std::to_string(stats.errors) + "/" + std::to_string(stats.lines) +
                         " lines);";
    for (const auto& e : stats.error_report) report += "\n  " + e;
    throw Error(Errc::ingestion, report);
  }

  if (imputation.kind == ScoreImputation::Kind::fixed) {
    if (!(imputation.fixed_value > 0.0))
      throw Error(Errc::invalid_config, "fixed imputation value must be > 0");
    stats.imputation_value = imputation.fixed_value;
  } else if (!present_scores.empty()) {
    stats.imputation_value = numeric::median(std::move(present_scores));
  } else if (any_scoreless) {
    throw Error(Errc::ingestion,
                "day_median imputation needs at least one scored record; "
                "use fixed imputation for unscored days");
  } else {
    stats.imputation_value = 1.0;  // unused: every record carries a score
  }
  return stats;
}

std::vector<ContentRecord> materialize_records(const std::filesystem::path& path,
                                               const ScoreMap* overlay) {
  std::vector<ContentRecord> records;
  std::unordered_set<std::string> seen;
  for_each_record_line(path, [&](std::size_t, const std::string& line) {
    std::optional<ContentRecord> record;
    try {
      record = parse_record(line);
    } catch (const Error&) {
      return;  // malformed lines were already counted and reported by the scan
    }
    apply_overlay(*record, overlay);
    if (!seen.insert(record->content_id).second)
      throw Error(Errc::ingestion, "duplicate content_id '" + record->content_id +
                                       "' in stream; pre-aggregate units before sampling");
    records.push_back(std::move(*record));
  });
  return records;
}

// --- run assembly --------------------------------------------------------------

std::unique_ptr<LabelProvider> build_provider(const MetricConfig& config,
                                              const TruthMap* primary_truth,
                                              const TruthMap* fallback_truth) {
  TruthLookup lookup = [primary_truth, fallback_truth](const std::string& id) -> std::optional<int> {
    if (primary_truth != nullptr) {
      auto it = primary_truth->find(id);
      if (it != primary_truth->end()) return it->second;
    }
    if (fallback_truth != nullptr) {
      auto it = fallback_truth->find(id);
      if (it != fallback_truth->end()) return it->second;
    }
    return std::nullopt;
  };
  switch (config.provider.kind) {
    case LabelProviderConfig::Kind::synthetic_oracle:
      return std::make_unique<SyntheticOracleProvider>(lookup, config.provider.version);
    case LabelProviderConfig::Kind::mock_remote:
      return std::make_unique<MockRemoteProvider>(
          lookup, config.provider.sensitivity, config.provider.false_positive_rate,
          config.provider.seed, config.provider.latency_ms, config.provider.version);
    case LabelProviderConfig::Kind::file_join: {
      std::unordered_map<std::string, LabelResult> labels;
      for (const json& j : read_jsonl(*config.data.labels)) {
        LabelRecord r = label_record_from_json(j);
        labels[r.content_id] = LabelResult{r.label, r.confidence};
      }
      return std::make_unique<FileJoinProvider>(std::move(labels), config.provider.version);
    }
  }
  throw Error(Errc::invalid_config, "unreachable provider kind");
}

struct GoldEvaluation {
  GoldSetReport report;
  std::uint64_t abstained = 0;
};

GoldEvaluation evaluate_gold_file(const MetricConfig& config, const TruthMap* truth) {
  std::vector<GoldRecord> gold;
  TruthMap gold_truth;
  for (const json& j : read_jsonl(*config.data.gold_set)) {
    gold.push_back(gold_record_from_json(j));
    gold_truth[gold.back().content_id] = gold.back().truth;
  }
  if (gold.empty()) throw Error(Errc::invalid_config, "gold set is empty");

  auto provider = build_provider(config, &gold_truth, truth);
  GoldEvaluation eval;
  std::vector<int> predictions, truths;
  predictions.reserve(gold.size());
  truths.reserve(gold.size());
  for (const auto& g : gold) {
    std::optional<int> prediction = g.prediction;
    if (!prediction) {
      SampleDraw d;
      d.content_id = g.content_id;
      prediction = provider->label(d).label;
    }
    if (!prediction) {
      ++eval.abstained;
      continue;
    }
    predictions.push_back(*prediction);
    truths.push_back(g.truth);
  }
  if (predictions.empty())
    throw Error(Errc::gate_failed, "every gold item was abstained; decision quality unknown");
  eval.report = evaluate_gold_set(predictions, truths);
  return eval;
}

DrawWeighting weighting_for_scheme(const std::string& scheme) {
  return scheme == "ppswor" ? DrawWeighting::inclusion_probability
                            : DrawWeighting::draw_probability;
}

std::vector<EstimateRecord> compute_estimates(
    const std::vector<SampleDraw>& labeled, const SampleFileHeader& header,
    const std::vector<std::string>& segments, SegmentEstimator segment_estimator,
    const std::map<std::string, std::uint64_t>& denominators,
    const std::optional<LabelerQuality>& rg_quality, RoganGladenConfig::Scope rg_scope,
    std::vector<std::string>* empty_segments) {
  const DrawWeighting weighting = weighting_for_scheme(header.scheme);
  std::vector<EstimateRecord> records;

  auto push = [&](const std::string& segment, PrevalenceEstimate estimate, bool is_global) {
    if (rg_quality &&
        (rg_scope == RoganGladenConfig::Scope::all_segments || is_global)) {
      estimate = rogan_gladen_correct(estimate, *rg_quality);
    }
    EstimateRecord r;
    r.policy_id = header.policy_id;
    r.day = header.day;
    r.segment = segment;
    r.sample_id = header.sample_id;
    r.estimate = estimate;
    records.push_back(std::move(r));
  };

  PrevalenceEstimate global = weighting == DrawWeighting::inclusion_probability
                                  ? ht_hajek(labeled)
                                  : hh_ratio(std::span<const SampleDraw>(labeled));
  push(kAllSegment, global, true);

  for (const auto& segment : segments) {
    try {
      if (segment_estimator == SegmentEstimator::known_denominator) {
        auto it = denominators.find(segment);
        const double d = it == denominators.end() ? 0.0 : static_cast<double>(it->second);
        push(segment, segment_estimate_known_denominator(labeled, segment, d, weighting), false);
      } else {
        push(segment, segment_estimate_ratio(labeled, segment, weighting), false);
      }
    } catch (const Error& e) {
      if (e.code() != Errc::segment_empty) throw;
      if (empty_segments != nullptr) empty_segments->push_back(segment);
    }
  }
  return records;
}

json manifest_json(const MetricConfig& config, const RunLineage& lineage,
                   const std::optional<LabelerQuality>& rg_quality) {
  json m;
  m["policy_id"] = config.policy_id;
  m["day"] = lineage.header.day;
  m["config_hash"] = config.config_hash;
  m["sample_id"] = lineage.header.sample_id;
  m["taxonomy"] = config.taxonomy;
  m["scheme"] = lineage.header.scheme;
  json sampling;
  sampling["sample_size"] = config.sampling.sample_size;
  sampling["impression_exponent"] = config.sampling.impression_exponent;
  sampling["score_exponent"] = config.sampling.score_exponent;
  sampling["score_floor"] = config.sampling.score_floor;
  sampling["seed"] = config.sampling.seed;
  sampling["score_imputation"] = imputation_to_json(config.sampling.score_imputation);
  m["sampling"] = sampling;
  m["segments"] = config.segments;
  m["segment_estimator"] =
      config.segment_estimator == SegmentEstimator::known_denominator ? "known_denominator"
                                                                      : "ratio";
  m["denominators"] = lineage.ingest.segment_denominators;
  m["imputation_value"] = lineage.ingest.imputation_value;
  json ingest;
  ingest["lines"] = lineage.ingest.lines;
  ingest["records"] = lineage.ingest.records;
  ingest["errors"] = lineage.ingest.errors;
  ingest["error_report"] = lineage.ingest.error_report;
  m["ingest"] = ingest;
  json labeling;
  labeling["provider_version"] = lineage.labeling.provider_version;
  labeling["labeled"] = lineage.labeling.labeled;
  labeling["abstained"] = lineage.labeling.abstained;
  labeling["cost_metadata"] = lineage.labeling.cost_metadata;  // opaque pass-through
  m["labeling"] = labeling;
  if (lineage.gold_report) {
    const GoldSetReport& g = *lineage.gold_report;
    json gj;
    gj["n"] = g.n;
    gj["true_positives"] = g.true_positives;
    gj["false_negatives"] = g.false_negatives;
    gj["false_positives"] = g.false_positives;
    gj["true_negatives"] = g.true_negatives;
    gj["accuracy"] = g.accuracy;
    if (g.precision) gj["precision"] = *g.precision;
    if (g.recall) gj["recall"] = *g.recall;
    if (g.f1) gj["f1"] = *g.f1;
    if (g.false_positive_rate) gj["false_positive_rate"] = *g.false_positive_rate;
    m["gold_report"] = gj;
  }
  if (lineage.gate_result) {
    json gate;
    gate["pass"] = lineage.gate_result->pass;
    gate["reasons"] = lineage.gate_result->reasons;
    m["gate"] = gate;
  }
  if (rg_quality) {
    json rg;
    rg["sensitivity"] = rg_quality->sensitivity;
    rg["false_positive_rate"] = rg_quality->false_positive_rate;
    rg["sensitivity_se"] = rg_quality->sensitivity_se;
    rg["fpr_se"] = rg_quality->fpr_se;
    rg["scope"] =
        config.rogan_gladen.scope == RoganGladenConfig::Scope::global ? "global" : "all_segments";
    m["rogan_gladen"] = rg;
  }
  m["empty_segments"] = lineage.empty_segments;
  return m;
}

std::vector<EstimateRecord> upsert_series(const std::filesystem::path& series_path,
                                          const EstimateRecord& today) {
  std::map<std::string, EstimateRecord> by_day;
  if (std::filesystem::exists(series_path)) {
    for (const json& j : read_jsonl(series_path)) {
      EstimateRecord r = estimate_record_from_json(j);
      by_day[r.day] = std::move(r);
    }
  }
  by_day[today.day] = today;
  std::vector<json> lines;
  std::vector<EstimateRecord> series;
  for (const auto& [day, record] : by_day) {
    lines.push_back(to_json(record));
    series.push_back(record);
  }
  write_jsonl(series_path, lines);
  return series;
}

std::optional<AlertDecision> evaluate_alerting(const MetricConfig& config,
                                               const std::vector<EstimateRecord>& series_records,
                                               json* alert_json_out) {
  if (!config.alerting.enabled) return std::nullopt;
  std::vector<DayPoint> points;
  points.reserve(series_records.size());
  for (const auto& r : series_records)
    points.push_back(DayPoint{parse_day(r.day), r.estimate.theta_hat, r.estimate.variance});
  DailySeries series(std::move(points));

  MdePlan plan;
  plan.alpha = config.alerting.alpha;
  plan.power = config.alerting.power;
  plan.window_days = config.alerting.window_days;
  plan.baseline = config.alerting.baseline;

  // Daily sigma from the variances inside the comparison span; inflation from
  // history when configured and enough gap-free days exist.
  const int recent_end = series.points().back().day;
  const int span_start = recent_end - (2 * 7 + config.alerting.gap_days) + 1;
  numeric::CompensatedSum var_sum;
  std::size_t var_count = 0;
  for (const auto& p : series.points()) {
    if (p.day >= span_start && p.day <= recent_end) {
      var_sum.add(p.variance);
      ++var_count;
    }
  }
  double sigma = var_count > 0 ? std::sqrt(var_sum.value() / static_cast<double>(var_count)) : 0.0;
  double inflation = 1.0;
  if (config.alerting.inflate_from_history && series.size() >= 28 && !series.has_gaps()) {
    const auto rho = estimate_autocorrelation(series);
    inflation = variance_inflation(rho);
  }
  plan.mde_abs = mde_absolute(sigma * std::sqrt(inflation), plan.alpha, plan.power);
  plan.mde_rel = plan.baseline > 0.0 ? plan.mde_abs / plan.baseline : 0.0;

  AlertDecision decision = evaluate_alert(series, plan, config.alerting.gap_days);
  if (alert_json_out != nullptr) {
    json a;
    a["policy_id"] = config.policy_id;
    a["decision"] = decision.outcome == AlertDecision::Outcome::fire    ? "fire"
                    : decision.outcome == AlertDecision::Outcome::quiet ? "quiet"
                                                                        : "no_decision";
    a["delta"] = decision.delta;
    a["mde_abs"] = plan.mde_abs;
    a["mde_rel"] = plan.mde_rel;
    a["mean_recent"] = decision.mean_recent;
    a["mean_previous"] = decision.mean_previous;
    a["window_recent_end"] = format_day(decision.recent_end_day);
    a["window_previous_end"] = format_day(decision.previous_end_day);
    a["sigma"] = sigma;
    a["inflation"] = inflation;
    json missing = json::array();
    for (int d : decision.missing_days) missing.push_back(format_day(d));
    a["missing_days"] = missing;
    *alert_json_out = a;
  }
  return decision;
}

}  // namespace

RunResult run_daily(const MetricConfig& config, const std::string& day) {
  {
    const auto problems = validate_config(config);
    if (!problems.empty()) {
      std::string msg = "config invalid:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw Error(Errc::invalid_config, msg);
    }
  }
  parse_day(day);  // reject malformed run days up front

  RunResult result;
  RunLineage& lineage = result.lineage;

  // Ground truth and gold set come first: the decision-quality gate blocks
  // the run before any sampling spend.
  TruthMap truth;
  if (config.data.truth) truth = load_truth(*config.data.truth);
  std::optional<LabelerQuality> rg_quality;
  const bool need_gold =
      config.gate.enabled || (config.rogan_gladen.enabled &&
                              config.rogan_gladen.source == RoganGladenConfig::Source::gold_set);
  if (need_gold) {
    GoldEvaluation eval = evaluate_gold_file(config, &truth);
    lineage.gold_report = eval.report;
    if (config.gate.enabled) {
      lineage.gate_result = quality_gate(eval.report, config.gate.thresholds);
      if (!lineage.gate_result->pass) {
        std::string msg = "quality gate failed for policy '" + config.policy_id + "':";
        for (const auto& r : lineage.gate_result->reasons) msg += "\n  " + r;
        throw Error(Errc::gate_failed, msg);
      }
    }
  }
  if (config.rogan_gladen.enabled) {
    rg_quality = config.rogan_gladen.source == RoganGladenConfig::Source::gold_set
                     ? lineage.gold_report->labeler_quality()
                     : config.rogan_gladen.fixed_quality;
    if (!(rg_quality->sensitivity > rg_quality->false_positive_rate))
      throw Error(Errc::estimation,
                  "label-error correction undefined: estimated sensitivity does not exceed the "
                  "false positive rate");
  }

  // Ingest. Pass 1 validates and accumulates exact denominators; pass 2 feeds
  // the sampler (streaming for the reservoir, materialized for PPSWR).
  ScoreMap overlay;
  const ScoreMap* overlay_ptr = nullptr;
  if (config.data.scores) {
    overlay = load_score_overlay(*config.data.scores);
    overlay_ptr = &overlay;
  }
  lineage.ingest = ingest_scan(config.data.impressions, overlay_ptr,
                               config.sampling.score_imputation, config.max_ingest_error_rate);

  SampleFileHeader& header = lineage.header;
  header.policy_id = config.policy_id;
  header.day = day;
  header.scheme = config.sampling.scheme == SamplingScheme::ppswor ? "ppswor" : "ppswr";
  header.sample_size = config.sampling.sample_size;
  header.seed = config.sampling.seed;
  header.imputation_value = lineage.ingest.imputation_value;
  header.config_hash = config.config_hash;
  header.sample_id = content_hash(
      json{{"policy_id", config.policy_id}, {"day", day}, {"config_hash", config.config_hash}});

  std::vector<SampleDraw> draws;
  if (config.sampling.scheme == SamplingScheme::ppswor) {
    Reservoir reservoir(config.sampling);
    for_each_record_line(config.data.impressions, [&](std::size_t, const std::string& line) {
      std::optional<ContentRecord> record;
      try {
        record = parse_record(line);
      } catch (const Error&) {
        return;  // counted in the scan pass
      }
      apply_overlay(*record, overlay_ptr);
      reservoir.offer(*record, lineage.ingest.imputation_value);
    });
    draws = reservoir.draws();
    if (reservoir.full()) header.threshold = reservoir.threshold();
    header.total_weight_seen = reservoir.total_weight_seen();
    header.items_seen = reservoir.items_seen();
  } else {
    const auto records = materialize_records(config.data.impressions, overlay_ptr);
    std::vector<double> weights(records.size());
    numeric::CompensatedSum total;
    for (std::size_t i = 0; i < records.size(); ++i) {
      weights[i] = compute_weight(records[i], config.sampling, lineage.ingest.imputation_value);
      total.add(weights[i]);
    }
    draws = ppswr_sample(records, weights, config.sampling.sample_size, config.sampling.seed);
    header.total_weight_seen = total.value();
    header.items_seen = records.size();
  }

  // Label.
  auto provider = build_provider(config, &truth, nullptr);
  lineage.labeling = label_sample(draws, *provider);

  std::vector<SampleDraw> labeled;
  labeled.reserve(draws.size());
  for (const auto& d : draws) {
    if (d.label) labeled.push_back(d);
  }
  if (labeled.empty())
    throw Error(Errc::estimation, "no labeled draws after abstentions; cannot estimate");

  // Estimate.
  result.estimates =
      compute_estimates(labeled, header, config.segments, config.segment_estimator,
                        lineage.ingest.segment_denominators, rg_quality,
                        config.rogan_gladen.scope, &lineage.empty_segments);

  // Persist lineage atomically: build the run directory next to its final
  // location, then swap it in.
  const std::filesystem::path policy_dir = config.output_dir / config.policy_id;
  const std::filesystem::path run_dir = policy_dir / day;
  const std::filesystem::path tmp_dir = policy_dir / (day + ".tmp");
  std::filesystem::create_directories(policy_dir);
  std::filesystem::remove_all(tmp_dir);
  std::filesystem::create_directories(tmp_dir);

  write_sample_file(tmp_dir / "sample.jsonl", header, draws);
  {
    std::vector<json> label_lines;
    label_lines.reserve(draws.size());
    for (const auto& d : draws) {
      LabelRecord r;
      r.content_id = d.content_id;
      r.label = d.label;
      r.provider_version = lineage.labeling.provider_version;
      label_lines.push_back(to_json(r));
    }
    write_jsonl(tmp_dir / "labels.jsonl", label_lines);
  }
  {
    std::vector<json> estimate_lines;
    for (const auto& r : result.estimates) estimate_lines.push_back(to_json(r));
    write_jsonl(tmp_dir / "estimates.jsonl", estimate_lines);
  }
  atomic_write_text(tmp_dir / "manifest.json", manifest_json(config, lineage, rg_quality).dump(2) + "\n");

  std::filesystem::remove_all(run_dir);
  std::filesystem::rename(tmp_dir, run_dir);
  lineage.run_dir = run_dir;

  // Series + alerting.
  const auto series = upsert_series(policy_dir / "series.jsonl", result.estimates.front());
  json alert_json;
  result.alert = evaluate_alerting(config, series, &alert_json);
  if (result.alert)
    atomic_write_text(run_dir / "alert.json", alert_json.dump(2) + "\n");

  return result;
}

std::vector<EstimateRecord> replay_from_lineage(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw Error(Errc::io, "cannot open manifest in '" + run_dir.string() + "'");
  json manifest = json::parse(in);

  auto [header, draws] = read_sample_file(run_dir / "sample.jsonl");

  std::unordered_map<std::string, std::optional<int>> labels;
  for (const json& j : read_jsonl(run_dir / "labels.jsonl")) {
    LabelRecord r = label_record_from_json(j);
    labels[r.content_id] = r.label;
  }
  std::vector<SampleDraw> labeled;
  labeled.reserve(draws.size());
  for (auto& d : draws) {
    auto it = labels.find(d.content_id);
    if (it == labels.end())
      throw Error(Errc::estimation, "lineage labels missing '" + d.content_id + "'");
    if (!it->second) continue;  // abstained
    d.label = it->second;
    labeled.push_back(d);
  }

  std::vector<std::string> segments = manifest.at("segments").get<std::vector<std::string>>();
  const SegmentEstimator segment_estimator =
      manifest.at("segment_estimator").get<std::string>() == "ratio"
          ? SegmentEstimator::ratio
          : SegmentEstimator::known_denominator;
  std::map<std::string, std::uint64_t> denominators =
      manifest.at("denominators").get<std::map<std::string, std::uint64_t>>();

  std::optional<LabelerQuality> rg_quality;
  auto rg_scope = RoganGladenConfig::Scope::global;
  if (manifest.contains("rogan_gladen")) {
    const json& rg = manifest.at("rogan_gladen");
    LabelerQuality q;
    q.sensitivity = rg.at("sensitivity").get<double>();
    q.false_positive_rate = rg.at("false_positive_rate").get<double>();
    q.sensitivity_se = rg.at("sensitivity_se").get<double>();
    q.fpr_se = rg.at("fpr_se").get<double>();
    rg_quality = q;
    if (rg.at("scope").get<std::string>() == "all_segments")
      rg_scope = RoganGladenConfig::Scope::all_segments;
  }

  return compute_estimates(labeled, header, segments, segment_estimator, denominators, rg_quality,
                           rg_scope, nullptr);
}

ScoreComparison compare_score_versions(const MetricConfig& config, const std::string& day,
                                       const std::filesystem::path& scores_a,
                                       const std::filesystem::path& scores_b, double z,
                                       bool include_unweighted) {
  if (!(z > 0.0)) throw Error(Errc::invalid_argument, "z must be > 0");
  TruthMap truth;
  if (config.data.truth) truth = load_truth(*config.data.truth);

  const auto base_records = materialize_records(config.data.impressions, nullptr);
  if (base_records.empty())
    throw Error(Errc::ingestion, "impression log has no valid records");

  auto run_with_scores = [&](const std::optional<std::filesystem::path>& scores_path,
                             double score_exponent) -> EstimateRecord {
    std::vector<ContentRecord> records = base_records;
    if (scores_path) {
      const ScoreMap overlay = load_score_overlay(*scores_path);
      std::vector<std::string> uncovered;
      for (auto& r : records) {
        auto it = overlay.find(r.content_id);
        if (it == overlay.end()) {
          if (uncovered.size() < kCoverageReportCap) uncovered.push_back(r.content_id);
          continue;
        }
        r.score = it->second;
      }
      if (!uncovered.empty()) {
        std::string msg = "score source '" + scores_path->string() + "' does not cover " +
                          std::to_string(uncovered.size()) + "+ units:";
        for (const auto& id : uncovered) msg += " " + id;
        throw Error(Errc::ingestion, msg);
      }
    }

    SamplingConfig sampling = config.sampling;
    sampling.score_exponent = score_exponent;
    const double imputed = imputation_value(records, sampling.score_imputation);

    std::vector<SampleDraw> draws;
    SampleFileHeader header;
    header.policy_id = config.policy_id;
    header.day = day;
    header.sample_id = "score-comparison";
    header.scheme = sampling.scheme == SamplingScheme::ppswor ? "ppswor" : "ppswr";
    if (sampling.scheme == SamplingScheme::ppswor) {
      Reservoir reservoir(sampling);
      for (const auto& r : records) reservoir.offer(r, imputed);
      draws = reservoir.draws();
    } else {
      std::vector<double> weights(records.size());
      for (std::size_t i = 0; i < records.size(); ++i)
        weights[i] = compute_weight(records[i], sampling, imputed);
      draws = ppswr_sample(records, weights, sampling.sample_size, sampling.seed);
    }

    auto provider = build_provider(config, &truth, nullptr);
    std::vector<SampleDraw> mutable_draws = std::move(draws);
    label_sample(mutable_draws, *provider);
    std::vector<SampleDraw> labeled;
    for (const auto& d : mutable_draws) {
      if (d.label) labeled.push_back(d);
    }
    if (labeled.empty()) throw Error(Errc::estimation, "no labeled draws in score comparison");

    EstimateRecord record;
    record.policy_id = config.policy_id;
    record.day = day;
    record.segment = kAllSegment;
    record.sample_id = header.sample_id;
    record.estimate = sampling.scheme == SamplingScheme::ppswor
                          ? ht_hajek(labeled)
                          : hh_ratio(std::span<const SampleDraw>(labeled));
    return record;
  };

  ScoreComparison cmp;
  cmp.z = z;
  cmp.estimate_a = run_with_scores(scores_a, config.sampling.score_exponent);
  cmp.estimate_b = run_with_scores(scores_b, config.sampling.score_exponent);
  if (include_unweighted) cmp.estimate_unweighted = run_with_scores(std::nullopt, 0.0);

  cmp.delta = cmp.estimate_a.estimate.raw_theta_hat - cmp.estimate_b.estimate.raw_theta_hat;
  cmp.combined_se =
      std::sqrt(cmp.estimate_a.estimate.variance + cmp.estimate_b.estimate.variance);
  cmp.agree = std::abs(cmp.delta) <= z * cmp.combined_se;
  cmp.ci_width_a = cmp.estimate_a.estimate.raw_ci_high - cmp.estimate_a.estimate.raw_ci_low;
  cmp.ci_width_b = cmp.estimate_b.estimate.raw_ci_high - cmp.estimate_b.estimate.raw_ci_low;
  return cmp;
}

void emit_dashboard_data(const std::vector<EstimateRecord>& estimates,
                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::map<std::string, const EstimateRecord*> global_by_day;
  std::map<std::string, std::vector<const EstimateRecord*>> segments_by_day;
  for (const auto& r : estimates) {
    if (r.segment == kAllSegment) {
      global_by_day[r.day] = &r;
    } else {
      segments_by_day[r.day].push_back(&r);
    }
  }

  std::vector<DayPoint> points;
  for (const auto& [day, record] : global_by_day)
    points.push_back(
        DayPoint{parse_day(day), record->estimate.theta_hat, record->estimate.variance});
  DailySeries series(std::move(points));

  std::vector<json> rows;
  for (const auto& [day, record] : global_by_day) {
    json row;
    row["day"] = day;
    row["theta"] = record->estimate.theta_hat;
    row["ci_low"] = record->estimate.ci_low;
    row["ci_high"] = record->estimate.ci_high;
    row["ess"] = record->estimate.ess;
    try {
      row["ma7"] = moving_average_7(series, parse_day(day));
    } catch (const Error&) {
      // fewer than 7 consecutive days ending here; leave the column out
    }
    rows.push_back(std::move(row));
  }
  write_jsonl(out_dir / "timeseries.jsonl", rows);

  for (const auto& [day, records] : segments_by_day) {
    std::vector<const EstimateRecord*> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const EstimateRecord* a, const EstimateRecord* b) { return a->segment < b->segment; });
    std::vector<json> pivot;
    for (const EstimateRecord* r : sorted) {
      json row;
      row["segment"] = r->segment;
      row["estimator"] = estimator_kind_name(r->estimate.kind);
      row["theta"] = r->estimate.theta_hat;
      row["ci_low"] = r->estimate.ci_low;
      row["ci_high"] = r->estimate.ci_high;
      row["ess"] = r->estimate.ess;
      row["n_draws"] = r->estimate.n_draws;
      pivot.push_back(std::move(row));
    }
    write_jsonl(out_dir / ("segments_" + day + ".jsonl"), pivot);
  }
}

}  // namespace prevalence
