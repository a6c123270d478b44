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

#include "prevalence/formats.hpp"

#include <cmath>
#include <fstream>

#include "prevalence/rng.hpp"

namespace prevalence {

namespace {

[[noreturn]] void schema_error(const std::string& context, const std::string& detail) {
  throw Error(Errc::ingestion, context + ": " + detail);
}

const json& require_field(const json& j, const char* key, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end()) schema_error(context, std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key, const std::string& context) {
  const json& v = require_field(j, key, context);
  if (!v.is_string()) schema_error(context, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t get_uint(const json& j, const char* key, const std::string& context) {
  const json& v = require_field(j, key, context);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    schema_error(context, std::string("field '") + key + "' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

double get_double(const json& j, const char* key, const std::string& context) {
  const json& v = require_field(j, key, context);
  if (!v.is_number()) schema_error(context, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

void require_known_keys(const json& object, std::initializer_list<const char*> allowed,
                        const std::string& context) {
  if (!object.is_object()) schema_error(context, "expected a JSON object");
  for (auto it = object.begin(); it != object.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) schema_error(context, "unknown key '" + it.key() + "'");
  }
}

json to_json(const ContentRecord& record) {
  json j;
  j["content_id"] = record.content_id;
  j["impressions"] = record.impressions;
  if (!record.segment_impressions.empty()) j["segments"] = record.segment_impressions;
  if (record.score) j["score"] = *record.score;
  return j;
}

ContentRecord content_record_from_json(const json& j) {
  const std::string context = "impression record";
  require_known_keys(j, {"content_id", "impressions", "segments", "score"}, context);
  ContentRecord r;
  r.content_id = get_string(j, "content_id", context);
  if (r.content_id.empty()) schema_error(context, "content_id must be nonempty");
  r.impressions = get_uint(j, "impressions", context);
  if (r.impressions < 1) schema_error(context, "impressions must be >= 1 for in-frame units");
  if (j.contains("segments")) {
    const json& segs = j["segments"];
    if (!segs.is_object()) schema_error(context, "segments must be an object");
    std::uint64_t total = 0;
    for (auto it = segs.begin(); it != segs.end(); ++it) {
      if (!it.value().is_number_unsigned() &&
          !(it.value().is_number_integer() && it.value().get<std::int64_t>() >= 0))
        schema_error(context, "segment counts must be nonnegative integers");
      const auto count = it.value().get<std::uint64_t>();
      r.segment_impressions[it.key()] = count;
      total += count;
    }
    if (total != r.impressions)
      schema_error(context, "segment impressions sum to " + std::to_string(total) +
                                " but impressions = " + std::to_string(r.impressions));
  }
  if (j.contains("score")) {
    const double s = get_double(j, "score", context);
    if (!(s > 0.0 && s <= 1.0)) schema_error(context, "score must lie in (0,1]");
    r.score = s;
  }
  return r;
}

json to_json(const SampleFileHeader& header) {
  json j;
  j["kind"] = "header";
  j["policy_id"] = header.policy_id;
  j["day"] = header.day;
  j["scheme"] = header.scheme;
  j["sample_size"] = header.sample_size;
  j["seed"] = header.seed;
  if (header.threshold) j["threshold"] = *header.threshold;
  j["total_weight_seen"] = header.total_weight_seen;
  j["items_seen"] = header.items_seen;
  j["imputation_value"] = header.imputation_value;
  j["config_hash"] = header.config_hash;
  j["sample_id"] = header.sample_id;
  return j;
}

SampleFileHeader sample_header_from_json(const json& j) {
  const std::string context = "sample header";
  require_known_keys(j,
                     {"kind", "policy_id", "day", "scheme", "sample_size", "seed", "threshold",
                      "total_weight_seen", "items_seen", "imputation_value", "config_hash",
                      "sample_id"},
                     context);
  if (get_string(j, "kind", context) != "header")
    schema_error(context, "first line of a sample file must be the run header");
  SampleFileHeader h;
  h.policy_id = get_string(j, "policy_id", context);
  h.day = get_string(j, "day", context);
  h.scheme = get_string(j, "scheme", context);
  h.sample_size = get_uint(j, "sample_size", context);
  h.seed = get_uint(j, "seed", context);
  if (j.contains("threshold")) h.threshold = get_double(j, "threshold", context);
  h.total_weight_seen = get_double(j, "total_weight_seen", context);
  h.items_seen = get_uint(j, "items_seen", context);
  h.imputation_value = get_double(j, "imputation_value", context);
  h.config_hash = get_string(j, "config_hash", context);
  h.sample_id = get_string(j, "sample_id", context);
  return h;
}

json to_json(const SampleDraw& draw) {
  json j;
  j["content_id"] = draw.content_id;
  j["impressions"] = draw.impressions;
  if (!draw.segment_impressions.empty()) j["segments"] = draw.segment_impressions;
  j["weight"] = draw.weight;
  if (draw.draw_probability) j["draw_probability"] = *draw.draw_probability;
  if (draw.inclusion_probability) j["inclusion_probability"] = *draw.inclusion_probability;
  if (draw.label) j["label"] = *draw.label;
  return j;
}

SampleDraw sample_draw_from_json(const json& j) {
  const std::string context = "sample draw";
  require_known_keys(
      j, {"content_id", "impressions", "segments", "weight", "draw_probability",
          "inclusion_probability", "label"},
      context);
  SampleDraw d;
  d.content_id = get_string(j, "content_id", context);
  d.impressions = get_uint(j, "impressions", context);
  if (j.contains("segments")) {
    for (auto it = j["segments"].begin(); it != j["segments"].end(); ++it)
      d.segment_impressions[it.key()] = it.value().get<std::uint64_t>();
  }
  d.weight = get_double(j, "weight", context);
  if (j.contains("draw_probability")) d.draw_probability = get_double(j, "draw_probability", context);
  if (j.contains("inclusion_probability"))
    d.inclusion_probability = get_double(j, "inclusion_probability", context);
  if (j.contains("label")) d.label = j["label"].get<int>();
  return d;
}

void write_sample_file(const std::filesystem::path& path, const SampleFileHeader& header,
                       const std::vector<SampleDraw>& draws) {
  std::string out = to_json(header).dump();
  out += '\n';
  for (const auto& d : draws) {
    out += to_json(d).dump();
    out += '\n';
  }
  atomic_write_text(path, out);
}

std::pair<SampleFileHeader, std::vector<SampleDraw>> read_sample_file(
    const std::filesystem::path& path) {
  const std::vector<json> lines = read_jsonl(path);
  if (lines.empty()) throw Error(Errc::io, "sample file '" + path.string() + "' is empty");
  SampleFileHeader header = sample_header_from_json(lines.front());
  std::vector<SampleDraw> draws;
  draws.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) draws.push_back(sample_draw_from_json(lines[i]));
  return {std::move(header), std::move(draws)};
}

json to_json(const LabelRecord& record) {
  json j;
  j["content_id"] = record.content_id;
  j["label"] = record.label ? json(*record.label) : json(nullptr);
  j["provider_version"] = record.provider_version;
  if (record.confidence) j["confidence"] = *record.confidence;
  return j;
}

LabelRecord label_record_from_json(const json& j) {
  const std::string context = "label record";
  require_known_keys(j, {"content_id", "label", "provider_version", "confidence"}, context);
  LabelRecord r;
  r.content_id = get_string(j, "content_id", context);
  const json& label = require_field(j, "label", context);
  if (!label.is_null()) {
    const int v = label.get<int>();
    if (v != 0 && v != 1) schema_error(context, "label must be 0, 1, or null");
    r.label = v;
  }
  r.provider_version = get_string(j, "provider_version", context);
  if (j.contains("confidence")) r.confidence = get_double(j, "confidence", context);
  return r;
}

GoldRecord gold_record_from_json(const json& j) {
  const std::string context = "gold record";
  require_known_keys(j, {"content_id", "truth", "prediction"}, context);
  GoldRecord r;
  r.content_id = get_string(j, "content_id", context);
  const int truth = static_cast<int>(get_uint(j, "truth", context));
  if (truth != 0 && truth != 1) schema_error(context, "truth must be 0 or 1");
  r.truth = truth;
  if (j.contains("prediction")) {
    const int p = static_cast<int>(get_uint(j, "prediction", context));
    if (p != 0 && p != 1) schema_error(context, "prediction must be 0 or 1");
    r.prediction = p;
  }
  return r;
}

const char* estimator_kind_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::hh_ratio:
      return "hh_ratio";
    case EstimatorKind::ht_known_denominator:
      return "ht_known_denominator";
    case EstimatorKind::ht_hajek:
      return "ht_hajek";
  }
  return "hh_ratio";
}

EstimatorKind estimator_kind_from_name(const std::string& name) {
  if (name == "hh_ratio") return EstimatorKind::hh_ratio;
  if (name == "ht_known_denominator") return EstimatorKind::ht_known_denominator;
  if (name == "ht_hajek") return EstimatorKind::ht_hajek;
  throw Error(Errc::ingestion, "unknown estimator kind '" + name + "'");
}

std::vector<std::string> flag_names(const EstimateFlags& flags) {
  std::vector<std::string> names;
  if (flags.ci_clamped) names.push_back("ci_clamped");
  if (flags.theta_clamped) names.push_back("theta_clamped");
  if (flags.variance_unavailable) names.push_back("variance_unavailable");
  if (flags.rogan_gladen_corrected) names.push_back("rg_corrected");
  if (flags.hajek_variance_approx) names.push_back("hajek_variance_approx");
  return names;
}

json to_json(const EstimateRecord& record) {
  const PrevalenceEstimate& e = record.estimate;
  json j;
  j["policy_id"] = record.policy_id;
  j["day"] = record.day;
  j["segment"] = record.segment;
  j["sample_id"] = record.sample_id;
  j["estimator"] = estimator_kind_name(e.kind);
  j["theta"] = e.theta_hat;
  j["ci_low"] = e.ci_low;
  j["ci_high"] = e.ci_high;
  j["variance"] = e.variance;
  j["ess"] = e.ess;
  j["sample_positive_rate"] = e.sample_positive_rate;
  j["n_draws"] = e.n_draws;
  j["flags"] = flag_names(e.flags);
  json diag;
  diag["raw_theta"] = e.raw_theta_hat;
  diag["raw_ci_low"] = e.raw_ci_low;
  diag["raw_ci_high"] = e.raw_ci_high;
  j["diagnostics"] = diag;
  return j;
}

EstimateRecord estimate_record_from_json(const json& j) {
  const std::string context = "estimate record";
  require_known_keys(j,
                     {"policy_id", "day", "segment", "sample_id", "estimator", "theta", "ci_low",
                      "ci_high", "variance", "ess", "sample_positive_rate", "n_draws", "flags",
                      "diagnostics"},
                     context);
  EstimateRecord r;
  r.policy_id = get_string(j, "policy_id", context);
  r.day = get_string(j, "day", context);
  r.segment = get_string(j, "segment", context);
  r.sample_id = get_string(j, "sample_id", context);
  PrevalenceEstimate& e = r.estimate;
  e.kind = estimator_kind_from_name(get_string(j, "estimator", context));
  e.theta_hat = get_double(j, "theta", context);
  e.ci_low = get_double(j, "ci_low", context);
  e.ci_high = get_double(j, "ci_high", context);
  e.variance = get_double(j, "variance", context);
  e.ess = get_double(j, "ess", context);
  e.sample_positive_rate = get_double(j, "sample_positive_rate", context);
  e.n_draws = get_uint(j, "n_draws", context);
  for (const auto& flag : require_field(j, "flags", context)) {
    const std::string name = flag.get<std::string>();
    if (name == "ci_clamped") e.flags.ci_clamped = true;
    if (name == "theta_clamped") e.flags.theta_clamped = true;
    if (name == "variance_unavailable") e.flags.variance_unavailable = true;
    if (name == "rg_corrected") e.flags.rogan_gladen_corrected = true;
    if (name == "hajek_variance_approx") e.flags.hajek_variance_approx = true;
  }
  const json& diag = require_field(j, "diagnostics", context);
  e.raw_theta_hat = get_double(diag, "raw_theta", context);
  e.raw_ci_low = get_double(diag, "raw_ci_low", context);
  e.raw_ci_high = get_double(diag, "raw_ci_high", context);
  return r;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(Errc::ingestion,
                  path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    out.push_back(std::move(j));
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::string out;
  for (const auto& j : lines) {
    out += j.dump();
    out += '\n';
  }
  atomic_write_text(path, out);
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw Error(Errc::io, "failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string content_hash(const json& j) {
  const std::uint64_t h = rng::fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace prevalence
