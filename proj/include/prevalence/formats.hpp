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

#ifndef PREVALENCE_FORMATS_HPP
#define PREVALENCE_FORMATS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prevalence/estimator.hpp"
#include "prevalence/types.hpp"

// Line-delimited JSON wire formats. Field names here are the documented
// external interface; see the format reference in README.md.

namespace prevalence {

using json = nlohmann::json;

/// Throws on keys outside `allowed` (strict schemas prevent silent drift).
void require_known_keys(const json& object, std::initializer_list<const char*> allowed,
                        const std::string& context);

// --- impression log records ------------------------------------------------

json to_json(const ContentRecord& record);
ContentRecord content_record_from_json(const json& j);

// --- sample files ------------------------------------------------------------

/// Run-level header carried as the first line of a sample file.
struct SampleFileHeader {
  std::string policy_id;
  std::string day;
  std::string scheme;  // "ppswor" | "ppswr"
  std::uint64_t sample_size = 0;
  std::uint64_t seed = 0;
  std::optional<double> threshold;  // tau, present once a reservoir filled
  double total_weight_seen = 0.0;
  std::uint64_t items_seen = 0;
  double imputation_value = 0.0;
  std::string config_hash;
  std::string sample_id;
};

json to_json(const SampleFileHeader& header);
SampleFileHeader sample_header_from_json(const json& j);

json to_json(const SampleDraw& draw);
SampleDraw sample_draw_from_json(const json& j);

void write_sample_file(const std::filesystem::path& path, const SampleFileHeader& header,
                       const std::vector<SampleDraw>& draws);
std::pair<SampleFileHeader, std::vector<SampleDraw>> read_sample_file(
    const std::filesystem::path& path);

// --- label files -------------------------------------------------------------

struct LabelRecord {
  std::string content_id;
  std::optional<int> label;  // null = abstention
  std::string provider_version;
  std::optional<double> confidence;
};

json to_json(const LabelRecord& record);
LabelRecord label_record_from_json(const json& j);

// --- gold sets ---------------------------------------------------------------

struct GoldRecord {
  std::string content_id;
  int truth = 0;
  std::optional<int> prediction;
};

GoldRecord gold_record_from_json(const json& j);

// --- estimate records ----------------------------------------------------------

struct EstimateRecord {
  std::string policy_id;
  std::string day;
  std::string segment;  // segment key or "ALL"
  std::string sample_id;
  PrevalenceEstimate estimate;
};

json to_json(const EstimateRecord& record);
EstimateRecord estimate_record_from_json(const json& j);

const char* estimator_kind_name(EstimatorKind kind);
EstimatorKind estimator_kind_from_name(const std::string& name);
std::vector<std::string> flag_names(const EstimateFlags& flags);

// --- generic jsonl helpers ------------------------------------------------------

std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& lines);

/// Write-then-rename. The temp file lives next to the target.
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

/// FNV-1a over a canonical (key-sorted) dump; hex string. Content hash for
/// idempotence and drift detection, not a cryptographic digest.
std::string content_hash(const json& j);

}  // namespace prevalence

#endif  // PREVALENCE_FORMATS_HPP
