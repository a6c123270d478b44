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

#ifndef PREVALENCE_TYPES_HPP
#define PREVALENCE_TYPES_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace prevalence {

/// Failure category; the CLI maps these to distinct exit codes.
enum class Errc {
  invalid_argument,   // precondition violation in a library call
  invalid_config,     // metric config failed validation
  ingestion,          // malformed input records / duplicate ids
  gate_failed,        // decision-quality gate blocked the run
  estimation,         // estimator cannot produce a defined result
  segment_empty,      // no sampled impressions in the requested segment
  insufficient_data,  // not enough history / draws for the operation
  io,                 // file system or serialization failure
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

/// One content unit's daily exposure: total impressions, the optional
/// per-segment breakdown (values must sum to the total when present), and
/// the optional auxiliary risk score in (0,1].
struct ContentRecord {
  std::string content_id;
  std::uint64_t impressions = 0;
  std::map<std::string, std::uint64_t> segment_impressions;
  std::optional<double> score;
};

enum class SamplingScheme { ppswor, ppswr };

/// Policy for filling in missing auxiliary scores before weighting.
struct ScoreImputation {
  enum class Kind { day_median, fixed } kind = Kind::day_median;
  double fixed_value = 0.0;  // used when kind == fixed; must be > 0
};

/// Knobs for the sampling design: weight = impressions^impression_exponent *
/// (score^score_exponent + score_floor), drawn either without replacement
/// (weighted reservoir) or with replacement (multinomial).
struct SamplingConfig {
  std::uint64_t sample_size = 0;      // m
  double impression_exponent = 1.0;   // >= 0
  double score_exponent = 0.0;        // >= 0
  double score_floor = 1e-6;          // > 0
  SamplingScheme scheme = SamplingScheme::ppswor;
  std::uint64_t seed = 0;
  ScoreImputation score_imputation;

  void validate() const {
    if (sample_size < 1) throw Error(Errc::invalid_argument, "sample_size must be >= 1");
    if (!(impression_exponent >= 0.0))
      throw Error(Errc::invalid_argument, "impression_exponent must be >= 0");
    if (!(score_exponent >= 0.0)) throw Error(Errc::invalid_argument, "score_exponent must be >= 0");
    if (!(score_floor > 0.0)) throw Error(Errc::invalid_argument, "score_floor must be > 0");
    if (score_imputation.kind == ScoreImputation::Kind::fixed && !(score_imputation.fixed_value > 0.0))
      throw Error(Errc::invalid_argument, "fixed imputation value must be > 0");
  }

  bool same_design(const SamplingConfig& other) const {
    return sample_size == other.sample_size && impression_exponent == other.impression_exponent &&
           score_exponent == other.score_exponent && score_floor == other.score_floor &&
           scheme == other.scheme && seed == other.seed;
  }
};

/// A sampled unit together with everything the estimator needs: the sampling
/// weight, the draw probability (with-replacement designs) or inclusion
/// probability (without-replacement designs), and the segment breakdown.
/// The label is attached later by the labeling stage; nullopt means unlabeled.
struct SampleDraw {
  std::string content_id;
  std::uint64_t impressions = 0;                          // x_i
  std::map<std::string, std::uint64_t> segment_impressions;
  double weight = 0.0;
  std::optional<double> draw_probability;       // p_i, > 0 (PPSWR)
  std::optional<double> inclusion_probability;  // pi_i, in (0,1) (PPSWOR)
  std::optional<int> label;                     // Y in {0,1}
};

}  // namespace prevalence

#endif  // PREVALENCE_TYPES_HPP
