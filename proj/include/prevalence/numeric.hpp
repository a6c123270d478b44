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

#ifndef PREVALENCE_NUMERIC_HPP
#define PREVALENCE_NUMERIC_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace prevalence::numeric {

/// Neumaier-compensated accumulator. Inverse-probability weights span many
/// orders of magnitude, so plain summation loses digits on long streams.
class CompensatedSum {
 public:
  void add(double value) {
    double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      comp_ += (sum_ - t) + value;
    } else {
      comp_ += (value - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

double normal_cdf(double x);

/// Inverse standard normal CDF. Acklam's rational approximation refined with
/// one Halley step, accurate to ~1 ulp over (0,1); exceeds the 1e-8 target.
double normal_quantile(double p);

/// Linear interpolation between order statistics (the "type 7" rule used by
/// most statistics environments). Input need not be sorted.
double quantile_type7(std::vector<double> values, double q);

/// Median of the inputs; mean of the two middle order statistics for even n.
double median(std::vector<double> values);

}  // namespace prevalence::numeric

#endif  // PREVALENCE_NUMERIC_HPP
