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

#ifndef PREVALENCE_DATES_HPP
#define PREVALENCE_DATES_HPP

#include <cstdio>
#include <string>

#include "prevalence/types.hpp"

namespace prevalence {

// Civil-date <-> day-number conversions (days since 1970-01-01), after
// Hinnant's algorithms. Days are plain ints so series arithmetic stays exact.

inline int days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

inline void civil_from_days(int z, int& y, int& m, int& d) {
  z += 719468;
  const int era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int yy = static_cast<int>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = yy + (m <= 2);
}

/// "YYYY-MM-DD" -> day number. Rejects malformed or out-of-range dates.
inline int parse_day(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3 || iso.size() != 10 ||
      m < 1 || m > 12 || d < 1 || d > 31)
    throw Error(Errc::invalid_argument, "invalid date '" + iso + "', expected YYYY-MM-DD");
  const int day = days_from_civil(y, m, d);
  int ry, rm, rd;
  civil_from_days(day, ry, rm, rd);
  if (ry != y || rm != m || rd != d)
    throw Error(Errc::invalid_argument, "invalid calendar date '" + iso + "'");
  return day;
}

inline std::string format_day(int day) {
  int y, m, d;
  civil_from_days(day, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

}  // namespace prevalence

#endif  // PREVALENCE_DATES_HPP
