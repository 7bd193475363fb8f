// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Reference CTC loss by enumerating every frame-level path. Exponential in
// T'; only meant as a test oracle for the forward-backward implementation.

#include <cmath>
#include <limits>
#include <vector>

#include "stu/data.hpp"
#include "stu/errors.hpp"
#include "stu/matrix.hpp"

namespace stu {

inline constexpr std::size_t kBruteforceMaxFrames = 8;
inline constexpr std::size_t kBruteforceMaxTokens = 6;

/// Blank-collapse of a frame path: merge runs, then remove blanks.
inline Labels collapse_path(const std::vector<int>& path) {
  Labels out;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] == kBlank) continue;
    if (t > 0 && path[t] == path[t - 1]) continue;
    out.push_back(path[t]);
  }
  return out;
}

/// Returns +infinity when no path collapses to `labels`.
inline double ctc_loss_bruteforce(const Matrix& posteriors, const Labels& labels) {
  const std::size_t t_len = posteriors.rows();
  const std::size_t v = posteriors.cols();
  if (t_len > kBruteforceMaxFrames || v > kBruteforceMaxTokens)
    throw OracleScopeError("ctc_loss_bruteforce: T' <= 8 and V <= 6 required");
  std::vector<int> path(t_len, 0);
  double total = 0.0;
  while (true) {
    if (collapse_path(path) == labels) {
      double p = 1.0;
      for (std::size_t t = 0; t < t_len; ++t) p *= posteriors(t, static_cast<std::size_t>(path[t]));
      total += p;
    }
    std::size_t t = 0;
    while (t < t_len && ++path[t] == static_cast<int>(v)) path[t++] = 0;
    if (t == t_len) break;
  }
  if (total == 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(total);
}

}  // namespace stu
