// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "stu/data.hpp"
#include "stu/errors.hpp"

namespace stu {

struct EditStats {
  std::size_t distance = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  bool operator==(const EditStats&) const = default;
};

/// Unit-cost Levenshtein distance. The backtrace prefers the diagonal
/// (match/substitution), then deletion, then insertion.
inline EditStats edit_distance(const Labels& ref, const Labels& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  const auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1] ? 1u : 0u), at(i - 1, j) + 1, at(i, j - 1) + 1});

  EditStats s;
  s.distance = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t cost = ref[i - 1] != hyp[j - 1] ? 1 : 0;
      if (at(i, j) == at(i - 1, j - 1) + cost) {
        s.substitutions += cost;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

struct TerReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_tokens = 0;
  double ter = 0.0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

inline TerReport corpus_ter(const std::vector<Labels>& refs, const std::vector<Labels>& hyps) {
  if (refs.size() != hyps.size()) throw UsageError("corpus_ter: reference and hypothesis counts differ");
  TerReport r;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto e = edit_distance(refs[k], hyps[k]);
    r.substitutions += e.substitutions;
    r.insertions += e.insertions;
    r.deletions += e.deletions;
    r.ref_tokens += refs[k].size();
  }
  if (r.ref_tokens == 0) throw UsageError("corpus_ter: no reference tokens");
  r.ter = static_cast<double>(r.errors()) / static_cast<double>(r.ref_tokens);
  return r;
}

inline constexpr const char* kTerCsvHeader = "mode,split,ter,S,I,D,ref_tokens";

inline std::string ter_csv_row(const std::string& mode, const std::string& split, const TerReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.ter);
  return mode + "," + split + "," + buf + "," + std::to_string(r.substitutions) + "," +
         std::to_string(r.insertions) + "," + std::to_string(r.deletions) + "," + std::to_string(r.ref_tokens);
}

}  // namespace stu
