// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// CTC loss with log-space forward-backward over the blank-interleaved label
// sequence, its exact gradient with respect to the logits, and greedy
// decoding.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stu/data.hpp"
#include "stu/errors.hpp"
#include "stu/matrix.hpp"

namespace stu {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

/// (blank, y1, blank, y2, ..., blank), length 2L+1.
inline std::vector<int> extended_labels(const Labels& labels) {
  std::vector<int> z(2 * labels.size() + 1, kBlank);
  for (std::size_t i = 0; i < labels.size(); ++i) z[2 * i + 1] = labels[i];
  return z;
}

struct CtcResult {
  double loss = 0.0;
  Matrix grad_logits;  // T' x V
};

inline Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto in = logits.row(t);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    auto o = out.row(t);
    for (std::size_t k = 0; k < in.size(); ++k) o[k] = in[k] - lse;
  }
  return out;
}

inline CtcResult ctc_loss_grad(const Matrix& logits, const Labels& labels) {
  const std::size_t t_len = logits.rows();
  const std::size_t v = logits.cols();
  if (labels.empty()) throw UsageError("ctc: empty label sequence");
  for (int l : labels)
    if (l < 1 || static_cast<std::size_t>(l) >= v)
      throw UsageError("ctc: label " + std::to_string(l) + " outside [1, " + std::to_string(v - 1) + "]");
  for (double x : logits.data())
    if (!std::isfinite(x)) throw NumericError("ctc: non-finite logit");
  if (t_len < ctc_min_frames(labels))
    throw InfeasibleTargetError("ctc: " + std::to_string(t_len) + " frames cannot align " +
                                std::to_string(labels.size()) + " labels");

  const Matrix lp = log_softmax_rows(logits);
  const auto z = extended_labels(labels);
  const std::size_t s_len = z.size();
  const auto can_skip = [&](std::size_t s) { return s >= 2 && z[s] != kBlank && z[s] != z[s - 2]; };

  // alpha includes the emission at t; beta excludes it.
  Matrix alpha(t_len, s_len, kNegInf);
  Matrix beta(t_len, s_len, kNegInf);
  alpha(0, 0) = lp(0, static_cast<std::size_t>(z[0]));
  alpha(0, 1) = lp(0, static_cast<std::size_t>(z[1]));
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      if (acc != kNegInf) alpha(t, s) = acc + lp(t, static_cast<std::size_t>(z[s]));
    }
  }
  beta(t_len - 1, s_len - 1) = 0.0;
  beta(t_len - 1, s_len - 2) = 0.0;
  for (std::size_t t = t_len - 1; t-- > 0;) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double acc = beta(t + 1, s) + lp(t + 1, static_cast<std::size_t>(z[s]));
      if (s + 1 < s_len) acc = log_add(acc, beta(t + 1, s + 1) + lp(t + 1, static_cast<std::size_t>(z[s + 1])));
      if (s + 2 < s_len && can_skip(s + 2))
        acc = log_add(acc, beta(t + 1, s + 2) + lp(t + 1, static_cast<std::size_t>(z[s + 2])));
      beta(t, s) = acc;
    }
  }

  const double log_p = log_add(alpha(t_len - 1, s_len - 1), alpha(t_len - 1, s_len - 2));
  if (!std::isfinite(log_p)) throw NumericError("ctc: total alignment probability underflowed");

  CtcResult r;
  r.loss = -log_p;
  r.grad_logits = Matrix(t_len, v);
  std::vector<double> occupancy(v);
  for (std::size_t t = 0; t < t_len; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < s_len; ++s) {
      const auto k = static_cast<std::size_t>(z[s]);
      occupancy[k] = log_add(occupancy[k], alpha(t, s) + beta(t, s));
    }
    auto g = r.grad_logits.row(t);
    for (std::size_t k = 0; k < v; ++k) {
      const double post = std::exp(lp(t, k));
      const double occ = occupancy[k] == kNegInf ? 0.0 : std::exp(occupancy[k] - log_p);
      g[k] = post - occ;
    }
  }
  return r;
}

/// Per-frame argmax (lowest id wins ties), then merge repeats, then drop blanks.
inline Labels greedy_decode(const Matrix& posteriors) {
  Labels out;
  int prev = -1;
  for (std::size_t t = 0; t < posteriors.rows(); ++t) {
    const auto row = posteriors.row(t);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k)
      if (row[k] > row[best]) best = k;
    const int id = static_cast<int>(best);
    if (id != prev && id != kBlank) out.push_back(id);
    prev = id;
  }
  return out;
}

}  // namespace stu
