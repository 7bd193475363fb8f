// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Teacher pool: per-utterance confidence scoring, elitist selection of one
// teacher, threshold filtering, greedy pseudo-labelling, and the
// exponential-moving-average pull of every teacher toward the student.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stu/ctc.hpp"
#include "stu/data.hpp"
#include "stu/errors.hpp"
#include "stu/model.hpp"

namespace stu {

class TeacherPool {
 public:
  TeacherPool() = default;
  explicit TeacherPool(std::vector<ParamVector> teachers) : teachers_(std::move(teachers)) {
    if (teachers_.empty()) throw UsageError("teacher pool needs at least one teacher");
    for (const auto& t : teachers_) {
      check_params(t);
      if (!(t.arch == teachers_.front().arch)) throw ShapeError("teachers must share one architecture");
    }
  }

  std::size_t size() const { return teachers_.size(); }
  const Architecture& arch() const { return teachers_.front().arch; }
  const ParamVector& operator[](std::size_t i) const { return teachers_[i]; }
  ParamVector& operator[](std::size_t i) { return teachers_[i]; }
  const std::vector<ParamVector>& teachers() const { return teachers_; }

  void add(ParamVector t) {
    if (!teachers_.empty() && !(t.arch == arch())) throw ShapeError("teachers must share one architecture");
    check_params(t);
    teachers_.push_back(std::move(t));
  }

 private:
  std::vector<ParamVector> teachers_;
};

/// Mean over frames of the per-frame maximum posterior. Blank frames count.
inline double confidence(const Matrix& posteriors) {
  if (posteriors.rows() == 0) throw UsageError("confidence: empty posterior grid");
  double sum = 0.0;
  for (std::size_t t = 0; t < posteriors.rows(); ++t) {
    const auto row = posteriors.row(t);
    sum += *std::max_element(row.begin(), row.end());
  }
  return sum / static_cast<double>(posteriors.rows());
}

inline double confidence(const PosteriorGrid& g) { return confidence(g.posteriors); }

struct Selection {
  std::size_t index = 0;  // 0-based teacher index
  double confidence = 0.0;
};

/// Argmax of the confidences; ties go to the lowest index.
inline Selection select_by_confidence(std::span<const double> q) {
  if (q.empty()) throw UsageError("select_teacher: no teachers");
  Selection s{0, q[0]};
  for (std::size_t k = 1; k < q.size(); ++k)
    if (q[k] > s.confidence) s = {k, q[k]};
  return s;
}

inline Selection select_teacher(std::span<const PosteriorGrid> grids) {
  if (grids.empty()) throw UsageError("select_teacher: no teachers");
  std::vector<double> q;
  q.reserve(grids.size());
  for (const auto& g : grids) {
    if (g.num_frames() != grids.front().num_frames() || g.num_tokens() != grids.front().num_tokens())
      throw ShapeError("select_teacher: posterior grids differ in shape");
    q.push_back(confidence(g));
  }
  return select_by_confidence(q);
}

enum class DropReason { kNone, kBelowThreshold, kEmptyDecode, kInfeasible };

inline const char* drop_reason_name(DropReason r) {
  switch (r) {
    case DropReason::kNone: return "";
    case DropReason::kBelowThreshold: return "below_threshold";
    case DropReason::kEmptyDecode: return "empty_decode";
    case DropReason::kInfeasible: return "infeasible";
  }
  return "";
}

struct SelectionResult {
  std::string utterance_id;
  std::vector<double> confidences;
  std::size_t selected = 0;  // 0-based
  double selected_confidence = 0.0;
  bool kept = false;
  DropReason drop_reason = DropReason::kNone;
  Labels pseudo_labels;  // non-empty iff kept
};

inline void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
}

/// Scores one utterance under every teacher, keeps it when the selected
/// confidence is >= tau and the greedy decode is a non-empty, CTC-feasible
/// target.
inline SelectionResult pseudo_label(const TeacherPool& pool, const UnlabelledUtterance& u, double tau) {
  SelectionResult r;
  r.utterance_id = u.id;
  r.confidences.reserve(pool.size());
  std::optional<PosteriorGrid> best;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    auto grid = forward(pool[k], u.frames);
    r.confidences.push_back(confidence(grid));
    if (k == 0 || r.confidences[k] > r.confidences[r.selected]) {
      r.selected = k;
      best = std::move(grid);
    }
  }
  r.selected_confidence = r.confidences[r.selected];
  if (!(r.selected_confidence >= tau)) {
    r.drop_reason = DropReason::kBelowThreshold;
    return r;
  }
  auto labels = greedy_decode(best->posteriors);
  if (labels.empty()) {
    r.drop_reason = DropReason::kEmptyDecode;
  } else if (ctc_min_frames(labels) > u.frames.rows()) {
    r.drop_reason = DropReason::kInfeasible;
  } else {
    r.kept = true;
    r.pseudo_labels = std::move(labels);
  }
  return r;
}

inline std::vector<SelectionResult> pseudo_label_batch(const TeacherPool& pool,
                                                       std::span<const UnlabelledUtterance> batch, double tau) {
  check_tau(tau);
  if (batch.empty()) throw UsageError("pseudo_label_batch: empty batch");
  if (pool.size() == 0) throw UsageError("pseudo_label_batch: empty teacher pool");
  std::vector<SelectionResult> out;
  out.reserve(batch.size());
  for (const auto& u : batch) out.push_back(pseudo_label(pool, u, tau));
  return out;
}

/// Theta_i <- alpha * Phi + (1 - alpha) * Theta_i for every teacher at once.
inline void ema_update(TeacherPool& pool, const ParamVector& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (pool[k].size() != student.size() || !(pool[k].arch == student.arch))
      throw ShapeError("ema_update: student and teacher shapes differ");
  if (alpha == 0.0) return;
  if (alpha == 1.0) {
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k].values = student.values;
    return;
  }
  const double keep = 1.0 - alpha;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    auto& theta = pool[k].values;
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = alpha * student.values[i] + keep * theta[i];
  }
}

// ---------------------------------------------------------------------------
// Filtering report: epoch,batch,utterance_id,q_1..q_N,b,q_hat,kept,drop_reason
// (b is 1-based).

inline std::string filter_csv_header(std::size_t num_teachers) {
  std::string h = "epoch,batch,utterance_id";
  for (std::size_t k = 1; k <= num_teachers; ++k) h += ",q_" + std::to_string(k);
  return h + ",b,q_hat,kept,drop_reason";
}

inline std::string filter_csv_row(std::size_t epoch, std::size_t batch, const SelectionResult& r) {
  char buf[32];
  std::string row = std::to_string(epoch) + "," + std::to_string(batch) + "," + r.utterance_id;
  for (double q : r.confidences) {
    std::snprintf(buf, sizeof buf, "%.6f", q);
    row += ",";
    row += buf;
  }
  std::snprintf(buf, sizeof buf, "%.6f", r.selected_confidence);
  row += "," + std::to_string(r.selected + 1) + "," + buf + "," + (r.kept ? "1" : "0") + "," +
         drop_reason_name(r.drop_reason);
  return row;
}

}  // namespace stu
