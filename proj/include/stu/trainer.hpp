// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Training regimes.
//
//   sts    one frozen teacher
//   kaizen one teacher, EMA-updated from the student every `delta` steps
//   ets    frozen ensemble with per-utterance elitist selection
//   mets   ets repeated `mets_stages` times; each finished student joins the pool
//   stu    ensemble where every teacher is EMA-updated from the student
//
// The student and every teacher start from init_params(arch, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stu/ctc.hpp"
#include "stu/data.hpp"
#include "stu/ensemble.hpp"
#include "stu/errors.hpp"
#include "stu/metrics.hpp"
#include "stu/model.hpp"
#include "stu/rng.hpp"

namespace stu {

enum class Mode { kSts, kKaizen, kEts, kMets, kStu };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kSts: return "sts";
    case Mode::kKaizen: return "kaizen";
    case Mode::kEts: return "ets";
    case Mode::kMets: return "mets";
    case Mode::kStu: return "stu";
  }
  return "stu";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "sts") return Mode::kSts;
  if (s == "kaizen") return Mode::kKaizen;
  if (s == "ets") return Mode::kEts;
  if (s == "mets") return Mode::kMets;
  if (s == "stu") return Mode::kStu;
  throw ConfigError("unknown mode '" + s + "' (expected sts, kaizen, ets, mets or stu)");
}

/// Modes whose teachers receive EMA updates.
inline bool updates_teachers(Mode m) { return m == Mode::kKaizen || m == Mode::kStu; }

/// Modes that distill from exactly one teacher.
inline bool single_teacher(Mode m) { return m == Mode::kSts || m == Mode::kKaizen; }

struct TrainConfig {
  Mode mode = Mode::kStu;
  double alpha = 1e-3;
  std::int64_t delta = 40;
  double tau = 0.90;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t pretrain_epochs = 5;
  std::size_t distill_epochs = 10;
  std::size_t mets_stages = 2;
  std::uint64_t seed = 42;
  /// A dev TER above this multiple of the untrained student's dev TER stops the run.
  double divergence_factor = 5.0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
    if (delta < 1) throw ConfigError("delta must be >= 1");
    check_tau(tau);
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(divergence_factor > 0.0)) throw ConfigError("divergence_factor must be positive");
    if (!updates_teachers(mode) && alpha != 0.0)
      throw ConfigError(std::string("alpha must be 0 in mode ") + mode_name(mode) + " (teachers are frozen)");
    if (mode == Mode::kMets && mets_stages < 2) throw ConfigError("mets_stages must be >= 2");
  }
};

/// Copy of `cfg` for another mode; alpha is zeroed for frozen-teacher modes.
inline TrainConfig config_for_mode(TrainConfig cfg, Mode mode) {
  cfg.mode = mode;
  if (!updates_teachers(mode)) cfg.alpha = 0.0;
  return cfg;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  TerReport corpus;
  std::vector<std::pair<int, TerReport>> per_domain;  // ascending domain id
  std::vector<double> per_utterance;
};

inline EvalResult evaluate(const ParamVector& p, const Dataset& test) {
  if (test.empty()) throw UsageError("evaluate: empty test set");
  std::vector<Labels> refs, hyps;
  std::vector<int> domains;
  refs.reserve(test.size());
  hyps.reserve(test.size());
  for (const auto& u : test.utterances) {
    refs.push_back(u.labels);
    hyps.push_back(greedy_decode(forward(p, u.frames).posteriors));
    domains.push_back(u.domain_id);
  }
  EvalResult r;
  r.corpus = corpus_ter(refs, hyps);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto e = edit_distance(refs[k], hyps[k]);
    r.per_utterance.push_back(refs[k].empty() ? 0.0
                                              : static_cast<double>(e.distance) / static_cast<double>(refs[k].size()));
  }
  std::vector<int> ids = domains;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (int id : ids) {
    std::vector<Labels> dr, dh;
    for (std::size_t k = 0; k < refs.size(); ++k)
      if (domains[k] == id) {
        dr.push_back(refs[k]);
        dh.push_back(hyps[k]);
      }
    r.per_domain.emplace_back(id, corpus_ter(dr, dh));
  }
  return r;
}

inline double dev_ter(const ParamVector& p, const Dataset& dev) { return evaluate(p, dev).corpus.ter; }

// ---------------------------------------------------------------------------
// Shared step machinery

namespace detail {

struct Example {
  const Matrix* frames;
  const Labels* labels;
};

/// Mean CTC loss over `batch` and its gradient; infeasible targets are skipped.
/// Returns the number of utterances that contributed.
inline std::size_t batch_gradient(const ParamVector& p, std::span<const Example> batch, std::vector<double>& grad,
                                  double& mean_loss) {
  std::fill(grad.begin(), grad.end(), 0.0);
  std::size_t used = 0;
  double loss = 0.0;
  for (const auto& ex : batch) {
    if (ctc_min_frames(*ex.labels) > ex.frames->rows()) continue;
    const auto cache = forward_cached(p, *ex.frames);
    const auto ctc = ctc_loss_grad(cache.logits, *ex.labels);
    loss += ctc.loss;
    backward_accumulate(p, cache, ctc.grad_logits, grad);
    ++used;
  }
  if (used > 0) {
    const double scale = 1.0 / static_cast<double>(used);
    for (double& g : grad) g *= scale;
    loss *= scale;
  }
  mean_loss = loss;
  return used;
}

inline std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Teacher pretraining

struct PretrainEpoch {
  std::size_t epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0.0;
  double dev_ter = 0.0;
};

struct PretrainResult {
  ParamVector params;
  std::size_t best_epoch = 0;  // 0 means the untrained init
  double best_dev_ter = 0.0;
  std::vector<PretrainEpoch> history;
};

/// Supervised CTC training from init_params(arch, cfg.seed). Returns the
/// parameters with the lowest dev TER seen (the init included; ties go to the
/// earliest epoch).
inline PretrainResult pretrain_teacher(const Dataset& labelled, const Dataset& dev, const Architecture& arch,
                                       const TrainConfig& cfg) {
  if (labelled.empty()) throw UsageError("pretrain_teacher: empty labelled set");
  if (!(cfg.lr > 0.0) || cfg.batch_size < 1) throw ConfigError("pretrain_teacher: lr and batch_size must be positive");
  ParamVector p = init_params(arch, cfg.seed);
  auto opt = OptimizerState::for_params(p, cfg.lr);
  const int domain = labelled.utterances.front().domain_id;
  Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(domain)));

  PretrainResult r;
  r.params = p;
  r.best_dev_ter = dev.empty() ? 0.0 : dev_ter(p, dev);
  std::vector<double> grad(p.size());
  std::vector<detail::Example> batch;
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    const auto order = detail::shuffled_order(labelled.size(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        const auto& u = labelled.utterances[order[k]];
        batch.push_back({&u.frames, &u.labels});
      }
      double loss = 0.0;
      if (detail::batch_gradient(p, batch, grad, loss) == 0) continue;
      if (!std::isfinite(loss))
        throw DivergenceError("pretrain: non-finite loss at epoch " + std::to_string(epoch), opt.step);
      optimizer_step(p, grad, opt);
      loss_sum += loss;
      ++batches;
    }
    PretrainEpoch e{epoch, opt.step, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                    dev.empty() ? 0.0 : dev_ter(p, dev)};
    r.history.push_back(e);
    if (!dev.empty() && e.dev_ter < r.best_dev_ter) {
      r.best_dev_ter = e.dev_ter;
      r.best_epoch = epoch;
      r.params = p;
    } else if (dev.empty()) {
      r.best_epoch = epoch;
      r.params = p;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Student distillation

struct EpochStats {
  std::size_t stage = 1;
  std::size_t epoch = 0;  // global across mets stages, 1-based
  std::int64_t step = 0;  // student updates so far in this stage
  double dev_ter = 0.0;
  double retention = 0.0;
  double mean_confidence = 0.0;
  double mean_loss = 0.0;
  std::size_t kept = 0;
  std::size_t total = 0;
};

struct RunReport {
  Mode mode = Mode::kStu;
  double initial_dev_ter = 0.0;
  std::vector<EpochStats> epochs;
  std::int64_t steps = 0;        // student updates, summed over stages
  std::int64_t ema_updates = 0;
  std::vector<std::int64_t> ema_steps;
  bool diverged = false;
  std::int64_t divergence_step = -1;
  std::vector<std::string> warnings;
  // Filled by callers that hold a labelled test set.
  std::vector<double> teacher_test_ter;
  double student_test_ter = -1.0;
};

struct DistillResult {
  ParamVector student;
  TeacherPool teachers;
  RunReport report;
};

struct DistillObserver {
  std::function<void(std::size_t stage, std::size_t epoch, std::size_t batch, std::span<const SelectionResult>)>
      on_batch;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Student training on unlabelled target data. Labels of the target train
/// split never reach this function; callers pass strip_labels(...).
inline DistillResult distill(TeacherPool pool, std::span<const UnlabelledUtterance> unlabelled,
                             const Dataset& target_dev, const TrainConfig& cfg, const DistillObserver& obs = {}) {
  cfg.validate();
  if (pool.size() == 0) throw UsageError("distill: empty teacher pool");
  if (single_teacher(cfg.mode) && pool.size() != 1)
    throw ConfigError(std::string("mode ") + mode_name(cfg.mode) + " needs exactly one teacher, got " +
                      std::to_string(pool.size()));
  if (unlabelled.empty()) throw UsageError("distill: no unlabelled data");

  const Architecture arch = pool.arch();
  const std::size_t stages = cfg.mode == Mode::kMets ? cfg.mets_stages : 1;
  const bool ema = updates_teachers(cfg.mode);

  DistillResult out;
  RunReport& rep = out.report;
  rep.mode = cfg.mode;
  std::vector<double> grad(arch.param_count());
  std::vector<detail::Example> batch;
  std::vector<UnlabelledUtterance> batch_utts;
  std::size_t global_epoch = 0;

  ParamVector student;
  for (std::size_t stage = 1; stage <= stages; ++stage) {
    student = init_params(arch, cfg.seed);
    auto opt = OptimizerState::for_params(student, cfg.lr);
    Rng rng(derive_seed(cfg.seed, 500 + stage));
    const double initial = target_dev.empty() ? 0.0 : dev_ter(student, target_dev);
    if (stage == 1) rep.initial_dev_ter = initial;
    std::int64_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.distill_epochs && !rep.diverged; ++epoch) {
      ++global_epoch;
      const auto order = detail::shuffled_order(unlabelled.size(), rng);
      EpochStats es;
      es.stage = stage;
      es.epoch = global_epoch;
      double conf_sum = 0.0, loss_sum = 0.0;
      std::size_t loss_batches = 0, batch_index = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
        batch_utts.clear();
        for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k)
          batch_utts.push_back(unlabelled[order[k]]);
        const auto sel = pseudo_label_batch(pool, batch_utts, cfg.tau);
        if (obs.on_batch) obs.on_batch(stage, global_epoch, batch_index, sel);
        batch.clear();
        for (std::size_t k = 0; k < sel.size(); ++k) {
          conf_sum += sel[k].selected_confidence;
          if (sel[k].kept) batch.push_back({&batch_utts[k].frames, &sel[k].pseudo_labels});
        }
        es.total += sel.size();
        es.kept += batch.size();
        if (batch.empty()) continue;
        double loss = 0.0;
        if (detail::batch_gradient(student, batch, grad, loss) == 0) continue;
        if (!std::isfinite(loss)) throw DivergenceError("distill: non-finite loss", step);
        optimizer_step(student, grad, opt);
        ++step;
        loss_sum += loss;
        ++loss_batches;
        if (ema && step % cfg.delta == 0) {
          ema_update(pool, student, cfg.alpha);
          ++rep.ema_updates;
          rep.ema_steps.push_back(step);
        }
      }
      es.step = step;
      es.retention = es.total ? static_cast<double>(es.kept) / static_cast<double>(es.total) : 0.0;
      es.mean_confidence = es.total ? conf_sum / static_cast<double>(es.total) : 0.0;
      es.mean_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
      es.dev_ter = target_dev.empty() ? 0.0 : dev_ter(student, target_dev);
      if (es.kept == 0)
        rep.warnings.push_back("epoch " + std::to_string(global_epoch) + ": every utterance was filtered out");
      rep.epochs.push_back(es);
      if (obs.on_epoch) obs.on_epoch(es);
      if (!target_dev.empty() && es.dev_ter > cfg.divergence_factor * initial) {
        rep.diverged = true;
        rep.divergence_step = rep.steps + step;
      }
    }
    rep.steps += step;
    if (rep.diverged) break;
    if (stage < stages) pool.add(student);
  }
  out.student = std::move(student);
  out.teachers = std::move(pool);
  return out;
}

}  // namespace stu
