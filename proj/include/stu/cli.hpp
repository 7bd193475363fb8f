// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Command implementations behind the `stu` tool. Every command returns a
// process exit code: 0 success, 2 configuration or usage, 3 I/O, 4 numerical
// divergence.
//
// Run directory layout (everything under --out):
//   manifest.json            resolved config, inputs and declared artifacts
//   data/<domain>/{train,dev,test}.jsonl     (gen)
//   checkpoints/*.ckpt
//   reports/*.csv, reports/run.json
//   reports/timing.txt       wall time; the only file that varies between reruns

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stu/checkpoint.hpp"
#include "stu/config.hpp"
#include "stu/data.hpp"
#include "stu/ensemble.hpp"
#include "stu/errors.hpp"
#include "stu/metrics.hpp"
#include "stu/trainer.hpp"

namespace stu {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;

struct CliOptions {
  std::string config;
  std::string out;
  std::string data;        // defaults to <out>/data for gen, required elsewhere
  std::string teachers;    // directory holding teacher-*.ckpt (or its parent)
  std::string checkpoint;  // eval only
  std::string mode;
  std::string param;
  std::string values;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
  std::ostream* log = &std::cerr;
};

namespace fs = std::filesystem;

namespace cli_detail {

using ojson = nlohmann::ordered_json;

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create directory '" + p.string() + "'");
  const fs::path probe = p / ".stu-write-probe";
  {
    std::ofstream os(probe);
    if (!os) throw IoError("directory '" + p.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + p.string() + "' failed");
}

inline ojson read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  try {
    return ojson::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Resolved config plus the inputs recorded by a previous run when the
/// config path points at a manifest.
struct Loaded {
  RunConfig cfg;
  ojson inputs = ojson::object();
};

inline Loaded load(const CliOptions& o) {
  if (o.config.empty()) throw UsageError("--config is required");
  const ojson j = read_json_file(o.config);
  Loaded l;
  l.cfg = config_from_json(nlohmann::json(j));
  if (j.contains("manifest_version") && j.contains("inputs")) l.inputs = j.at("inputs");
  if (o.seed) {
    l.cfg.seed = *o.seed;
    l.cfg.train.seed = *o.seed;
  }
  return l;
}

inline std::string input_or(const std::string& flag, const ojson& inputs, const char* key) {
  if (!flag.empty()) return flag;
  if (inputs.contains(key)) return inputs.at(key).get<std::string>();
  return {};
}

inline ojson manifest(const std::string& command, const RunConfig& cfg, const ojson& inputs, const ojson& artifacts) {
  ojson m;
  m["manifest_version"] = 1;
  m["tool"] = "stu";
  m["tool_version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["inputs"] = inputs;
  m["config"] = config_to_json(cfg);
  m["artifacts"] = artifacts;
  return m;
}

inline void write_manifest(const fs::path& out, const ojson& m) { write_text(out / "manifest.json", m.dump(2) + "\n"); }

inline Dataset load_split(const std::string& data_dir, const std::string& domain, Split s, const RunConfig& cfg) {
  const fs::path p = fs::path(data_dir) / domain / (std::string(split_name(s)) + ".jsonl");
  if (!fs::is_regular_file(p)) throw UsageError("missing dataset '" + p.string() + "'");
  Dataset d = read_dataset(p.string());
  if (d.vocab_size != cfg.generator.vocab_size || d.feature_dim != cfg.generator.feature_dim)
    throw SchemaError("dataset '" + p.string() + "' does not match the configured vocab_size/feature_dim");
  return d;
}

struct NamedCheckpoint {
  std::string name;  // file name
  Checkpoint ckpt;
};

inline std::vector<NamedCheckpoint> load_teachers(const std::string& dir) {
  if (dir.empty()) throw UsageError("--teachers is required");
  fs::path base(dir);
  if (fs::is_directory(base / "checkpoints")) base /= "checkpoints";
  if (!fs::is_directory(base)) throw UsageError("teacher directory '" + dir + "' does not exist");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(base)) {
    const std::string n = e.path().filename().string();
    if (e.is_regular_file() && n.rfind("teacher-", 0) == 0 && e.path().extension() == ".ckpt") names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  std::vector<NamedCheckpoint> out;
  for (const auto& n : names) out.push_back({n, read_checkpoint((base / n).string())});
  return out;
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string epochs_csv(const RunReport& r) {
  std::string s = "epoch,step,dev_ter,retention,mean_confidence\n";
  for (const auto& e : r.epochs)
    s += std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + fmt6(e.dev_ter) + "," + fmt6(e.retention) +
         "," + fmt6(e.mean_confidence) + "\n";
  return s;
}

inline ojson report_json(const RunReport& r, const std::vector<std::string>& teacher_names) {
  ojson j;
  j["mode"] = mode_name(r.mode);
  j["teachers"] = teacher_names;
  j["initial_dev_ter"] = r.initial_dev_ter;
  j["steps"] = r.steps;
  j["ema_updates"] = r.ema_updates;
  j["ema_steps"] = r.ema_steps;
  j["diverged"] = r.diverged;
  j["divergence_step"] = r.divergence_step;
  j["warnings"] = r.warnings;
  j["epochs"] = ojson::array();
  for (const auto& e : r.epochs) {
    ojson ej;
    ej["stage"] = e.stage;
    ej["epoch"] = e.epoch;
    ej["step"] = e.step;
    ej["dev_ter"] = e.dev_ter;
    ej["retention"] = e.retention;
    ej["mean_confidence"] = e.mean_confidence;
    ej["mean_loss"] = e.mean_loss;
    ej["kept"] = e.kept;
    ej["total"] = e.total;
    j["epochs"].push_back(ej);
  }
  j["teacher_test_ter"] = r.teacher_test_ter;
  j["student_test_ter"] = r.student_test_ter;
  return j;
}

template <typename F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    log << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

/// Outcome of one distillation run written to `out`.
struct DistillRun {
  RunReport report;
  int exit_code = kExitOk;
};

inline DistillRun run_distill(const RunConfig& cfg_in, const ojson& inputs, const std::string& data_dir,
                              const std::string& teachers_dir, const fs::path& out, std::ostream& log) {
  RunConfig cfg = cfg_in;
  cfg.train = config_for_mode(cfg.train, cfg.train.mode);
  cfg.train.seed = cfg.seed;
  cfg.train.validate();
  const Mode mode = cfg.train.mode;
  const std::string target = cfg.target_domain();

  const Dataset train = load_split(data_dir, target, Split::kTrain, cfg);
  const Dataset dev = load_split(data_dir, target, Split::kDev, cfg);
  const Dataset test = load_split(data_dir, target, Split::kTest, cfg);
  auto teachers = load_teachers(teachers_dir);
  if (teachers.empty()) throw UsageError("no teacher-*.ckpt files under '" + teachers_dir + "'");
  for (const auto& t : teachers)
    if (t.ckpt.params.arch != cfg.arch())
      throw ConfigError("teacher '" + t.name + "' architecture does not match the configured architecture");
  if ((mode == Mode::kEts || mode == Mode::kMets) && teachers.size() < 2)
    throw ConfigError(std::string("mode ") + mode_name(mode) + " needs at least two teachers, got " +
                      std::to_string(teachers.size()));

  ojson selection = nullptr;
  if (single_teacher(mode)) {
    std::size_t best = 0;
    std::vector<double> ters;
    for (std::size_t k = 0; k < teachers.size(); ++k) {
      ters.push_back(dev_ter(teachers[k].ckpt.params, dev));
      if (ters[k] < ters[best]) best = k;
    }
    selection = ojson::object();
    selection["name"] = teachers[best].name;
    selection["criterion"] = "target-dev TER";
    selection["candidates"] = ojson::array();
    for (std::size_t k = 0; k < teachers.size(); ++k)
      selection["candidates"].push_back(ojson{{"name", teachers[k].name}, {"dev_ter", ters[k]}});
    auto chosen = teachers[best];
    teachers = {chosen};
    log << "selected teacher " << chosen.name << " (target-dev TER " << fmt6(ters[best]) << ")\n";
  }
  std::vector<std::string> names;
  std::vector<ParamVector> params;
  for (const auto& t : teachers) {
    names.push_back(t.name);
    params.push_back(t.ckpt.params);
  }

  ensure_dir(out);
  ensure_dir(out / "checkpoints");
  ensure_dir(out / "reports");
  ojson artifacts;
  artifacts["checkpoints"] = {"checkpoints/student.ckpt"};
  if (updates_teachers(mode))
    for (std::size_t k = 0; k < names.size(); ++k)
      artifacts["checkpoints"].push_back("checkpoints/updated-" + names[k]);
  artifacts["reports"] = {"reports/epochs.csv", "reports/filter.csv", "reports/ter.csv", "reports/run.json"};
  ojson m = manifest("distill", cfg, inputs, artifacts);
  if (!selection.is_null()) m["selected_teacher"] = selection;
  write_manifest(out, m);

  Clock clock;
  std::ofstream filter(out / "reports" / "filter.csv", std::ios::binary);
  if (!filter) throw IoError("cannot open filter report for writing");
  std::size_t filter_width = 0;
  DistillObserver obs;
  obs.on_batch = [&](std::size_t, std::size_t epoch, std::size_t batch, std::span<const SelectionResult> sel) {
    if (sel.empty()) return;
    if (sel.front().confidences.size() != filter_width) {
      filter_width = sel.front().confidences.size();
      filter << filter_csv_header(filter_width) << "\n";
    }
    for (const auto& r : sel) filter << filter_csv_row(epoch, batch + 1, r) << "\n";
  };
  obs.on_epoch = [&](const EpochStats& e) {
    log << mode_name(mode) << " epoch " << e.epoch << " step " << e.step << " dev_ter " << fmt6(e.dev_ter)
        << " retention " << fmt6(e.retention) << " mean_q " << fmt6(e.mean_confidence) << "\n";
  };

  const auto unlabelled = strip_labels(train);
  DistillRun run;
  DistillResult res;
  try {
    res = distill(TeacherPool(params), unlabelled, dev, cfg.train, obs);
  } catch (const DivergenceError& e) {
    run.report.mode = mode;
    run.report.diverged = true;
    run.report.divergence_step = e.step();
    run.report.warnings.push_back(e.what());
    write_text(out / "reports" / "run.json", report_json(run.report, names).dump(2) + "\n");
    run.exit_code = kExitDivergence;
    log << "error: " << e.what() << " (step " << e.step() << ")\n";
    return run;
  }
  filter.close();
  if (!filter) throw IoError("write to filter report failed");

  RunReport& rep = res.report;
  std::string ter = std::string(kTerCsvHeader) + "\n";
  for (std::size_t k = 0; k < res.teachers.size(); ++k) {
    const std::string label = k < names.size() ? names[k].substr(0, names[k].size() - 5) : "stage-student-" + std::to_string(k - names.size() + 1);
    const auto e = evaluate(res.teachers[k], test).corpus;
    rep.teacher_test_ter.push_back(e.ter);
    ter += ter_csv_row(label, "target-test", e) + "\n";
  }
  const auto sd = evaluate(res.student, dev).corpus;
  const auto st = evaluate(res.student, test).corpus;
  rep.student_test_ter = st.ter;
  ter += ter_csv_row(std::string("student-") + mode_name(mode), "target-dev", sd) + "\n";
  ter += ter_csv_row(std::string("student-") + mode_name(mode), "target-test", st) + "\n";

  write_checkpoint((out / "checkpoints" / "student.ckpt").string(), res.student,
                   {cfg.seed, rep.steps, mode_name(mode)});
  if (updates_teachers(mode))
    for (std::size_t k = 0; k < names.size(); ++k)
      write_checkpoint((out / "checkpoints" / ("updated-" + names[k])).string(), res.teachers[k],
                       {cfg.seed, rep.steps, mode_name(mode)});
  write_text(out / "reports" / "epochs.csv", epochs_csv(rep));
  write_text(out / "reports" / "ter.csv", ter);
  write_text(out / "reports" / "run.json", report_json(rep, names).dump(2) + "\n");
  write_text(out / "reports" / "timing.txt", "wall_seconds " + fmt6(clock.seconds()) + "\n");
  log << mode_name(mode) << " student target-test TER " << fmt6(st.ter) << "\n";

  run.report = rep;
  if (rep.diverged) {
    log << "error: training diverged at step " << rep.divergence_step << "\n";
    run.exit_code = kExitDivergence;
  }
  return run;
}

}  // namespace cli_detail

/// Generate every domain's train/dev/test splits under <out>/data.
inline int cmd_gen(const CliOptions& o) {
  return cli_detail::guarded(*o.log, [&] {
    const auto l = cli_detail::load(o);
    if (o.out.empty()) throw UsageError("--out is required");
    const fs::path out(o.out);
    const fs::path data = o.data.empty() ? out / "data" : fs::path(o.data);
    cli_detail::ensure_dir(out);
    cli_detail::ojson artifacts;
    artifacts["datasets"] = cli_detail::ojson::array();
    for (const auto& d : l.cfg.generator.domains)
      for (Split s : {Split::kTrain, Split::kDev, Split::kTest})
        artifacts["datasets"].push_back((fs::path(d.name) / (std::string(split_name(s)) + ".jsonl")).string());
    cli_detail::ojson inputs;
    inputs["data"] = data.string();
    cli_detail::write_manifest(out, cli_detail::manifest("gen", l.cfg, inputs, artifacts));

    const auto bench = gen_dataset(l.cfg.generator, l.cfg.seed);
    for (const auto& d : bench.domains) {
      const fs::path dir = data / d.spec.name;
      cli_detail::ensure_dir(dir);
      for (Split s : {Split::kTrain, Split::kDev, Split::kTest})
        write_dataset(d.split(s), (dir / (std::string(split_name(s)) + ".jsonl")).string());
      *o.log << "wrote " << d.spec.name << ": " << d.train.size() << "/" << d.dev.size() << "/" << d.test.size()
             << " utterances\n";
    }
    return kExitOk;
  });
}

/// Pretrain one teacher per labelled domain.
inline int cmd_pretrain(const CliOptions& o) {
  return cli_detail::guarded(*o.log, [&] {
    const auto l = cli_detail::load(o);
    if (o.out.empty()) throw UsageError("--out is required");
    const std::string data = cli_detail::input_or(o.data, l.inputs, "data");
    if (data.empty()) throw UsageError("--data is required");
    const RunConfig& cfg = l.cfg;
    const auto sources = cfg.labelled_domains();
    if (sources.empty()) throw ConfigError("generator.domains: no labelled domain to pretrain on");
    const std::string target = cfg.target_domain();

    struct Source {
      std::string name;
      Dataset train, dev, test;
    };
    std::vector<Source> src;
    for (const auto& n : sources)
      src.push_back({n, cli_detail::load_split(data, n, Split::kTrain, cfg), cli_detail::load_split(data, n, Split::kDev, cfg),
                     cli_detail::load_split(data, n, Split::kTest, cfg)});
    const Dataset tdev = cli_detail::load_split(data, target, Split::kDev, cfg);
    const Dataset ttest = cli_detail::load_split(data, target, Split::kTest, cfg);

    const fs::path out(o.out);
    cli_detail::ensure_dir(out);
    cli_detail::ensure_dir(out / "checkpoints");
    cli_detail::ensure_dir(out / "reports");
    cli_detail::ojson artifacts;
    artifacts["checkpoints"] = cli_detail::ojson::array();
    for (const auto& s : src) artifacts["checkpoints"].push_back("checkpoints/teacher-" + s.name + ".ckpt");
    artifacts["reports"] = {"reports/teachers.csv", "reports/pretrain.csv"};
    cli_detail::ojson inputs;
    inputs["data"] = data;
    cli_detail::write_manifest(out, cli_detail::manifest("pretrain", cfg, inputs, artifacts));

    cli_detail::Clock clock;
    std::string ters = std::string(kTerCsvHeader) + "\n";
    std::string hist = "teacher,epoch,step,train_loss,dev_ter\n";
    for (const auto& s : src) {
      const auto r = pretrain_teacher(s.train, s.dev, cfg.arch(), cfg.train);
      const std::int64_t step = r.best_epoch > 0 ? r.history[r.best_epoch - 1].step : 0;
      const std::string path = (out / "checkpoints" / ("teacher-" + s.name + ".ckpt")).string();
      write_checkpoint(path, r.params, {cfg.seed, step, "pretrain"});
      for (const auto& h : r.history)
        hist += "teacher-" + s.name + "," + std::to_string(h.epoch) + "," + std::to_string(h.step) + "," +
                cli_detail::fmt6(h.train_loss) + "," + cli_detail::fmt6(h.dev_ter) + "\n";
      const auto saved = read_checkpoint(path).params;
      const std::string label = "teacher-" + s.name;
      ters += ter_csv_row(label, s.name + "-dev", evaluate(saved, s.dev).corpus) + "\n";
      ters += ter_csv_row(label, s.name + "-test", evaluate(saved, s.test).corpus) + "\n";
      ters += ter_csv_row(label, "target-dev", evaluate(saved, tdev).corpus) + "\n";
      const auto tt = evaluate(saved, ttest).corpus;
      ters += ter_csv_row(label, "target-test", tt) + "\n";
      *o.log << label << " best epoch " << r.best_epoch << " dev TER " << cli_detail::fmt6(r.best_dev_ter)
             << " target-test TER " << cli_detail::fmt6(tt.ter) << "\n";
    }
    cli_detail::write_text(out / "reports" / "teachers.csv", ters);
    cli_detail::write_text(out / "reports" / "pretrain.csv", hist);
    cli_detail::write_text(out / "reports" / "timing.txt", "wall_seconds " + cli_detail::fmt6(clock.seconds()) + "\n");
    return kExitOk;
  });
}

/// Distil a student on the unlabelled target split.
inline int cmd_distill(const CliOptions& o) {
  return cli_detail::guarded(*o.log, [&] {
    auto l = cli_detail::load(o);
    if (o.out.empty()) throw UsageError("--out is required");
    if (!o.mode.empty()) l.cfg.train.mode = parse_mode(o.mode);
    const std::string data = cli_detail::input_or(o.data, l.inputs, "data");
    const std::string teachers = cli_detail::input_or(o.teachers, l.inputs, "teachers");
    if (data.empty()) throw UsageError("--data is required");
    cli_detail::ojson inputs;
    inputs["data"] = data;
    inputs["teachers"] = teachers;
    return cli_detail::run_distill(l.cfg, inputs, data, teachers, o.out, *o.log).exit_code;
  });
}

/// Score one checkpoint on every domain's dev and test split.
inline int cmd_eval(const CliOptions& o) {
  return cli_detail::guarded(*o.log, [&] {
    const auto l = cli_detail::load(o);
    if (o.out.empty()) throw UsageError("--out is required");
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    const std::string data = cli_detail::input_or(o.data, l.inputs, "data");
    if (data.empty()) throw UsageError("--data is required");
    if (!fs::is_regular_file(o.checkpoint)) throw UsageError("missing checkpoint '" + o.checkpoint + "'");
    const auto ck = read_checkpoint(o.checkpoint);
    if (ck.params.arch != l.cfg.arch())
      throw ConfigError("checkpoint architecture does not match the configured architecture");
    std::vector<std::pair<std::string, Dataset>> sets;
    for (const auto& d : l.cfg.generator.domains)
      for (Split s : {Split::kDev, Split::kTest})
        sets.emplace_back(d.name + "-" + split_name(s), cli_detail::load_split(data, d.name, s, l.cfg));

    const fs::path out(o.out);
    cli_detail::ensure_dir(out);
    cli_detail::ensure_dir(out / "reports");
    cli_detail::ojson inputs;
    inputs["data"] = data;
    inputs["checkpoint"] = o.checkpoint;
    cli_detail::ojson artifacts;
    artifacts["reports"] = {"reports/eval.csv"};
    cli_detail::write_manifest(out, cli_detail::manifest("eval", l.cfg, inputs, artifacts));

    const std::string label = fs::path(o.checkpoint).stem().string();
    std::string csv = std::string(kTerCsvHeader) + "\n";
    for (const auto& [name, d] : sets) {
      const auto r = evaluate(ck.params, d).corpus;
      csv += ter_csv_row(label, name, r) + "\n";
      *o.log << label << " " << name << " TER " << cli_detail::fmt6(r.ter) << "\n";
    }
    cli_detail::write_text(out / "reports" / "eval.csv", csv);
    return kExitOk;
  });
}

namespace cli_detail {

inline std::vector<std::pair<std::string, double>> parse_sweep_values(const std::string& param,
                                                                      const std::string& csv) {
  if (param != "alpha" && param != "delta" && param != "tau")
    throw UsageError("--param must be one of alpha, delta, tau (got '" + param + "')");
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) throw UsageError("--values contains an empty entry");
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw UsageError("--values entry '" + tok + "' is not a number");
    }
    if (used != tok.size()) throw UsageError("--values entry '" + tok + "' is not a number");
    if (param == "delta" && (v < 1.0 || v != static_cast<double>(static_cast<std::int64_t>(v))))
      throw UsageError("delta values must be integers >= 1 (got " + tok + ")");
    if ((param == "alpha" || param == "tau") && !(v >= 0.0 && v <= 1.0))
      throw UsageError(param + " values must lie in [0, 1] (got " + tok + ")");
    out.emplace_back(tok, v);
  }
  if (out.empty()) throw UsageError("--values must list at least one value");
  return out;
}

}  // namespace cli_detail

/// One distillation run per value of alpha, delta or tau; curves merged into
/// reports/sweep.csv in value order.
inline int cmd_sweep(const CliOptions& o) {
  return cli_detail::guarded(*o.log, [&] {
    auto l = cli_detail::load(o);
    if (o.out.empty()) throw UsageError("--out is required");
    if (!o.mode.empty()) l.cfg.train.mode = parse_mode(o.mode);
    const std::string param = o.param.empty() ? cli_detail::input_or("", l.inputs, "param") : o.param;
    const std::string values_csv = o.values.empty() ? cli_detail::input_or("", l.inputs, "values") : o.values;
    const auto values = cli_detail::parse_sweep_values(param, values_csv);
    const std::string data = cli_detail::input_or(o.data, l.inputs, "data");
    const std::string teachers = cli_detail::input_or(o.teachers, l.inputs, "teachers");
    if (data.empty()) throw UsageError("--data is required");

    std::vector<RunConfig> cfgs;
    for (const auto& [tok, v] : values) {
      RunConfig c = l.cfg;
      if (param == "alpha") c.train.alpha = v;
      if (param == "delta") c.train.delta = static_cast<std::int64_t>(v);
      if (param == "tau") c.train.tau = v;
      if (param == "alpha" && v != 0.0 && !updates_teachers(c.train.mode))
        throw UsageError(std::string("alpha sweep needs a mode with teacher updates, got ") + mode_name(c.train.mode));
      config_for_mode(c.train, c.train.mode).validate();
      cfgs.push_back(std::move(c));
    }

    const fs::path out(o.out);
    cli_detail::ensure_dir(out);
    cli_detail::ensure_dir(out / "reports");
    cli_detail::ojson inputs;
    inputs["data"] = data;
    inputs["teachers"] = teachers;
    inputs["param"] = param;
    inputs["values"] = values_csv;
    cli_detail::ojson artifacts;
    artifacts["runs"] = cli_detail::ojson::array();
    for (const auto& [tok, v] : values) artifacts["runs"].push_back("runs/" + param + "-" + tok);
    artifacts["reports"] = {"reports/sweep.csv"};
    cli_detail::write_manifest(out, cli_detail::manifest("sweep", l.cfg, inputs, artifacts));

    std::vector<cli_detail::DistillRun> runs(values.size());
    std::vector<std::string> logs(values.size());
    std::vector<int> codes(values.size(), kExitOk);
    auto run_one = [&](std::size_t i, std::ostream& log) {
      cli_detail::ojson in = inputs;
      in.erase("param");
      in.erase("values");
      codes[i] = cli_detail::guarded(log, [&] {
        runs[i] = cli_detail::run_distill(cfgs[i], in, data, teachers, out / "runs" / (param + "-" + values[i].first), log);
        return kExitOk;
      });
    };
    if (o.parallel && values.size() > 1) {
      std::vector<std::ostringstream> bufs(values.size());
      std::vector<std::thread> pool;
      const std::size_t width = std::max(1u, std::thread::hardware_concurrency());
      for (std::size_t start = 0; start < values.size(); start += width) {
        pool.clear();
        for (std::size_t i = start; i < std::min(values.size(), start + width); ++i)
          pool.emplace_back([&, i] { run_one(i, bufs[i]); });
        for (auto& t : pool) t.join();
      }
      for (auto& b : bufs) *o.log << b.str();
    } else {
      for (std::size_t i = 0; i < values.size(); ++i) run_one(i, *o.log);
    }
    for (int c : codes)
      if (c != kExitOk) return c;

    std::string csv = "param,value,epoch,step,dev_ter,retention,mean_confidence,diverged\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& rep = runs[i].report;
      for (const auto& e : rep.epochs)
        csv += param + "," + values[i].first + "," + std::to_string(e.epoch) + "," + std::to_string(e.step) + "," +
               cli_detail::fmt6(e.dev_ter) + "," + cli_detail::fmt6(e.retention) + "," +
               cli_detail::fmt6(e.mean_confidence) + "," + (rep.diverged ? "1" : "0") + "\n";
      if (rep.diverged)
        *o.log << param << "=" << values[i].first << " diverged at step " << rep.divergence_step << "\n";
    }
    cli_detail::write_text(out / "reports" / "sweep.csv", csv);
    return kExitOk;
  });
}

}  // namespace stu
