// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>

#include "CLI11.hpp"
#include "stu/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stu: ensemble teacher-student domain adaptation on a synthetic CTC benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(stu::kToolVersion));

  stu::CliOptions o;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file or run manifest")->required();
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_option("--seed", seed, "override the config seed");
  };

  auto* gen = app.add_subcommand("gen", "generate the benchmark datasets");
  add_common(gen);
  gen->add_option("--data", o.data, "dataset directory (default <out>/data)");

  auto* pretrain = app.add_subcommand("pretrain", "train one teacher per labelled domain");
  add_common(pretrain);
  pretrain->add_option("--data", o.data, "dataset directory");

  auto* distill = app.add_subcommand("distill", "train a student on the unlabelled target domain");
  add_common(distill);
  distill->add_option("--data", o.data, "dataset directory");
  distill->add_option("--teachers", o.teachers, "directory with teacher-*.ckpt");
  distill->add_option("--mode", o.mode, "sts, kaizen, ets, mets or stu");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on every domain");
  add_common(eval);
  eval->add_option("--data", o.data, "dataset directory");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint to score")->required();

  auto* sweep = app.add_subcommand("sweep", "distil once per value of alpha, delta or tau");
  add_common(sweep);
  sweep->add_option("--data", o.data, "dataset directory");
  sweep->add_option("--teachers", o.teachers, "directory with teacher-*.ckpt");
  sweep->add_option("--mode", o.mode, "sts, kaizen, ets, mets or stu");
  sweep->add_option("--param", o.param, "alpha, delta or tau");
  sweep->add_option("--values", o.values, "comma-separated values");
  sweep->add_flag("--parallel", o.parallel, "run value points concurrently");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : stu::kExitUsage;
  }
  for (auto* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) o.seed = seed;

  if (gen->parsed()) return stu::cmd_gen(o);
  if (pretrain->parsed()) return stu::cmd_pretrain(o);
  if (distill->parsed()) return stu::cmd_distill(o);
  if (eval->parsed()) return stu::cmd_eval(o);
  return stu::cmd_sweep(o);
}
