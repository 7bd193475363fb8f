// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Run configuration: one JSON document with sections "generator",
// "architecture" and "train" plus a top-level "seed". Unknown keys are
// errors. A run manifest (which embeds the resolved config under "config")
// is accepted wherever a config is.

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stu/checkpoint.hpp"
#include "stu/data.hpp"
#include "stu/errors.hpp"
#include "stu/model.hpp"
#include "stu/trainer.hpp"

namespace stu {

struct RunConfig {
  std::uint64_t seed = 42;
  GenConfig generator = default_gen_config();
  int context = 2;
  std::vector<int> hidden_sizes{64, 64};
  TrainConfig train;

  Architecture arch() const {
    Architecture a;
    a.feature_dim = generator.feature_dim;
    a.context = context;
    a.hidden_sizes = hidden_sizes;
    a.vocab_size = generator.vocab_size;
    return a;
  }

  std::vector<std::string> labelled_domains() const {
    std::vector<std::string> out;
    for (const auto& d : generator.domains)
      if (d.labelled) out.push_back(d.name);
    return out;
  }

  /// The single unlabelled domain.
  std::string target_domain() const {
    std::string name;
    for (const auto& d : generator.domains)
      if (!d.labelled) {
        if (!name.empty()) throw ConfigError("generator.domains: exactly one unlabelled domain is supported");
        name = d.name;
      }
    if (name.empty()) throw ConfigError("generator.domains: no unlabelled (target) domain");
    return name;
  }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
}

template <typename T>
T get_required(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing config key '" + where + "." + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void get_optional(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void get_pair(const json& j, const std::string& where, const char* key, T& lo, T& hi) {
  if (!j.contains(key)) return;
  std::vector<T> v;
  get_optional(j, where, key, v);
  if (v.size() != 2) throw ConfigError("config key '" + where + "." + key + "' must be a [min, max] pair");
  lo = v[0];
  hi = v[1];
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& root_in) {
  using detail::json;
  const json& root = root_in.contains("config") && root_in.contains("manifest_version") ? root_in.at("config") : root_in;
  detail::reject_unknown(root, "config", {"seed", "generator", "architecture", "train"});
  RunConfig c;
  detail::get_optional(root, "config", "seed", c.seed);

  if (!root.contains("generator")) throw ConfigError("missing config key 'generator'");
  const json& g = root.at("generator");
  detail::reject_unknown(g, "generator",
                         {"vocab_size", "feature_dim", "label_len", "frames_per_token", "silence_prob", "silence_sigma",
                          "split", "domains"});
  GenConfig gen;
  gen.vocab_size = detail::get_required<int>(g, "generator", "vocab_size");
  gen.feature_dim = detail::get_required<int>(g, "generator", "feature_dim");
  detail::get_pair(g, "generator", "label_len", gen.label_len_min, gen.label_len_max);
  detail::get_pair(g, "generator", "frames_per_token", gen.frames_per_token_min, gen.frames_per_token_max);
  detail::get_optional(g, "generator", "silence_prob", gen.silence_prob);
  detail::get_optional(g, "generator", "silence_sigma", gen.silence_sigma);
  if (g.contains("split")) {
    std::vector<double> s;
    detail::get_optional(g, "generator", "split", s);
    if (s.size() != 3) throw ConfigError("config key 'generator.split' must hold three fractions");
    gen.split_fractions = {s[0], s[1], s[2]};
  }
  if (!g.contains("domains")) throw ConfigError("missing config key 'generator.domains'");
  if (!g.at("domains").is_array()) throw ConfigError("config key 'generator.domains' must be an array");
  gen.domains.clear();
  std::set<std::string> names;
  for (std::size_t i = 0; i < g.at("domains").size(); ++i) {
    const json& d = g.at("domains")[i];
    const std::string where = "generator.domains[" + std::to_string(i) + "]";
    detail::reject_unknown(d, where,
                           {"name", "labelled", "count", "shift", "bias_scale", "noise_sigma", "transform", "bias"});
    DomainSettings s;
    s.name = detail::get_required<std::string>(d, where, "name");
    s.labelled = detail::get_required<bool>(d, where, "labelled");
    s.count = detail::get_required<std::size_t>(d, where, "count");
    detail::get_optional(d, where, "shift", s.shift);
    detail::get_optional(d, where, "bias_scale", s.bias_scale);
    detail::get_optional(d, where, "noise_sigma", s.noise_sigma);
    if (d.contains("transform")) {
      std::vector<std::vector<double>> rows;
      detail::get_optional(d, where, "transform", rows);
      try {
        s.transform = Matrix::from_rows(rows);
      } catch (const ShapeError&) {
        throw ConfigError("config key '" + where + ".transform' is ragged");
      }
    }
    if (d.contains("bias")) {
      std::vector<double> b;
      detail::get_optional(d, where, "bias", b);
      s.bias = b;
    }
    const auto f = static_cast<std::size_t>(gen.feature_dim);
    if (s.transform) {
      if (s.transform->rows() != f || s.transform->cols() != f)
        throw ConfigError("config key '" + where + ".transform' must be feature_dim x feature_dim");
      if (!(std::abs(determinant(*s.transform)) > 1e-6))
        throw ConfigError("config key '" + where + ".transform' is not invertible");
    }
    if (s.bias && s.bias->size() != f)
      throw ConfigError("config key '" + where + ".bias' must have feature_dim entries");
    if (s.name.empty() || !names.insert(s.name).second)
      throw ConfigError(where + ".name must be non-empty and unique");
    gen.domains.push_back(std::move(s));
  }
  gen.validate();
  c.generator = std::move(gen);

  if (root.contains("architecture")) {
    const json& a = root.at("architecture");
    detail::reject_unknown(a, "architecture", {"context", "hidden_sizes"});
    detail::get_optional(a, "architecture", "context", c.context);
    detail::get_optional(a, "architecture", "hidden_sizes", c.hidden_sizes);
  }
  c.arch().validate();

  if (root.contains("train")) {
    const json& t = root.at("train");
    detail::reject_unknown(t, "train",
                           {"mode", "alpha", "delta", "tau", "lr", "batch_size", "pretrain_epochs", "distill_epochs",
                            "mets_stages", "divergence_factor"});
    auto& tc = c.train;
    if (t.contains("mode")) tc.mode = parse_mode(detail::get_required<std::string>(t, "train", "mode"));
    detail::get_optional(t, "train", "alpha", tc.alpha);
    detail::get_optional(t, "train", "delta", tc.delta);
    detail::get_optional(t, "train", "tau", tc.tau);
    detail::get_optional(t, "train", "lr", tc.lr);
    detail::get_optional(t, "train", "batch_size", tc.batch_size);
    detail::get_optional(t, "train", "pretrain_epochs", tc.pretrain_epochs);
    detail::get_optional(t, "train", "distill_epochs", tc.distill_epochs);
    detail::get_optional(t, "train", "mets_stages", tc.mets_stages);
    detail::get_optional(t, "train", "divergence_factor", tc.divergence_factor);
  }
  c.train.seed = c.seed;
  config_for_mode(c.train, c.train.mode).validate();
  return c;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  auto& g = j["generator"];
  g["vocab_size"] = c.generator.vocab_size;
  g["feature_dim"] = c.generator.feature_dim;
  g["label_len"] = {c.generator.label_len_min, c.generator.label_len_max};
  g["frames_per_token"] = {c.generator.frames_per_token_min, c.generator.frames_per_token_max};
  g["silence_prob"] = c.generator.silence_prob;
  g["silence_sigma"] = c.generator.silence_sigma;
  g["split"] = {c.generator.split_fractions[0], c.generator.split_fractions[1], c.generator.split_fractions[2]};
  g["domains"] = nlohmann::ordered_json::array();
  for (const auto& d : c.generator.domains) {
    nlohmann::ordered_json dj;
    dj["name"] = d.name;
    dj["labelled"] = d.labelled;
    dj["count"] = d.count;
    dj["shift"] = d.shift;
    dj["bias_scale"] = d.bias_scale;
    dj["noise_sigma"] = d.noise_sigma;
    if (d.transform) {
      auto rows = nlohmann::ordered_json::array();
      for (std::size_t r = 0; r < d.transform->rows(); ++r) {
        const auto row = d.transform->row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      dj["transform"] = rows;
    }
    if (d.bias) dj["bias"] = *d.bias;
    g["domains"].push_back(dj);
  }
  j["architecture"]["context"] = c.context;
  j["architecture"]["hidden_sizes"] = c.hidden_sizes;
  auto& t = j["train"];
  t["mode"] = mode_name(c.train.mode);
  t["alpha"] = c.train.alpha;
  t["delta"] = c.train.delta;
  t["tau"] = c.train.tau;
  t["lr"] = c.train.lr;
  t["batch_size"] = c.train.batch_size;
  t["pretrain_epochs"] = c.train.pretrain_epochs;
  t["distill_epochs"] = c.train.distill_epochs;
  t["mets_stages"] = c.train.mets_stages;
  t["divergence_factor"] = c.train.divergence_factor;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace stu
