// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Synthetic multi-domain sequence-labelling data.
//
// Every token g in [1, G] owns a prototype F-vector drawn once per seed. A
// domain is an affine map plus isotropic noise: a frame emitted for token g
// is transform * prototype[g] + bias + N(0, noise_sigma^2). Token id 0 is the
// CTC blank and never appears in a label sequence.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stu/errors.hpp"
#include "stu/matrix.hpp"
#include "stu/rng.hpp"

namespace stu {

using Labels = std::vector<int>;

inline constexpr int kBlank = 0;

/// Number of adjacent equal pairs; each one forces an extra blank frame in CTC.
inline std::size_t adjacent_repeats(const Labels& labels) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

/// Minimum number of frames a CTC alignment of `labels` needs.
inline std::size_t ctc_min_frames(const Labels& labels) { return labels.size() + adjacent_repeats(labels); }

struct DomainSpec {
  int domain_id = 0;
  std::string name;
  Matrix transform;
  std::vector<double> bias;
  double noise_sigma = 0.0;
  bool labelled = true;

  void validate() const {
    if (transform.rows() != transform.cols() || transform.rows() != bias.size())
      throw ConfigError("domain '" + name + "': transform must be FxF and bias F-dimensional");
    if (!(noise_sigma >= 0.0)) throw ConfigError("domain '" + name + "': noise_sigma must be >= 0");
    if (!(std::abs(determinant(transform)) > 1e-6))
      throw ConfigError("domain '" + name + "': transform is not invertible");
  }
};

struct Utterance {
  std::string id;
  int domain_id = 0;
  Matrix frames;  // T' x F
  Labels labels;

  std::size_t num_frames() const { return frames.rows(); }
  bool operator==(const Utterance&) const = default;
};

/// Frames-only view of an utterance; what the student trainer gets for target data.
struct UnlabelledUtterance {
  std::string id;
  int domain_id = 0;
  Matrix frames;
};

enum class Split { kTrain, kDev, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw SchemaError("unknown split '" + s + "'");
}

struct Dataset {
  int vocab_size = 0;
  int feature_dim = 0;
  Split split = Split::kTrain;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }
  bool operator==(const Dataset&) const = default;
};

inline std::vector<UnlabelledUtterance> strip_labels(const Dataset& d) {
  std::vector<UnlabelledUtterance> out;
  out.reserve(d.size());
  for (const auto& u : d.utterances) out.push_back({u.id, u.domain_id, u.frames});
  return out;
}

// ---------------------------------------------------------------------------
// Generator settings

/// How one domain is generated. Unless given explicitly, the transform is
/// I + shift * R / sqrt(F) with R standard normal, and the bias is
/// bias_scale * N(0, I).
struct DomainSettings {
  std::string name;
  bool labelled = true;
  std::size_t count = 1;
  double shift = 0.0;
  double bias_scale = 0.0;
  double noise_sigma = 0.0;
  std::optional<Matrix> transform;
  std::optional<std::vector<double>> bias;
};

struct GenConfig {
  int vocab_size = 8;
  int feature_dim = 16;
  int label_len_min = 2;
  int label_len_max = 10;
  int frames_per_token_min = 2;
  int frames_per_token_max = 4;
  double silence_prob = 0.3;
  double silence_sigma = 0.3;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::vector<DomainSettings> domains;

  void validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
    if (label_len_min < 2 || label_len_min > label_len_max)
      throw ConfigError("label_len bounds must satisfy 2 <= min <= max");
    if (frames_per_token_min < 2 || frames_per_token_min > frames_per_token_max)
      throw ConfigError("frames_per_token bounds must satisfy 2 <= min <= max");
    if (!(silence_prob >= 0.0 && silence_prob <= 1.0)) throw ConfigError("silence_prob must be in [0, 1]");
    if (!(silence_sigma >= 0.0)) throw ConfigError("silence_sigma must be >= 0");
    if (domains.empty()) throw ConfigError("domains must not be empty");
    for (const auto& d : domains) {
      if (d.count < 1) throw ConfigError("domain '" + d.name + "': count must be >= 1");
      if (d.noise_sigma < 0.0) throw ConfigError("domain '" + d.name + "': noise_sigma must be >= 0");
    }
  }
};

/// Default benchmark: three labelled sources and one unlabelled target.
/// 2500 utterances per source and 5000 for the target split 80/10/10 give
/// 2000 train per source and 4000/500/500 for the target.
inline GenConfig default_gen_config() {
  GenConfig g;
  g.domains = {
      {"src1", true, 2500, 0.3, 0.4, 0.2, std::nullopt, std::nullopt},
      {"src2", true, 2500, 0.3, 0.4, 0.2, std::nullopt, std::nullopt},
      {"src3", true, 2500, 0.3, 0.4, 0.2, std::nullopt, std::nullopt},
      {"target", false, 5000, 0.45, 0.3, 0.8, std::nullopt, std::nullopt},
  };
  return g;
}

// ---------------------------------------------------------------------------
// Generation

struct DomainData {
  DomainSpec spec;
  Dataset train, dev, test;
  const Dataset& split(Split s) const { return s == Split::kTrain ? train : s == Split::kDev ? dev : test; }
};

struct GeneratedBenchmark {
  Matrix prototypes;  // row g-1 holds the prototype of token g
  std::vector<DomainData> domains;

  const DomainData& domain(const std::string& name) const {
    for (const auto& d : domains)
      if (d.spec.name == name) return d;
    throw UsageError("no domain named '" + name + "'");
  }
};

inline Matrix draw_prototypes(int vocab_size, int feature_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  Matrix p(static_cast<std::size_t>(vocab_size), static_cast<std::size_t>(feature_dim));
  for (double& v : p.data()) v = rng.gaussian();
  return p;
}

inline DomainSpec make_domain_spec(const GenConfig& cfg, std::size_t index, std::uint64_t seed) {
  const auto& s = cfg.domains[index];
  const auto f = static_cast<std::size_t>(cfg.feature_dim);
  Rng rng(derive_seed(seed, 1000 + index));
  DomainSpec spec;
  spec.domain_id = static_cast<int>(index);
  spec.name = s.name;
  spec.noise_sigma = s.noise_sigma;
  spec.labelled = s.labelled;
  if (s.transform) {
    spec.transform = *s.transform;
  } else {
    spec.transform = Matrix::identity(f);
    const double scale = s.shift / std::sqrt(static_cast<double>(f));
    for (double& v : spec.transform.data()) v += scale * rng.gaussian();
  }
  if (s.bias) {
    spec.bias = *s.bias;
  } else {
    spec.bias.resize(f);
    for (double& v : spec.bias) v = s.bias_scale * rng.gaussian();
  }
  if (spec.transform.rows() != f || spec.bias.size() != f)
    throw ConfigError("domain '" + s.name + "': transform/bias must match feature_dim");
  spec.validate();
  return spec;
}

/// Splits in generation order: sizes are floor(n * f) with the remainder
/// going to train.
inline std::array<Dataset, 3> split_dataset(const Dataset& d, std::array<double, 3> fractions) {
  for (double f : fractions)
    if (!(f > 0.0)) throw ConfigError("split fractions must all be positive");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  const std::size_t n = d.size();
  const auto dev_n = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[1]));
  const auto test_n = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[2]));
  const std::size_t train_n = n - dev_n - test_n;

  std::array<Dataset, 3> out;
  const Split kinds[3] = {Split::kTrain, Split::kDev, Split::kTest};
  const std::size_t bounds[4] = {0, train_n, train_n + dev_n, n};
  for (int k = 0; k < 3; ++k) {
    out[k].vocab_size = d.vocab_size;
    out[k].feature_dim = d.feature_dim;
    out[k].split = kinds[k];
    out[k].utterances.assign(d.utterances.begin() + static_cast<std::ptrdiff_t>(bounds[k]),
                             d.utterances.begin() + static_cast<std::ptrdiff_t>(bounds[k + 1]));
  }
  return out;
}

inline Dataset generate_domain(const GenConfig& cfg, const DomainSpec& spec, const Matrix& prototypes,
                               std::size_t count, std::uint64_t seed) {
  const auto f = static_cast<std::size_t>(cfg.feature_dim);
  Rng rng(derive_seed(seed, 2000 + static_cast<std::uint64_t>(spec.domain_id)));

  // Noise-free emission mean per token.
  std::vector<std::vector<double>> means;
  for (int g = 0; g < cfg.vocab_size; ++g) {
    auto m = mat_vec(spec.transform, prototypes.row(static_cast<std::size_t>(g)));
    for (std::size_t j = 0; j < f; ++j) m[j] += spec.bias[j];
    means.push_back(std::move(m));
  }

  Dataset d;
  d.vocab_size = cfg.vocab_size;
  d.feature_dim = cfg.feature_dim;
  d.utterances.reserve(count);
  std::vector<double> frames;
  for (std::size_t n = 0; n < count; ++n) {
    Utterance u;
    std::ostringstream id;
    id << spec.name << '-' << n;
    u.id = id.str();
    u.domain_id = spec.domain_id;
    const auto len = rng.uniform_int(cfg.label_len_min, cfg.label_len_max);
    for (std::int64_t i = 0; i < len; ++i) u.labels.push_back(static_cast<int>(rng.uniform_int(1, cfg.vocab_size)));

    frames.clear();
    for (std::size_t i = 0; i < u.labels.size(); ++i) {
      if (i > 0 && rng.bernoulli(cfg.silence_prob)) {
        const auto sil = rng.uniform_int(1, 2);
        for (std::int64_t k = 0; k < sil; ++k)
          for (std::size_t j = 0; j < f; ++j) frames.push_back(spec.bias[j] + cfg.silence_sigma * rng.gaussian());
      }
      const auto& mean = means[static_cast<std::size_t>(u.labels[i] - 1)];
      const auto dur = rng.uniform_int(cfg.frames_per_token_min, cfg.frames_per_token_max);
      for (std::int64_t k = 0; k < dur; ++k)
        for (std::size_t j = 0; j < f; ++j)
          frames.push_back(spec.noise_sigma > 0.0 ? mean[j] + spec.noise_sigma * rng.gaussian() : mean[j]);
    }
    u.frames = Matrix(frames.size() / f, f, frames);
    d.utterances.push_back(std::move(u));
  }
  return d;
}

/// Generates every configured domain and splits it.
inline GeneratedBenchmark gen_dataset(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GeneratedBenchmark out;
  out.prototypes = draw_prototypes(cfg.vocab_size, cfg.feature_dim, seed);
  for (std::size_t i = 0; i < cfg.domains.size(); ++i) {
    DomainData dd;
    dd.spec = make_domain_spec(cfg, i, seed);
    const Dataset full = generate_domain(cfg, dd.spec, out.prototypes, cfg.domains[i].count, seed);
    auto parts = split_dataset(full, cfg.split_fractions);
    dd.train = std::move(parts[0]);
    dd.dev = std::move(parts[1]);
    dd.test = std::move(parts[2]);
    out.domains.push_back(std::move(dd));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines file format

inline std::string dataset_to_string(const Dataset& d) {
  using ojson = nlohmann::ordered_json;
  std::string out;
  ojson header;
  header["vocab_size"] = d.vocab_size;
  header["feature_dim"] = d.feature_dim;
  header["split"] = split_name(d.split);
  out += header.dump();
  out += '\n';
  for (const auto& u : d.utterances) {
    ojson line;
    line["id"] = u.id;
    line["domain"] = u.domain_id;
    line["labels"] = u.labels;
    ojson frames = ojson::array();
    for (std::size_t t = 0; t < u.frames.rows(); ++t) {
      const auto r = u.frames.row(t);
      frames.push_back(std::vector<double>(r.begin(), r.end()));
    }
    line["frames"] = std::move(frames);
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << dataset_to_string(d);
  if (!os) throw IoError("write to '" + path + "' failed");
}

inline Dataset dataset_from_stream(std::istream& is) {
  using json = nlohmann::json;
  Dataset d;
  std::string text;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, text)) {
    ++lineno;
    const bool terminated = !is.eof();
    if (text.empty() && !terminated) break;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
    try {
      if (!have_header) {
        d.vocab_size = j.at("vocab_size").get<int>();
        d.feature_dim = j.at("feature_dim").get<int>();
        d.split = parse_split(j.at("split").get<std::string>());
        if (d.vocab_size < 1 || d.feature_dim < 1) throw SchemaError("header sizes must be positive");
        have_header = true;
        continue;
      }
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.domain_id = j.at("domain").get<int>();
      u.labels = j.at("labels").get<Labels>();
      const auto rows = j.at("frames").get<std::vector<std::vector<double>>>();
      for (int l : u.labels)
        if (l < 1 || l > d.vocab_size)
          throw SchemaError("label id " + std::to_string(l) + " outside [1, " + std::to_string(d.vocab_size) + "]");
      if (rows.empty()) throw SchemaError("utterance has no frames");
      for (const auto& r : rows)
        if (r.size() != static_cast<std::size_t>(d.feature_dim))
          throw SchemaError("frame width " + std::to_string(r.size()) + " does not match feature_dim " +
                            std::to_string(d.feature_dim));
      u.frames = Matrix::from_rows(rows);
      d.utterances.push_back(std::move(u));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad field: ") + e.what(), lineno);
    }
  }
  if (!have_header) throw ParseError("missing header line", lineno);
  return d;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return dataset_from_stream(is);
}

}  // namespace stu
