// Copyright (C) 2026 The stu Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

// Framewise acoustic model: each frame is stacked with `context` neighbours on
// either side (edges repeat the boundary frame), then passed through
// affine+ReLU hidden layers and an affine output layer producing V = G + 1
// logits per frame. Blank is output index 0.
//
// Parameter layout (canonical order): for every layer, the out x in weight
// matrix row-major, then its out biases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stu/errors.hpp"
#include "stu/matrix.hpp"
#include "stu/rng.hpp"

namespace stu {

struct Architecture {
  int feature_dim = 16;
  int context = 2;
  std::vector<int> hidden_sizes{64, 64};
  int vocab_size = 8;

  int input_dim() const { return (2 * context + 1) * feature_dim; }
  int output_dim() const { return vocab_size + 1; }

  /// Layer widths from input to output.
  std::vector<int> widths() const {
    std::vector<int> w{input_dim()};
    w.insert(w.end(), hidden_sizes.begin(), hidden_sizes.end());
    w.push_back(output_dim());
    return w;
  }

  std::size_t param_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
      n += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]) + static_cast<std::size_t>(w[l + 1]);
    return n;
  }

  void validate() const {
    if (feature_dim < 1) throw ConfigError("architecture: feature_dim must be >= 1");
    if (context < 0) throw ConfigError("architecture: context must be >= 0");
    if (vocab_size < 1) throw ConfigError("architecture: vocab_size must be >= 1");
    for (int h : hidden_sizes)
      if (h < 1) throw ConfigError("architecture: hidden sizes must be >= 1");
  }

  bool operator==(const Architecture&) const = default;
};

struct ParamVector {
  Architecture arch;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParamVector&) const = default;
};

inline void check_params(const ParamVector& p) {
  if (p.values.size() != p.arch.param_count()) throw ShapeError("parameter vector length does not match architecture");
}

struct PosteriorGrid {
  Matrix posteriors;  // T' x V
  Matrix logits;      // T' x V

  std::size_t num_frames() const { return posteriors.rows(); }
  std::size_t num_tokens() const { return posteriors.cols(); }
};

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    const auto in = logits.row(t);
    auto o = out.row(t);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
      o[k] = std::exp(in[k] - mx);
      sum += o[k];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

inline ParamVector init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, 7));
  ParamVector p{arch, std::vector<double>(arch.param_count(), 0.0)};
  const auto w = arch.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto in = static_cast<std::size_t>(w[l]);
    const auto out = static_cast<std::size_t>(w[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) p.values[off + i] = rng.uniform(-bound, bound);
    off += in * out + out;
  }
  return p;
}

/// Context-stacked network input, T' x (2c+1)F.
inline Matrix stack_context(const Matrix& frames, int context) {
  const std::size_t t_len = frames.rows();
  const std::size_t f = frames.cols();
  const auto width = static_cast<std::size_t>(2 * context + 1);
  Matrix x(t_len, width * f);
  for (std::size_t t = 0; t < t_len; ++t) {
    auto dst = x.row(t);
    for (int o = -context; o <= context; ++o) {
      const auto src_t = static_cast<std::size_t>(
          std::clamp<std::int64_t>(static_cast<std::int64_t>(t) + o, 0, static_cast<std::int64_t>(t_len) - 1));
      const auto src = frames.row(src_t);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>((o + context) * static_cast<int>(f)));
    }
  }
  return x;
}

/// Activations kept from a forward pass for reuse by backward.
struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous)
  Matrix logits;
};

namespace detail {

// out = in * W^T + b, W is out_dim x in_dim row-major.
inline void affine(const Matrix& in, const double* w, const double* b, std::size_t out_dim, Matrix& out) {
  const std::size_t in_dim = in.cols();
  out = Matrix(in.rows(), out_dim);
  for (std::size_t t = 0; t < in.rows(); ++t) {
    const double* x = in.row(t).data();
    double* y = out.row(t).data();
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = w + o * in_dim;
      double acc = b[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
      y[o] = acc;
    }
  }
}

}  // namespace detail

inline ForwardCache forward_cached(const ParamVector& p, const Matrix& frames) {
  check_params(p);
  if (frames.cols() != static_cast<std::size_t>(p.arch.feature_dim))
    throw ShapeError("frame width " + std::to_string(frames.cols()) + " does not match architecture feature_dim " +
                     std::to_string(p.arch.feature_dim));
  if (frames.rows() == 0) throw ShapeError("utterance has no frames");
  const auto w = p.arch.widths();
  ForwardCache cache;
  cache.inputs.reserve(w.size() - 1);
  cache.inputs.push_back(stack_context(frames, p.arch.context));
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto in = static_cast<std::size_t>(w[l]);
    const auto out = static_cast<std::size_t>(w[l + 1]);
    const double* wp = p.values.data() + off;
    const double* bp = wp + in * out;
    off += in * out + out;
    Matrix z;
    detail::affine(cache.inputs.back(), wp, bp, out, z);
    if (l + 2 < w.size()) {
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
      cache.inputs.push_back(std::move(z));
    } else {
      cache.logits = std::move(z);
    }
  }
  return cache;
}

inline PosteriorGrid forward(const ParamVector& p, const Matrix& frames) {
  auto cache = forward_cached(p, frames);
  PosteriorGrid g;
  g.posteriors = softmax_rows(cache.logits);
  g.logits = std::move(cache.logits);
  return g;
}

/// Accumulates into `grad` the gradient of sum_t <grad_logits_t, logits_t>.
inline void backward_accumulate(const ParamVector& p, const ForwardCache& cache, const Matrix& grad_logits,
                                std::span<double> grad) {
  if (grad_logits.rows() != cache.logits.rows() || grad_logits.cols() != cache.logits.cols())
    throw ShapeError("grad_logits shape does not match the forward output");
  if (grad.size() != p.values.size()) throw ShapeError("gradient buffer length does not match parameters");
  const auto w = p.arch.widths();
  const std::size_t layers = w.size() - 1;

  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]) + static_cast<std::size_t>(w[l + 1]);
  }

  Matrix delta = grad_logits;  // dLoss/dZ for the current layer
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<std::size_t>(w[l]);
    const auto out = static_cast<std::size_t>(w[l + 1]);
    const Matrix& a = cache.inputs[l];
    const double* wp = p.values.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + in * out;
    for (std::size_t t = 0; t < a.rows(); ++t) {
      const double* x = a.row(t).data();
      const double* d = delta.row(t).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        gb[o] += dv;
        double* gr = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) gr[i] += dv * x[i];
      }
    }
    if (l == 0) break;
    Matrix prev(a.rows(), in);
    for (std::size_t t = 0; t < a.rows(); ++t) {
      const double* d = delta.row(t).data();
      double* pr = prev.row(t).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wr = wp + o * in;
        for (std::size_t i = 0; i < in; ++i) pr[i] += dv * wr[i];
      }
      // ReLU mask: the stored input is max(z, 0).
      const double* x = a.row(t).data();
      for (std::size_t i = 0; i < in; ++i)
        if (!(x[i] > 0.0)) pr[i] = 0.0;
    }
    delta = std::move(prev);
  }
}

inline std::vector<double> backward(const ParamVector& p, const Matrix& frames, const Matrix& grad_logits) {
  const auto cache = forward_cached(p, frames);
  std::vector<double> grad(p.values.size(), 0.0);
  backward_accumulate(p, cache, grad_logits, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Adam

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerState for_params(const ParamVector& p, double lr = 1e-3) {
    OptimizerState s;
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
    s.lr = lr;
    return s;
  }
};

/// One bias-corrected Adam step in place. Throws DivergenceError on a
/// non-finite gradient, leaving `p` and `state` untouched.
inline void optimizer_step(ParamVector& p, std::span<const double> grad, OptimizerState& state) {
  if (grad.size() != p.size() || state.m.size() != p.size() || state.v.size() != p.size())
    throw ShapeError("optimizer_step: gradient/state length does not match parameters");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw DivergenceError("non-finite gradient at parameter " + std::to_string(i), state.step);
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace stu
