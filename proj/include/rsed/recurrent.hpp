// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rsed/errors.hpp"
#include "rsed/numerics.hpp"
#include "rsed/random.hpp"

namespace rsed {

/// Time-major sequence of frame vectors: row t is the vector at frame t.
class Sequence {
 public:
  Sequence() = default;
  Sequence(std::size_t length, std::size_t dim) : frames_(length, dim) {}
  explicit Sequence(Matrix frames) : frames_(std::move(frames)) {}

  /// Frames from a d x T feature matrix (one column per frame).
  static Sequence from_features(const Matrix& features) {
    return Sequence(features.transposed());
  }

  std::size_t length() const { return frames_.rows(); }
  std::size_t dim() const { return frames_.cols(); }

  std::span<double> operator[](std::size_t t) { return frames_.row(t); }
  std::span<const double> operator[](std::size_t t) const { return frames_.row(t); }

  const Matrix& matrix() const { return frames_; }
  Matrix& matrix() { return frames_; }

  Sequence reversed() const {
    Sequence out(length(), dim());
    for (std::size_t t = 0; t < length(); ++t) {
      const auto src = (*this)[length() - 1 - t];
      std::copy(src.begin(), src.end(), out[t].begin());
    }
    return out;
  }

  friend bool operator==(const Sequence&, const Sequence&) = default;

 private:
  Matrix frames_;
};

struct GruParams {
  Matrix Wz, Wr, Wh;  // hidden x input
  Matrix Uz, Ur, Uh;  // hidden x hidden
  Vector bz, br, bh;

  static GruParams zeros(std::size_t input_dim, std::size_t hidden) {
    GruParams p;
    p.Wz = p.Wr = p.Wh = Matrix(hidden, input_dim);
    p.Uz = p.Ur = p.Uh = Matrix(hidden, hidden);
    p.bz = p.br = p.bh = Vector(hidden, 0.0);
    return p;
  }

  std::size_t hidden() const { return bz.size(); }
  std::size_t input_dim() const { return Wz.cols(); }

  friend bool operator==(const GruParams&, const GruParams&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, GruParams>
void for_each_block(P& p, F&& f) {
  for (auto* m : {&p.Wz, &p.Wr, &p.Wh, &p.Uz, &p.Ur, &p.Uh}) f(std::span(m->values()));
  for (auto* b : {&p.bz, &p.br, &p.bh}) f(std::span(*b));
}

/// Activations of one unidirectional pass, kept for backprop.
struct GruTrace {
  Sequence input;
  Sequence z, r, n, h;
};

namespace detail {

inline void gru_step_into(const GruParams& p, std::span<const double> x,
                          std::span<const double> h_prev, std::span<double> z,
                          std::span<double> r, std::span<double> n, std::span<double> h) {
  const std::size_t H = p.hidden();
  std::copy(p.bz.begin(), p.bz.end(), z.begin());
  std::copy(p.br.begin(), p.br.end(), r.begin());
  std::copy(p.bh.begin(), p.bh.end(), n.begin());
  mul_add(p.Wz, x, z);
  mul_add(p.Uz, h_prev, z);
  mul_add(p.Wr, x, r);
  mul_add(p.Ur, h_prev, r);
  Vector gated(H);
  for (std::size_t i = 0; i < H; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
    gated[i] = r[i] * h_prev[i];
  }
  mul_add(p.Wh, x, n);
  mul_add(p.Uh, gated, n);
  for (std::size_t i = 0; i < H; ++i) {
    n[i] = std::tanh(n[i]);
    h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * n[i];
  }
}

}  // namespace detail

inline void check_dims(const GruParams& p, std::size_t input_dim) {
  const std::size_t H = p.hidden();
  require(H >= 1, "GRU: hidden size must be >= 1");
  require(p.input_dim() == input_dim, "GRU: input dimension mismatch");
  for (const Matrix* m : {&p.Wz, &p.Wr, &p.Wh})
    require(m->rows() == H && m->cols() == input_dim, "GRU: W matrix shape mismatch");
  for (const Matrix* m : {&p.Uz, &p.Ur, &p.Uh})
    require(m->rows() == H && m->cols() == H, "GRU: U matrix shape mismatch");
  require(p.br.size() == H && p.bh.size() == H, "GRU: bias length mismatch");
}

/// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
/// n = tanh(Wh x + Uh (r*h) + bh), h' = (1-z) h + z n.
inline Vector gru_cell_step(const GruParams& p, std::span<const double> x,
                            std::span<const double> h_prev) {
  check_dims(p, x.size());
  require(h_prev.size() == p.hidden(), "gru_cell_step: h_prev dimension mismatch");
  const std::size_t H = p.hidden();
  Vector z(H), r(H), n(H), h(H);
  detail::gru_step_into(p, x, h_prev, z, r, n, h);
  return h;
}

/// Runs the cell over `input` from a zero initial state.
inline GruTrace gru_forward(const GruParams& p, const Sequence& input) {
  check_dims(p, input.dim());
  const std::size_t T = input.length(), H = p.hidden();
  GruTrace tr{input, Sequence(T, H), Sequence(T, H), Sequence(T, H), Sequence(T, H)};
  const Vector zero(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::span<const double> h_prev = t == 0 ? std::span<const double>(zero) : tr.h[t - 1];
    detail::gru_step_into(p, input[t], h_prev, tr.z[t], tr.r[t], tr.n[t], tr.h[t]);
  }
  return tr;
}

/// Backprop through time. Accumulates parameter gradients into `grad` and
/// returns dL/d(input).
inline Sequence gru_backward(const GruParams& p, const GruTrace& tr, const Sequence& d_out,
                             GruParams& grad) {
  const std::size_t T = tr.h.length(), H = p.hidden(), D = p.input_dim();
  require(d_out.length() == T && d_out.dim() == H, "gru_backward: gradient shape mismatch");
  Sequence d_input(T, D);
  Vector dh(H, 0.0), dh_prev(H), da_z(H), da_r(H), da_n(H), d_gated(H), gated(H);
  const Vector zero(H, 0.0);
  for (std::size_t step = T; step-- > 0;) {
    const auto z = tr.z[step], r = tr.r[step], n = tr.n[step];
    std::span<const double> h_prev = step == 0 ? std::span<const double>(zero) : tr.h[step - 1];
    const auto x = tr.input[step];
    for (std::size_t i = 0; i < H; ++i) dh[i] += d_out[step][i];

    for (std::size_t i = 0; i < H; ++i) {
      dh_prev[i] = dh[i] * (1.0 - z[i]);
      const double dz = dh[i] * (n[i] - h_prev[i]);
      da_z[i] = dz * z[i] * (1.0 - z[i]);
      da_n[i] = dh[i] * z[i] * (1.0 - n[i] * n[i]);
      gated[i] = r[i] * h_prev[i];
      d_gated[i] = 0.0;
    }
    mul_transpose_add(p.Uh, da_n, d_gated);
    for (std::size_t i = 0; i < H; ++i) {
      const double dr = d_gated[i] * h_prev[i];
      da_r[i] = dr * r[i] * (1.0 - r[i]);
      dh_prev[i] += d_gated[i] * r[i];
    }

    outer_add(grad.Wz, da_z, x);
    outer_add(grad.Wr, da_r, x);
    outer_add(grad.Wh, da_n, x);
    outer_add(grad.Uz, da_z, h_prev);
    outer_add(grad.Ur, da_r, h_prev);
    outer_add(grad.Uh, da_n, gated);
    add_to(grad.bz, da_z);
    add_to(grad.br, da_r);
    add_to(grad.bh, da_n);

    auto dx = d_input[step];
    mul_transpose_add(p.Wz, da_z, dx);
    mul_transpose_add(p.Wr, da_r, dx);
    mul_transpose_add(p.Wh, da_n, dx);
    mul_transpose_add(p.Uz, da_z, dh_prev);
    mul_transpose_add(p.Ur, da_r, dh_prev);
    dh.swap(dh_prev);
  }
  return d_input;
}

inline Sequence run_unidirectional(const GruParams& p, const Sequence& input) {
  return gru_forward(p, input).h;
}

/// One recurrent layer: a forward cell and, if bidirectional, a backward cell.
struct LayerParams {
  GruParams fwd;
  std::optional<GruParams> bwd;

  bool bidirectional() const { return bwd.has_value(); }
  std::size_t output_dim() const { return fwd.hidden() * (bidirectional() ? 2 : 1); }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, LayerParams>
void for_each_block(P& layer, F&& f) {
  for_each_block(layer.fwd, f);
  if (layer.bwd) for_each_block(*layer.bwd, f);
}

struct LayerTrace {
  GruTrace fwd;
  std::optional<GruTrace> bwd;  // over the time-reversed input
  Sequence output;
};

/// Concatenates forward_t with the re-reversed backward pass at t.
inline Sequence concat_directions(const Sequence& fwd, const Sequence& bwd_reversed) {
  const std::size_t T = fwd.length(), H = fwd.dim();
  Sequence out(T, 2 * H);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(fwd[t].begin(), fwd[t].end(), out[t].begin());
    const auto b = bwd_reversed[T - 1 - t];
    std::copy(b.begin(), b.end(), out[t].begin() + static_cast<std::ptrdiff_t>(H));
  }
  return out;
}

inline LayerTrace layer_forward(const LayerParams& layer, const Sequence& input) {
  LayerTrace tr{gru_forward(layer.fwd, input), std::nullopt, {}};
  if (!layer.bwd) {
    tr.output = tr.fwd.h;
    return tr;
  }
  require(layer.bwd->hidden() == layer.fwd.hidden(),
          "bidirectional layer: directions must share hidden size");
  tr.bwd = gru_forward(*layer.bwd, input.reversed());
  tr.output = concat_directions(tr.fwd.h, tr.bwd->h);
  return tr;
}

inline Sequence layer_backward(const LayerParams& layer, const LayerTrace& tr,
                               const Sequence& d_out, LayerParams& grad) {
  if (!layer.bwd) return gru_backward(layer.fwd, tr.fwd, d_out, grad.fwd);
  const std::size_t T = d_out.length(), H = layer.fwd.hidden();
  Sequence d_fwd(T, H), d_bwd(T, H);  // d_bwd indexed in reversed time
  for (std::size_t t = 0; t < T; ++t) {
    const auto g = d_out[t];
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(H), d_fwd[t].begin());
    std::copy(g.begin() + static_cast<std::ptrdiff_t>(H), g.end(), d_bwd[T - 1 - t].begin());
  }
  Sequence d_input = gru_backward(layer.fwd, tr.fwd, d_fwd, grad.fwd);
  const Sequence d_rev = gru_backward(*layer.bwd, *tr.bwd, d_bwd, *grad.bwd);
  for (std::size_t t = 0; t < T; ++t) add_to(d_input[t], d_rev[T - 1 - t]);
  return d_input;
}

inline Sequence run_bidirectional(const GruParams& fwd, const GruParams& bwd,
                                  const Sequence& input) {
  return layer_forward(LayerParams{fwd, bwd}, input).output;
}

/// Pairwise frame average; an odd trailing frame passes through unchanged.
inline Sequence subsample2(const Sequence& input) {
  require(input.length() >= 1, "subsample2: empty sequence");
  const std::size_t T = input.length(), D = input.dim(), out_len = (T + 1) / 2;
  Sequence out(out_len, D);
  for (std::size_t k = 0; k < out_len; ++k) {
    const auto a = input[2 * k];
    auto o = out[k];
    if (2 * k + 1 < T) {
      const auto b = input[2 * k + 1];
      for (std::size_t i = 0; i < D; ++i) o[i] = 0.5 * (a[i] + b[i]);
    } else {
      std::copy(a.begin(), a.end(), o.begin());
    }
  }
  return out;
}

/// Adjoint of subsample2 for an input of length `input_length`.
inline Sequence subsample2_backward(const Sequence& d_out, std::size_t input_length) {
  require(d_out.length() == (input_length + 1) / 2, "subsample2_backward: length mismatch");
  const std::size_t D = d_out.dim();
  Sequence d_in(input_length, D);
  for (std::size_t k = 0; k < d_out.length(); ++k) {
    const auto g = d_out[k];
    if (2 * k + 1 < input_length) {
      for (std::size_t i = 0; i < D; ++i) d_in[2 * k][i] = d_in[2 * k + 1][i] = 0.5 * g[i];
    } else {
      std::copy(g.begin(), g.end(), d_in[2 * k].begin());
    }
  }
  return d_in;
}

/// Length after `levels` applications of subsample2.
constexpr std::size_t subsampled_length(std::size_t length, std::size_t levels) {
  for (std::size_t i = 0; i < levels; ++i) length = (length + 1) / 2;
  return length;
}

/// Replicates each frame of a `levels`-times subsampled sequence over the
/// 2^levels frames it summarizes (0-based: out_t = in_{t >> levels}).
inline Sequence upsample_replicate(const Sequence& input, std::size_t target_length,
                                   std::size_t levels) {
  require(target_length >= input.length(), "upsample_replicate: target shorter than input");
  require(subsampled_length(target_length, levels) == input.length(),
          "upsample_replicate: input is not target_length subsampled `levels` times");
  Sequence out(target_length, input.dim());
  for (std::size_t t = 0; t < target_length; ++t) {
    const auto src = input[t >> levels];
    std::copy(src.begin(), src.end(), out[t].begin());
  }
  return out;
}

/// Adjoint of upsample_replicate: sums gradients over each replicated span.
inline Sequence upsample_replicate_backward(const Sequence& d_out, std::size_t levels) {
  const std::size_t short_len = subsampled_length(d_out.length(), levels);
  Sequence d_in(short_len, d_out.dim());
  for (std::size_t t = 0; t < d_out.length(); ++t) add_to(d_in[t >> levels], d_out[t]);
  return d_in;
}

enum class EncoderKind { unidirectional, bidirectional, multiresolution };

inline std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::unidirectional: return "unidirectional";
    case EncoderKind::bidirectional: return "bidirectional";
    case EncoderKind::multiresolution: return "multiresolution";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "unidirectional" || s == "uni") return EncoderKind::unidirectional;
  if (s == "bidirectional" || s == "bi") return EncoderKind::bidirectional;
  if (s == "multiresolution" || s == "multires") return EncoderKind::multiresolution;
  throw ConfigError("unknown encoder kind '" + std::string(s) + "'");
}

struct EncoderConfig {
  EncoderKind kind = EncoderKind::multiresolution;
  std::size_t layers = 2;
  std::size_t hidden = 32;   // units per direction
  std::size_t input_dim = 16;
  bool multires_bidirectional = false;  // direction of multi-resolution layers

  bool layer_bidirectional() const {
    return kind == EncoderKind::bidirectional ||
           (kind == EncoderKind::multiresolution && multires_bidirectional);
  }
  std::size_t output_dim() const { return hidden * (layer_bidirectional() ? 2 : 1); }

  void validate() const {
    if (layers < 1) throw ConfigError("encoder.layers must be >= 1");
    if (hidden < 1) throw ConfigError("encoder.hidden must be >= 1");
    if (input_dim < 1) throw ConfigError("encoder.input_dim must be >= 1");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct Encoder {
  EncoderConfig config;
  std::vector<LayerParams> layers;

  static Encoder zeros(const EncoderConfig& config) {
    config.validate();
    Encoder e{config, {}};
    std::size_t in = config.input_dim;
    for (std::size_t l = 0; l < config.layers; ++l) {
      LayerParams layer{GruParams::zeros(in, config.hidden), std::nullopt};
      if (config.layer_bidirectional()) layer.bwd = GruParams::zeros(in, config.hidden);
      in = layer.output_dim();
      e.layers.push_back(std::move(layer));
    }
    return e;
  }

  std::size_t output_dim() const { return config.output_dim(); }

  friend bool operator==(const Encoder&, const Encoder&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, Encoder>
void for_each_block(P& e, F&& f) {
  for (auto& layer : e.layers) for_each_block(layer, f);
}

/// Uniform in [-s, s], s = 1/sqrt(fan-in) for every weight matrix; biases zero.
inline void initialize(GruParams& p, Rng& rng) {
  const double s_in = 1.0 / std::sqrt(static_cast<double>(p.input_dim()));
  const double s_h = 1.0 / std::sqrt(static_cast<double>(p.hidden()));
  for (Matrix* m : {&p.Wz, &p.Wr, &p.Wh})
    for (double& v : m->values()) v = rng.uniform(-s_in, s_in);
  for (Matrix* m : {&p.Uz, &p.Ur, &p.Uh})
    for (double& v : m->values()) v = rng.uniform(-s_h, s_h);
  for (Vector* b : {&p.bz, &p.br, &p.bh}) std::fill(b->begin(), b->end(), 0.0);
}

inline void initialize(Encoder& e, Rng& rng) {
  for (auto& layer : e.layers) {
    initialize(layer.fwd, rng);
    if (layer.bwd) initialize(*layer.bwd, rng);
  }
}

struct EncoderTrace {
  std::vector<LayerTrace> layers;
  std::vector<Sequence> subsampled;  // multi-resolution only: subsample2(output of layer l)
  Sequence output;
};

inline void check_encoder(const Encoder& e, std::size_t input_dim) {
  require(!e.layers.empty(), "encoder: no layers");
  require(e.layers.front().fwd.input_dim() == input_dim, "encoder: input dimension mismatch");
  for (std::size_t l = 1; l < e.layers.size(); ++l)
    require(e.layers[l].fwd.input_dim() == e.layers[l - 1].output_dim(),
            "encoder: layer input dim != previous layer output dim");
}

/// Plain L-layer stack (uni- or bi-directional); output is the top layer at full rate.
inline EncoderTrace stack_forward(const Encoder& e, const Sequence& frames) {
  check_encoder(e, frames.dim());
  EncoderTrace tr;
  const Sequence* input = &frames;
  for (const auto& layer : e.layers) {
    tr.layers.push_back(layer_forward(layer, *input));
    input = &tr.layers.back().output;
  }
  tr.output = tr.layers.back().output;
  return tr;
}

/// Layer l runs on the input subsampled l-1 times; the representation is
/// sum_l upsample(subsample2(output_l), T).
inline EncoderTrace multires_forward(const Encoder& e, const Sequence& frames) {
  check_encoder(e, frames.dim());
  for (const auto& layer : e.layers)
    require(layer.output_dim() == e.layers.front().output_dim(),
            "multiresolution: all layers must share an output dimension");
  const std::size_t T = frames.length();
  EncoderTrace tr;
  tr.output = Sequence(T, e.layers.front().output_dim());
  tr.layers.reserve(e.layers.size());
  tr.subsampled.reserve(e.layers.size());
  for (std::size_t l = 0; l < e.layers.size(); ++l) {
    const Sequence& input = l == 0 ? frames : tr.subsampled[l - 1];
    tr.layers.push_back(layer_forward(e.layers[l], input));
    tr.subsampled.push_back(subsample2(tr.layers[l].output));
    const Sequence up = upsample_replicate(tr.subsampled[l], T, l + 1);
    for (std::size_t t = 0; t < T; ++t) add_to(tr.output[t], up[t]);
  }
  return tr;
}

inline EncoderTrace encoder_forward(const Encoder& e, const Sequence& frames) {
  require(frames.length() >= 1, "encoder: empty input sequence");
  return e.config.kind == EncoderKind::multiresolution ? multires_forward(e, frames)
                                                       : stack_forward(e, frames);
}

/// Accumulates dL/d(params) into `grad` given dL/d(encoder output).
inline void encoder_backward(const Encoder& e, const EncoderTrace& tr, const Sequence& d_output,
                             Encoder& grad) {
  const std::size_t L = e.layers.size();
  if (e.config.kind != EncoderKind::multiresolution) {
    Sequence d = d_output;
    for (std::size_t l = L; l-- > 0;) d = layer_backward(e.layers[l], tr.layers[l], d, grad.layers[l]);
    return;
  }
  Sequence d_next_input;  // dL/d(subsampled_l) arriving from layer l+1
  for (std::size_t l = L; l-- > 0;) {
    Sequence d_sub = upsample_replicate_backward(d_output, l + 1);
    if (l + 1 < L)
      for (std::size_t k = 0; k < d_sub.length(); ++k) add_to(d_sub[k], d_next_input[k]);
    const Sequence d_layer_out = subsample2_backward(d_sub, tr.layers[l].output.length());
    d_next_input = layer_backward(e.layers[l], tr.layers[l], d_layer_out, grad.layers[l]);
  }
}

}  // namespace rsed
