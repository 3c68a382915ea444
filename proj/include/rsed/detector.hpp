// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "rsed/errors.hpp"
#include "rsed/numerics.hpp"
#include "rsed/random.hpp"
#include "rsed/recurrent.hpp"
#include "rsed/utterance.hpp"

namespace rsed {

inline constexpr double kProbabilityClamp = 1e-12;
inline constexpr double kAttentionEpsilon = 1e-12;
inline constexpr std::size_t kDefaultFrameMargin = 50;

/// Recurrent encoder plus the event vector w shared by the frame and
/// utterance classifiers.
struct EventModel {
  Encoder encoder;
  Vector w;

  static EventModel zeros(const EncoderConfig& config) {
    Encoder e = Encoder::zeros(config);
    const std::size_t h = e.output_dim();
    return EventModel{std::move(e), Vector(h, 0.0)};
  }

  /// Deterministic initialization from `seed`.
  static EventModel create(const EncoderConfig& config, std::uint64_t seed) {
    EventModel m = zeros(config);
    Rng rng(substream_seed(seed, 0x6d6f64656cULL));
    initialize(m.encoder, rng);
    const double s = 1.0 / std::sqrt(static_cast<double>(m.w.size()));
    for (double& v : m.w) v = rng.uniform(-s, s);
    return m;
  }

  const EncoderConfig& config() const { return encoder.config; }

  friend bool operator==(const EventModel&, const EventModel&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, EventModel>
void for_each_block(P& m, F&& f) {
  for_each_block(m.encoder, f);
  f(std::span(m.w));
}

struct ForwardTrace {
  EncoderTrace encoder;       // encoder.output holds h_1..h_T
  Vector frame_posteriors;    // p_t
  Vector attention;           // a_t
  Vector embedding;           // h = sum_t a_t h_t
  double posterior = 0.0;     // p

  const Sequence& frames() const { return encoder.output; }
};

/// Runs the encoder and computes p_t = sigmoid(w . h_t). Attention and the
/// utterance posterior are left empty.
inline ForwardTrace frame_posteriors(const EventModel& model, const Matrix& features) {
  require(features.rows() == model.config().input_dim,
          "frame_posteriors: feature dim != model input dim");
  require(features.cols() >= 1, "frame_posteriors: empty utterance");
  require(model.w.size() == model.encoder.output_dim(), "frame_posteriors: dim(w) != encoder output");
  ForwardTrace tr;
  tr.encoder = encoder_forward(model.encoder, Sequence::from_features(features));
  const Sequence& h = tr.frames();
  tr.frame_posteriors.resize(h.length());
  for (std::size_t t = 0; t < h.length(); ++t) tr.frame_posteriors[t] = sigmoid(dot(model.w, h[t]));
  return tr;
}

/// a_t = p_t / (sum_s p_s + eps).
inline Vector attention_weights(std::span<const double> p) {
  require(!p.empty(), "attention_weights: empty posterior sequence");
  double total = 0.0;
  for (double v : p) total += v;
  const double denom = total + kAttentionEpsilon;
  Vector a(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) a[t] = p[t] / denom;
  return a;
}

/// Fills attention, embedding and p = sigmoid(w . sum_t a_t h_t) into `trace`.
inline double utterance_posterior(const EventModel& model, ForwardTrace& trace) {
  const Sequence& h = trace.frames();
  trace.attention = attention_weights(trace.frame_posteriors);
  trace.embedding.assign(h.dim(), 0.0);
  for (std::size_t t = 0; t < h.length(); ++t) {
    const double a = trace.attention[t];
    const auto ht = h[t];
    for (std::size_t i = 0; i < ht.size(); ++i) trace.embedding[i] += a * ht[i];
  }
  trace.posterior = sigmoid(dot(model.w, trace.embedding));
  return trace.posterior;
}

inline ForwardTrace forward(const EventModel& model, const Matrix& features) {
  ForwardTrace tr = frame_posteriors(model, features);
  utterance_posterior(model, tr);
  return tr;
}

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

inline double binary_cross_entropy(double p, bool y) {
  const double q = clamp_probability(p);
  return y ? -std::log(q) : -std::log1p(-q);
}

/// d(binary_cross_entropy)/d(logit); zero where the clamp is active.
inline double cross_entropy_logit_grad(double p, bool y) {
  if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) return 0.0;
  return p - (y ? 1.0 : 0.0);
}

/// Frames from `margin` before the onset to `margin` after the offset,
/// clipped to the utterance.
inline FrameSpan build_frame_window(const Utterance& utt, std::size_t margin) {
  require(utt.label, "build_frame_window: utterance has no event");
  const FrameSpan ev = utt.event_span();
  return FrameSpan{ev.first > margin ? ev.first - margin : 0,
                   std::min(utt.frames() - 1, ev.last + margin)};
}

inline double utterance_loss(double p, bool y) { return binary_cross_entropy(p, y); }

/// Mean cross-entropy of p_t against the frame labels over `window`; zero
/// for utterances without an event.
inline double frame_loss(const ForwardTrace& trace, const Utterance& utt, FrameSpan window) {
  if (!utt.label) return 0.0;
  const std::size_t T = trace.frame_posteriors.size();
  require(window.first <= window.last && window.last < T, "frame_loss: window outside [0, T)");
  require(utt.frame_labels.size() == T, "frame_loss: frame label count != T");
  double sum = 0.0;
  for (std::size_t t = window.first; t <= window.last; ++t)
    sum += binary_cross_entropy(trace.frame_posteriors[t], utt.frame_labels[t] != 0);
  return sum / static_cast<double>(window.size());
}

struct LossBreakdown {
  double total = 0.0;
  double utterance = 0.0;
  double frame = 0.0;
  ForwardTrace trace;
};

/// L = L_utt + alpha * L_frame.
inline LossBreakdown total_loss(const EventModel& model, const Utterance& utt, double alpha,
                                std::size_t margin = kDefaultFrameMargin) {
  require(alpha >= 0.0, "total_loss: alpha must be >= 0");
  LossBreakdown out;
  out.trace = forward(model, utt.features);
  out.utterance = utterance_loss(out.trace.posterior, utt.label);
  if (utt.label) out.frame = frame_loss(out.trace, utt, build_frame_window(utt, margin));
  out.total = out.utterance + alpha * out.frame;
  return out;
}

/// Accumulates d(total_loss)/d(params) * scale for one utterance into `grad`
/// and returns the loss.
inline double accumulate_gradient(const EventModel& model, const Utterance& utt, double alpha,
                                  std::size_t margin, double scale, EventModel& grad) {
  LossBreakdown loss = total_loss(model, utt, alpha, margin);
  const ForwardTrace& tr = loss.trace;
  const Sequence& h = tr.frames();
  const std::size_t T = h.length(), dim = h.dim();
  const auto& w = model.w;

  // Utterance branch: u = w . h_bar.
  const double d_u = scale * cross_entropy_logit_grad(tr.posterior, utt.label);
  for (std::size_t i = 0; i < dim; ++i) grad.w[i] += d_u * tr.embedding[i];

  Sequence d_frames(T, dim);
  Vector c(T);  // dL/da_t = d_u * (w . h_t)
  double c_bar = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    c[t] = d_u * dot(w, h[t]);
    c_bar += c[t] * tr.attention[t];
    const double a = tr.attention[t];
    auto df = d_frames[t];
    for (std::size_t i = 0; i < dim; ++i) df[i] = d_u * a * w[i];
  }

  double denom = kAttentionEpsilon;
  for (double p : tr.frame_posteriors) denom += p;

  std::optional<FrameSpan> window;
  if (utt.label && alpha != 0.0) window = build_frame_window(utt, margin);

  for (std::size_t t = 0; t < T; ++t) {
    const double p = tr.frame_posteriors[t];
    // Through a_t = p_t / sum_s p_s, then p_t = sigmoid(s_t).
    double d_s = (c[t] - c_bar) / denom * p * (1.0 - p);
    if (window && window->contains(t))
      d_s += scale * alpha * cross_entropy_logit_grad(p, utt.frame_labels[t] != 0) /
             static_cast<double>(window->size());
    if (d_s == 0.0) continue;
    const auto ht = h[t];
    auto df = d_frames[t];
    for (std::size_t i = 0; i < dim; ++i) {
      grad.w[i] += d_s * ht[i];
      df[i] += d_s * w[i];
    }
  }

  encoder_backward(model.encoder, tr.encoder, d_frames, grad.encoder);
  return loss.total;
}

struct BatchGradient {
  double loss = 0.0;  // mean total loss
  Vector gradient;    // flattened, same layout as flatten(model)
};

/// Exact gradient of the batch-mean total loss.
inline BatchGradient batch_gradient(const EventModel& model, std::span<const Utterance* const> batch,
                                    double alpha, std::size_t margin = kDefaultFrameMargin) {
  require(!batch.empty(), "gradients: empty batch");
  EventModel grad = model;
  set_zero(grad);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const Utterance* utt : batch) loss += accumulate_gradient(model, *utt, alpha, margin, scale, grad);
  return BatchGradient{loss * scale, flatten(grad)};
}

inline BatchGradient batch_gradient(const EventModel& model, std::span<const Utterance> batch,
                                    double alpha, std::size_t margin = kDefaultFrameMargin) {
  std::vector<const Utterance*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& u : batch) ptrs.push_back(&u);
  return batch_gradient(model, std::span<const Utterance* const>(ptrs), alpha, margin);
}

inline Vector gradients(const EventModel& model, std::span<const Utterance> batch, double alpha,
                        std::size_t margin = kDefaultFrameMargin) {
  return batch_gradient(model, batch, alpha, margin).gradient;
}

inline double batch_loss(const EventModel& model, std::span<const Utterance> batch, double alpha,
                         std::size_t margin = kDefaultFrameMargin) {
  require(!batch.empty(), "batch_loss: empty batch");
  double loss = 0.0;
  for (const auto& utt : batch) loss += total_loss(model, utt, alpha, margin).total;
  return loss / static_cast<double>(batch.size());
}

struct Detection {
  bool present = false;
  FrameSpan span;  // valid iff present

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Longest run of p_t > thres1 (earliest on ties) when p > thres0; argmax
/// frame when no frame exceeds thres1.
inline Detection decide(double posterior, std::span<const double> frame_posteriors,
                        double thres0, double thres1) {
  if (posterior <= thres0) return {};
  require(!frame_posteriors.empty(), "decide: empty frame posteriors");
  std::optional<FrameSpan> best;
  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t t = 0; t <= frame_posteriors.size(); ++t) {
    const bool on = t < frame_posteriors.size() && frame_posteriors[t] > thres1;
    if (on && !in_run) {
      run_start = t;
      in_run = true;
    } else if (!on && in_run) {
      const FrameSpan run{run_start, t - 1};
      if (!best || run.size() > best->size()) best = run;
      in_run = false;
    }
  }
  if (!best) {
    const auto it = std::max_element(frame_posteriors.begin(), frame_posteriors.end());
    const auto t = static_cast<std::size_t>(it - frame_posteriors.begin());
    best = FrameSpan{t, t};
  }
  return Detection{true, *best};
}

inline Detection infer(const EventModel& model, const Matrix& features, double thres0 = 0.5,
                       double thres1 = 0.5) {
  require(thres0 > 0.0 && thres0 < 1.0 && thres1 > 0.0 && thres1 < 1.0,
          "infer: thresholds must lie in (0, 1)");
  const ForwardTrace tr = forward(model, features);
  return decide(tr.posterior, tr.frame_posteriors, thres0, thres1);
}

}  // namespace rsed
