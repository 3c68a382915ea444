// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsed/detector.hpp"
#include "rsed/metrics.hpp"
#include "rsed/random.hpp"

namespace rsed::fixtures {

/// Every parameter (biases included) uniform in [-scale, scale].
inline EventModel random_model(const EncoderConfig& config, std::uint64_t seed, double scale = 0.5) {
  EventModel m = EventModel::zeros(config);
  Rng rng(seed);
  for_each_block(m, [&](std::span<double> block) {
    for (double& v : block) v = rng.uniform(-scale, scale);
  });
  return m;
}

inline Matrix random_features(std::size_t d, std::size_t T, Rng& rng) {
  Matrix x(d, T);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

inline Utterance random_utterance(std::size_t d, std::size_t T, bool positive, Rng& rng,
                                  const std::string& id = "u") {
  Matrix x = random_features(d, T, rng);
  if (!positive) return make_negative(id, std::move(x));
  const std::size_t a = rng.below(T), b = rng.below(T);
  return make_positive(id, std::move(x), FrameSpan{std::min(a, b), std::max(a, b)});
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t parameters = 0;
  double loss = 0.0;
  Vector analytic, numeric;
};

/// Central differences of batch_loss against batch_gradient, relative error
/// |a - n| / max(|a|, |n|, floor).
inline GradCheckResult finite_difference_check(const EventModel& model, std::span<const Utterance> batch,
                                               double alpha, std::size_t margin, double step = 1e-5,
                                               double floor = 1e-8) {
  const Vector analytic = batch_gradient(model, batch, alpha, margin).gradient;
  Vector theta = flatten(model);
  EventModel probe = model;
  GradCheckResult out;
  out.parameters = theta.size();
  out.loss = batch_loss(model, batch, alpha, margin);
  out.analytic = analytic;
  out.numeric.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    unflatten(theta, probe);
    const double up = batch_loss(probe, batch, alpha, margin);
    theta[i] = saved - step;
    unflatten(theta, probe);
    const double down = batch_loss(probe, batch, alpha, margin);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    out.numeric[i] = numeric;
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > out.max_relative_error) {
      out.max_relative_error = rel;
      out.worst_index = i;
      out.worst_analytic = analytic[i];
      out.worst_numeric = numeric;
    }
  }
  return out;
}

// Counts by set sizes rather than by case analysis:
// TP = matched pairs, D = N - TP, I = (system events) - TP.
inline MetricCounts brute_force_counts(const std::vector<AnnotationRecord>& ref,
                                       const std::vector<AnnotationRecord>& sys, double collar) {
  std::size_t n = 0, s = 0, tp = 0;
  for (const auto& r : ref) {
    n += r.event.has_value();
    for (const auto& d : sys) {
      if (d.id != r.id) continue;
      s += d.event.has_value();
      if (r.event && d.event) {
        const double lo = r.event->onset - collar, hi = r.event->onset + collar;
        tp += d.event->onset >= lo && d.event->onset <= hi;
      }
    }
  }
  return MetricCounts{tp, s - tp, n - tp, n};
}

/// One random single-event instance set: `n` ids, each with at most one
/// reference and one system event, system order shuffled.
inline void random_annotation_instance(Rng& rng, std::size_t n, std::vector<AnnotationRecord>& ref,
                                       std::vector<AnnotationRecord>& sys) {
  ref.clear();
  sys.clear();
  auto ev = [](double onset) { return EventAnnotation{onset, onset + 0.5}; };
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "r" + std::to_string(i);
    std::optional<EventAnnotation> r, s;
    if (rng.uniform() < 0.6) r = ev(rng.uniform(0.0, 3.0));
    if (rng.uniform() < 0.6)
      s = ev(r && rng.uniform() < 0.7 ? std::max(0.0, r->onset + rng.uniform(-1, 1)) : rng.uniform(0.0, 3.0));
    ref.push_back({id, r});
    sys.push_back({id, s});
  }
  rng.shuffle(sys);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rsed_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rsed::fixtures
