// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsed/errors.hpp"
#include "rsed/numerics.hpp"

namespace rsed {

/// Inclusive, 0-based frame interval.
struct FrameSpan {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  bool contains(std::size_t t) const { return t >= first && t <= last; }

  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

struct Utterance {
  std::string id;
  Matrix features;                         // d x T
  bool label = false;                      // event present
  std::vector<std::uint8_t> frame_labels;  // length T iff label, else empty

  std::size_t frames() const { return features.cols(); }
  std::size_t feature_dim() const { return features.rows(); }

  /// The single labelled run. Requires label == true.
  FrameSpan event_span() const {
    require(label, "event_span: utterance has no event");
    std::optional<FrameSpan> span;
    for (std::size_t t = 0; t < frame_labels.size(); ++t) {
      if (!frame_labels[t]) continue;
      if (!span) span = FrameSpan{t, t};
      else span->last = t;
    }
    require(span.has_value(), "event_span: positive utterance without labelled frames");
    return *span;
  }

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// Checks the label invariants: frame labels present iff y = 1, binary, one contiguous run.
inline void validate(const Utterance& u) {
  if (!u.label) {
    if (!u.frame_labels.empty())
      throw ConsistencyError("utterance " + u.id + ": negative utterance carries frame labels");
    return;
  }
  if (u.frame_labels.size() != u.frames())
    throw ConsistencyError("utterance " + u.id + ": frame label count != frame count");
  std::size_t runs = 0;
  for (std::size_t t = 0; t < u.frame_labels.size(); ++t) {
    const auto v = u.frame_labels[t];
    if (v > 1) throw ConsistencyError("utterance " + u.id + ": frame label not in {0,1}");
    if (v == 1 && (t == 0 || u.frame_labels[t - 1] == 0)) ++runs;
  }
  if (runs != 1)
    throw ConsistencyError("utterance " + u.id + ": expected exactly one labelled run, found " +
                           std::to_string(runs));
}

inline Utterance make_positive(std::string id, Matrix features, FrameSpan event) {
  require(event.first <= event.last && event.last < features.cols(),
          "make_positive: event span outside utterance");
  std::vector<std::uint8_t> labels(features.cols(), 0);
  for (std::size_t t = event.first; t <= event.last; ++t) labels[t] = 1;
  return Utterance{std::move(id), std::move(features), true, std::move(labels)};
}

inline Utterance make_negative(std::string id, Matrix features) {
  return Utterance{std::move(id), std::move(features), false, {}};
}

}  // namespace rsed
