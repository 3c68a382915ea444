// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rsed/detector.hpp"
#include "rsed/errors.hpp"

namespace rsed {

inline constexpr double kDefaultCollarSeconds = 0.5;
inline constexpr double kDefaultFrameShiftSeconds = 0.023;

struct EventAnnotation {
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds

  friend bool operator==(const EventAnnotation&, const EventAnnotation&) = default;
};

/// Event-based tallies. With one event class substitutions cannot occur, so
/// false positives are insertions and false negatives are deletions.
struct MetricCounts {
  std::size_t true_positives = 0;
  std::size_t insertions = 0;  // FP
  std::size_t deletions = 0;   // FN
  std::size_t references = 0;  // N

  MetricCounts& operator+=(const MetricCounts& o) {
    true_positives += o.true_positives;
    insertions += o.insertions;
    deletions += o.deletions;
    references += o.references;
    return *this;
  }

  friend bool operator==(const MetricCounts&, const MetricCounts&) = default;
};

/// Onset-only matching of at most one reference and one system event.
inline MetricCounts match_utterance(const std::optional<EventAnnotation>& reference,
                                    const std::optional<EventAnnotation>& system,
                                    double collar = kDefaultCollarSeconds) {
  require(collar > 0.0, "match_utterance: collar must be positive");
  MetricCounts c;
  if (reference) c.references = 1;
  if (reference && system) {
    if (std::abs(system->onset - reference->onset) <= collar) {
      c.true_positives = 1;
    } else {
      c.deletions = 1;
      c.insertions = 1;
    }
  } else if (reference) {
    c.deletions = 1;
  } else if (system) {
    c.insertions = 1;
  }
  return c;
}

/// (D + I) / N.
inline double error_rate(const MetricCounts& c) {
  if (c.references == 0) throw MetricError("error rate undefined: no reference events");
  return static_cast<double>(c.deletions + c.insertions) / static_cast<double>(c.references);
}

/// 100 * 2TP / (2TP + FP + FN).
inline double f1_score(const MetricCounts& c) {
  const std::size_t denom = 2 * c.true_positives + c.insertions + c.deletions;
  if (denom == 0) throw MetricError("F1 undefined: no reference or system events");
  return 100.0 * static_cast<double>(2 * c.true_positives) / static_cast<double>(denom);
}

/// One utterance's reference or system output.
struct AnnotationRecord {
  std::string id;
  std::optional<EventAnnotation> event;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// Frame-indexed detection to seconds: onset = first * shift, offset = (last + 1) * shift.
inline std::optional<EventAnnotation> to_seconds(const Detection& d, double frame_shift) {
  if (!d.present) return std::nullopt;
  return EventAnnotation{static_cast<double>(d.span.first) * frame_shift,
                         static_cast<double>(d.span.last + 1) * frame_shift};
}

inline std::optional<EventAnnotation> reference_annotation(const Utterance& u, double frame_shift) {
  if (!u.label) return std::nullopt;
  return to_seconds(Detection{true, u.event_span()}, frame_shift);
}

struct Evaluation {
  double error_rate = 0.0;
  double f1 = 0.0;
  MetricCounts counts;
};

/// Micro-averaged ER/F1 over utterances aligned by id.
inline Evaluation evaluate_dataset(const std::vector<AnnotationRecord>& references,
                                   const std::vector<AnnotationRecord>& detections,
                                   double collar = kDefaultCollarSeconds) {
  std::map<std::string, const AnnotationRecord*> by_id;
  for (const auto& d : detections) {
    if (!by_id.emplace(d.id, &d).second)
      throw ConsistencyError("duplicate detection id: " + d.id);
  }
  std::vector<std::string> missing, extra;
  std::map<std::string, bool> seen;
  for (const auto& r : references) {
    if (!seen.emplace(r.id, true).second) throw ConsistencyError("duplicate reference id: " + r.id);
    if (!by_id.count(r.id)) missing.push_back(r.id);
  }
  for (const auto& d : detections)
    if (!seen.count(d.id)) extra.push_back(d.id);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "reference/detection id mismatch;";
    if (!missing.empty()) {
      msg += " missing detections:";
      for (const auto& id : missing) msg += " " + id;
      msg += ";";
    }
    if (!extra.empty()) {
      msg += " unknown detection ids:";
      for (const auto& id : extra) msg += " " + id;
    }
    throw ConsistencyError(msg);
  }
  Evaluation ev;
  for (const auto& r : references) ev.counts += match_utterance(r.event, by_id.at(r.id)->event, collar);
  ev.error_rate = error_rate(ev.counts);
  ev.f1 = f1_score(ev.counts);
  return ev;
}

/// Scores frame-indexed detections against labelled utterances.
inline Evaluation evaluate_dataset(const std::vector<Utterance>& references,
                                   const std::vector<Detection>& detections, double frame_shift,
                                   double collar = kDefaultCollarSeconds) {
  if (references.size() != detections.size())
    throw ConsistencyError("evaluate_dataset: reference/detection count mismatch");
  std::vector<AnnotationRecord> ref, sys;
  ref.reserve(references.size());
  sys.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    ref.push_back({references[i].id, reference_annotation(references[i], frame_shift)});
    sys.push_back({references[i].id, to_seconds(detections[i], frame_shift)});
  }
  return evaluate_dataset(ref, sys, collar);
}

// Annotation files are tab-separated text with a header row:
//
//   id<TAB>label<TAB>onset<TAB>offset
//
// label is 0 or 1; onset/offset are seconds with six decimals, and are empty
// when label is 0.

inline constexpr const char* kAnnotationHeader = "id\tlabel\tonset\toffset";

inline std::string format_annotations(const std::vector<AnnotationRecord>& records) {
  std::string out = std::string(kAnnotationHeader) + "\n";
  char buf[96];
  for (const auto& r : records) {
    if (r.id.find_first_of("\t\n") != std::string::npos)
      throw InputError("annotation id contains tab or newline: " + r.id);
    out += r.id;
    if (r.event) {
      std::snprintf(buf, sizeof buf, "\t1\t%.6f\t%.6f\n", r.event->onset, r.event->offset);
      out += buf;
    } else {
      out += "\t0\t\t\n";
    }
  }
  return out;
}

inline std::vector<AnnotationRecord> parse_annotations(std::istream& in,
                                                       const std::string& source = "<stream>") {
  std::vector<AnnotationRecord> records;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(in, line)) {
    lineno = 1;
    fail("missing header");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAnnotationHeader) fail("unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) fail("expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    AnnotationRecord r{fields[0], std::nullopt};
    if (r.id.empty()) fail("empty id");
    if (fields[1] == "1") {
      try {
        std::size_t used = 0;
        const double on = std::stod(fields[2], &used);
        if (used != fields[2].size()) fail("bad onset");
        const double off = std::stod(fields[3], &used);
        if (used != fields[3].size()) fail("bad offset");
        if (!(on >= 0.0) || !(off >= on)) fail("require 0 <= onset <= offset");
        r.event = EventAnnotation{on, off};
      } catch (const std::logic_error&) {
        fail("non-numeric onset/offset");
      }
    } else if (fields[1] != "0") {
      fail("label must be 0 or 1");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation file: " + path);
  return parse_annotations(in, path);
}

inline std::vector<AnnotationRecord> reference_annotations(const std::vector<Utterance>& utts,
                                                           double frame_shift) {
  std::vector<AnnotationRecord> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back({u.id, reference_annotation(u, frame_shift)});
  return out;
}

}  // namespace rsed
