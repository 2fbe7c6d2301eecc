#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelar/common.hpp"
#include "skelar/topology.hpp"

namespace skelar {

// Per-frame 3D joint coordinates, stored row-major as [v, 3, t].
struct SkeletonSequence {
  std::size_t v = 0;
  std::size_t t = 0;
  double rate_hz = 30.0;
  std::vector<double> coords;  // v * 3 * t
  std::string subject_id;
  std::string activity_label;

  double& at(std::size_t joint, std::size_t axis, std::size_t frame) {
    return coords[(joint * 3 + axis) * t + frame];
  }
  double at(std::size_t joint, std::size_t axis, std::size_t frame) const {
    return coords[(joint * 3 + axis) * t + frame];
  }

  static SkeletonSequence zeros(std::size_t v, std::size_t t, double rate_hz = 30.0) {
    SkeletonSequence s;
    s.v = v;
    s.t = t;
    s.rate_hz = rate_hz;
    s.coords.assign(v * 3 * t, 0.0);
    return s;
  }
};

// A 5-second chunk: exactly 150 frames at 30 Hz.
struct WindowedSample {
  static constexpr std::size_t kFrames = 150;
  std::vector<double> coords;  // 21 * 3 * 150
  std::string source;
  std::size_t frame_offset = 0;
  std::string subject_id;
  std::string activity_label;

  double at(std::size_t joint, std::size_t axis, std::size_t frame) const {
    return coords[(joint * 3 + axis) * kFrames + frame];
  }
};

// ---------------------------------------------------------------------------
// NTU-style text skeleton files
// ---------------------------------------------------------------------------

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) {
      throw parse_error(std::string("unexpected end of file, expected ") + what, line_no_);
    }
    ++line_no_;
    return line;
  }

  std::size_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline long parse_count(const std::string& line, const char* what, std::size_t line_no) {
  std::istringstream ss(line);
  long v = 0;
  if (!(ss >> v) || v < 0) {
    throw parse_error(std::string("expected ") + what + ", got '" + line + "'", line_no);
  }
  return v;
}

}  // namespace detail

// Parses every tracked body from an NTU-style text file:
//   frame count; per frame: body count; per body: one info line,
//   joint count, then one line per joint with x y z and optional
//   trailing columns (the last column, when present, is treated as
//   a tracking confidence and used for body selection).
inline std::vector<SkeletonSequence> parse_ntu_bodies(std::istream& in,
                                                      std::vector<double>* mean_confidence = nullptr) {
  detail::LineReader reader(in);
  const long frames = detail::parse_count(reader.next("frame count"), "frame count", 1);
  std::vector<SkeletonSequence> bodies;
  std::vector<double> conf_sum;
  std::vector<std::size_t> conf_n;
  // First pass collects per-frame joint data; body slots are positional.
  std::vector<std::vector<std::vector<std::array<double, 3>>>> data;  // [frame][body][joint]
  std::size_t joints_per_body = 0;
  for (long f = 0; f < frames; ++f) {
    const std::string body_count_line = reader.next("body count");
    const long nbodies = detail::parse_count(body_count_line, "body count", reader.line_no());
    data.emplace_back();
    for (long b = 0; b < nbodies; ++b) {
      reader.next("body info line");
      const std::string joint_count_line = reader.next("joint count");
      const long njoints =
          detail::parse_count(joint_count_line, "joint count", reader.line_no());
      if (joints_per_body == 0) joints_per_body = static_cast<std::size_t>(njoints);
      if (static_cast<std::size_t>(njoints) != joints_per_body) {
        throw parse_error("inconsistent joint count " + std::to_string(njoints) + " vs " +
                              std::to_string(joints_per_body),
                          reader.line_no());
      }
      std::vector<std::array<double, 3>> joints(static_cast<std::size_t>(njoints));
      if (conf_sum.size() <= static_cast<std::size_t>(b)) {
        conf_sum.resize(static_cast<std::size_t>(b) + 1, 0.0);
        conf_n.resize(static_cast<std::size_t>(b) + 1, 0);
      }
      for (long j = 0; j < njoints; ++j) {
        const std::string line = reader.next("joint coordinates");
        std::istringstream ss(line);
        std::vector<double> cols;
        double val;
        while (ss >> val) cols.push_back(val);
        if (cols.size() < 3) {
          throw parse_error("joint line needs at least x y z, got '" + line + "'",
                            reader.line_no());
        }
        joints[static_cast<std::size_t>(j)] = {cols[0], cols[1], cols[2]};
        if (cols.size() >= 12) {
          conf_sum[static_cast<std::size_t>(b)] += cols.back();
          ++conf_n[static_cast<std::size_t>(b)];
        }
      }
      data.back().push_back(std::move(joints));
    }
  }
  std::size_t max_bodies = 0;
  for (const auto& fr : data) max_bodies = std::max(max_bodies, fr.size());
  if (max_bodies == 0) throw data_error("skeleton file contains no tracked bodies");
  for (std::size_t b = 0; b < max_bodies; ++b) {
    SkeletonSequence seq = SkeletonSequence::zeros(joints_per_body, static_cast<std::size_t>(frames));
    for (std::size_t f = 0; f < data.size(); ++f) {
      if (b >= data[f].size()) continue;  // body absent in this frame: stays zero
      for (std::size_t j = 0; j < joints_per_body; ++j)
        for (std::size_t a = 0; a < 3; ++a) seq.at(j, a, f) = data[f][b][j][a];
    }
    bodies.push_back(std::move(seq));
    if (mean_confidence) {
      mean_confidence->push_back(conf_n[b] > 0 ? conf_sum[b] / static_cast<double>(conf_n[b])
                                               : 0.0);
    }
  }
  return bodies;
}

// Returns true if every joint of the frame is exactly at the origin,
// which is how NTU files encode lost tracking.
inline bool frame_is_missing(const SkeletonSequence& seq, std::size_t frame) {
  for (std::size_t j = 0; j < seq.v; ++j)
    for (std::size_t a = 0; a < 3; ++a)
      if (seq.at(j, a, frame) != 0.0) return false;
  return true;
}

// Linearly interpolates missing (all-zero) frames from their neighbors.
// Rejects sequences with more than 20% missing frames.
inline void repair_missing_frames(SkeletonSequence& seq) {
  std::vector<std::size_t> missing;
  for (std::size_t f = 0; f < seq.t; ++f)
    if (frame_is_missing(seq, f)) missing.push_back(f);
  if (missing.empty()) return;
  if (missing.size() * 5 > seq.t) {
    throw data_error("sequence rejected: " + std::to_string(missing.size()) + " of " +
                     std::to_string(seq.t) + " frames missing (>20%)");
  }
  std::vector<bool> is_missing(seq.t, false);
  for (std::size_t f : missing) is_missing[f] = true;
  for (std::size_t f : missing) {
    std::size_t lo = f, hi = f;
    while (lo > 0 && is_missing[lo]) --lo;
    while (hi < seq.t - 1 && is_missing[hi]) ++hi;
    const bool lo_ok = !is_missing[lo];
    const bool hi_ok = !is_missing[hi];
    for (std::size_t j = 0; j < seq.v; ++j)
      for (std::size_t a = 0; a < 3; ++a) {
        double val;
        if (lo_ok && hi_ok) {
          const double w = static_cast<double>(f - lo) / static_cast<double>(hi - lo);
          val = (1.0 - w) * seq.at(j, a, lo) + w * seq.at(j, a, hi);
        } else if (lo_ok) {
          val = seq.at(j, a, lo);
        } else if (hi_ok) {
          val = seq.at(j, a, hi);
        } else {
          throw data_error("sequence rejected: no tracked frames at all");
        }
        seq.at(j, a, f) = val;
      }
  }
}

// Parses an NTU file and keeps the single best body (highest mean tracking
// confidence, first body on ties or when untracked), with missing frames
// repaired.
inline SkeletonSequence parse_ntu_skeleton(std::istream& in) {
  std::vector<double> confidence;
  std::vector<SkeletonSequence> bodies = parse_ntu_bodies(in, &confidence);
  std::size_t best = 0;
  for (std::size_t b = 1; b < bodies.size(); ++b)
    if (confidence[b] > confidence[best]) best = b;
  SkeletonSequence seq = std::move(bodies[best]);
  repair_missing_frames(seq);
  return seq;
}

inline void serialize_ntu_skeleton(const SkeletonSequence& seq, std::ostream& out) {
  out << seq.t << "\n";
  char buf[96];
  for (std::size_t f = 0; f < seq.t; ++f) {
    out << 1 << "\n";
    out << "0 0 0 0 0 0 0 0 0 0\n";
    out << seq.v << "\n";
    for (std::size_t j = 0; j < seq.v; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", seq.at(j, 0, f), seq.at(j, 1, f),
                    seq.at(j, 2, f));
      out << buf << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Canonical JSON exchange format
// ---------------------------------------------------------------------------

// {rate_hz, joints: [names], frames: [t][v][3]}; also the ingestion path for
// externally generated skeletons (e.g. text-to-motion output).
inline SkeletonSequence read_skeleton_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("invalid skeleton JSON: ") + e.what());
  }
  if (!doc.contains("rate_hz") || !doc.contains("joints") || !doc.contains("frames")) {
    throw data_error("skeleton JSON must contain rate_hz, joints, frames");
  }
  const auto& joints = doc["joints"];
  const auto& frames = doc["frames"];
  SkeletonSequence seq = SkeletonSequence::zeros(joints.size(), frames.size(),
                                                 doc["rate_hz"].get<double>());
  if (doc.contains("subject_id")) seq.subject_id = doc["subject_id"].get<std::string>();
  if (doc.contains("activity_label")) seq.activity_label = doc["activity_label"].get<std::string>();
  for (std::size_t f = 0; f < seq.t; ++f) {
    if (frames[f].size() != seq.v) {
      throw data_error("skeleton JSON frame " + std::to_string(f) + " has " +
                       std::to_string(frames[f].size()) + " joints, expected " +
                       std::to_string(seq.v));
    }
    for (std::size_t j = 0; j < seq.v; ++j) {
      if (frames[f][j].size() != 3) throw data_error("skeleton JSON joint must be [x,y,z]");
      for (std::size_t a = 0; a < 3; ++a) seq.at(j, a, f) = frames[f][j][a].get<double>();
    }
  }
  for (double c : seq.coords)
    if (std::isnan(c)) throw data_error("skeleton JSON contains NaN coordinates");
  return seq;
}

inline void write_skeleton_json(const SkeletonSequence& seq,
                                const std::vector<std::string>& joint_names, std::ostream& out) {
  if (joint_names.size() != seq.v) throw contract_error("joint name count mismatch");
  nlohmann::json doc;
  doc["rate_hz"] = seq.rate_hz;
  doc["joints"] = joint_names;
  if (!seq.subject_id.empty()) doc["subject_id"] = seq.subject_id;
  if (!seq.activity_label.empty()) doc["activity_label"] = seq.activity_label;
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < seq.t; ++f) {
    nlohmann::json frame = nlohmann::json::array();
    for (std::size_t j = 0; j < seq.v; ++j)
      frame.push_back({seq.at(j, 0, f), seq.at(j, 1, f), seq.at(j, 2, f)});
    frames.push_back(std::move(frame));
  }
  doc["frames"] = std::move(frames);
  out << doc.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Joint remapping
// ---------------------------------------------------------------------------

// NTU order: the canonical 21 joints are NTU joints 0..20; joints 21..24 are
// the two hand tips and two thumbs, dropped for their low sensing accuracy.
inline SkeletonSequence remap_ntu25_to_21(const SkeletonSequence& in) {
  if (in.v == 21) return in;  // already canonical; remap is idempotent
  if (in.v != 25) {
    throw contract_error("remap_ntu25_to_21: expected 25 joints, got " + std::to_string(in.v));
  }
  SkeletonSequence out = SkeletonSequence::zeros(21, in.t, in.rate_hz);
  out.subject_id = in.subject_id;
  out.activity_label = in.activity_label;
  for (std::size_t j = 0; j < 21; ++j)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t f = 0; f < in.t; ++f) out.at(j, a, f) = in.at(j, a, f);
  return out;
}

// HumanML3D / SMPL order:
//  0 pelvis, 1 l_hip, 2 r_hip, 3 spine1, 4 l_knee, 5 r_knee, 6 spine2,
//  7 l_ankle, 8 r_ankle, 9 spine3, 10 l_foot, 11 r_foot, 12 neck,
//  13 l_collar, 14 r_collar, 15 head, 16 l_shoulder, 17 r_shoulder,
//  18 l_elbow, 19 r_elbow, 20 l_wrist, 21 r_wrist.
// The three spine joints are reduced to the two edge midpoints; collars are
// dropped; hand joints are extrapolated along the forearm so the canonical
// wrist keeps two incident bones.
inline SkeletonSequence remap_humanml22_to_21(const SkeletonSequence& in) {
  if (in.v == 21) return in;  // already canonical; remap is idempotent
  if (in.v != 22) {
    throw contract_error("remap_humanml22_to_21: expected 22 joints, got " +
                         std::to_string(in.v));
  }
  SkeletonSequence out = SkeletonSequence::zeros(21, in.t, in.rate_hz);
  out.subject_id = in.subject_id;
  out.activity_label = in.activity_label;
  // canonical index -> humanml index for direct copies
  const std::pair<std::size_t, std::size_t> direct[] = {
      {0, 0},  {2, 12}, {3, 15}, {4, 16},  {5, 18},  {6, 20},  {8, 17},  {9, 19},
      {10, 21}, {12, 1}, {13, 4}, {14, 7},  {15, 10}, {16, 2},  {17, 5},  {18, 8},
      {19, 11}};
  for (std::size_t f = 0; f < in.t; ++f) {
    for (const auto& [dst, src] : direct)
      for (std::size_t a = 0; a < 3; ++a) out.at(dst, a, f) = in.at(src, a, f);
    for (std::size_t a = 0; a < 3; ++a) {
      // spine_mid = midpoint(spine1, spine2); spine_shoulder = midpoint(spine2, spine3)
      out.at(1, a, f) = 0.5 * (in.at(3, a, f) + in.at(6, a, f));
      out.at(20, a, f) = 0.5 * (in.at(6, a, f) + in.at(9, a, f));
      // hands extrapolated along the forearm: wrist + 0.4 * (wrist - elbow)
      out.at(7, a, f) = in.at(20, a, f) + 0.4 * (in.at(20, a, f) - in.at(18, a, f));
      out.at(11, a, f) = in.at(21, a, f) + 0.4 * (in.at(21, a, f) - in.at(19, a, f));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling and windowing
// ---------------------------------------------------------------------------

// Per-coordinate linear interpolation onto a uniform grid spanning the
// original duration.
inline SkeletonSequence resample(const SkeletonSequence& in, double target_hz = 30.0) {
  if (in.rate_hz <= 0.0) throw contract_error("resample: rate_hz must be positive");
  if (in.t < 2) throw data_error("resample: sequence too short (t < 2)");
  const double duration = static_cast<double>(in.t - 1) / in.rate_hz;
  const std::size_t t_new = static_cast<std::size_t>(std::floor(duration * target_hz)) + 1;
  SkeletonSequence out = SkeletonSequence::zeros(in.v, t_new, target_hz);
  out.subject_id = in.subject_id;
  out.activity_label = in.activity_label;
  for (std::size_t f = 0; f < t_new; ++f) {
    const double pos = static_cast<double>(f) * in.rate_hz / target_hz;
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= in.t - 1) lo = in.t - 2;
    const double w = pos - static_cast<double>(lo);
    for (std::size_t j = 0; j < in.v; ++j)
      for (std::size_t a = 0; a < 3; ++a) {
        out.at(j, a, f) = w == 0.0 ? in.at(j, a, lo)
                                   : (1.0 - w) * in.at(j, a, lo) + w * in.at(j, a, lo + 1);
      }
  }
  return out;
}

// Non-overlapping 150-frame windows; the trailing remainder is dropped.
inline std::vector<WindowedSample> window(const SkeletonSequence& seq,
                                          const std::string& source = "") {
  if (seq.v != SkeletonTopology::kNumJoints) {
    throw contract_error("window: expected " + std::to_string(SkeletonTopology::kNumJoints) +
                         " joints, got " + std::to_string(seq.v));
  }
  const std::size_t n = seq.t / WindowedSample::kFrames;
  std::vector<WindowedSample> out;
  out.reserve(n);
  for (std::size_t w = 0; w < n; ++w) {
    WindowedSample sample;
    sample.coords.resize(seq.v * 3 * WindowedSample::kFrames);
    sample.source = source;
    sample.frame_offset = w * WindowedSample::kFrames;
    sample.subject_id = seq.subject_id;
    sample.activity_label = seq.activity_label;
    for (std::size_t j = 0; j < seq.v; ++j)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t f = 0; f < WindowedSample::kFrames; ++f)
          sample.coords[(j * 3 + a) * WindowedSample::kFrames + f] =
              seq.at(j, a, sample.frame_offset + f);
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace skelar
