#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "skelar/angles.hpp"
#include "skelar/rng.hpp"
#include "skelar/skeleton.hpp"
#include "skelar/topology.hpp"

namespace skelar {

// ---------------------------------------------------------------------------
// Synthetic skeleton corpus: parameterized kinematic generators
// ---------------------------------------------------------------------------

namespace synth_detail {

// Rest pose for the canonical 21-joint skeleton (meters, y up).
inline const std::array<std::array<double, 3>, 21>& rest_pose() {
  static const std::array<std::array<double, 3>, 21> pose = {{
      {0.0, 0.0, 0.0},       // spine_base
      {0.01, 0.25, 0.02},    // spine_mid
      {0.01, 0.62, 0.03},    // neck
      {0.02, 0.75, 0.02},    // head
      {-0.2, 0.5, 0.02},     // shoulder_left
      {-0.25, 0.22, 0.05},   // elbow_left
      {-0.28, -0.03, 0.08},  // wrist_left
      {-0.3, -0.12, 0.1},    // hand_left
      {0.2, 0.5, 0.02},      // shoulder_right
      {0.25, 0.22, 0.05},    // elbow_right
      {0.28, -0.03, 0.08},   // wrist_right
      {0.3, -0.12, 0.1},     // hand_right
      {-0.1, -0.05, 0.01},   // hip_left
      {-0.12, -0.45, 0.06},  // knee_left
      {-0.13, -0.85, 0.02},  // ankle_left
      {-0.14, -0.9, 0.14},   // foot_left
      {0.1, -0.05, 0.01},    // hip_right
      {0.12, -0.45, 0.06},   // knee_right
      {0.13, -0.85, 0.02},   // ankle_right
      {0.14, -0.9, 0.14},    // foot_right
      {0.02, 0.5, 0.01},     // spine_shoulder
  }};
  return pose;
}

// Joints in parent-before-child order for forward kinematics.
inline const std::vector<std::size_t>& fk_order() {
  static const std::vector<std::size_t> order = [] {
    const SkeletonTopology& topo = topology();
    std::vector<std::size_t> out{0};
    std::vector<bool> placed(21, false);
    placed[0] = true;
    while (out.size() < 21) {
      for (std::size_t j = 0; j < 21; ++j) {
        if (placed[j] || !placed[topo.parent(j)]) continue;
        out.push_back(j);
        placed[j] = true;
      }
    }
    return out;
  }();
  return order;
}

}  // namespace synth_detail

// The shipped activity generators, in a fixed order.
inline std::vector<std::string> synth_activity_names(std::size_t n) {
  const std::vector<std::string> all = {"arm_raise", "walk", "squat", "still"};
  if (n < 2 || n > all.size()) {
    throw contract_error("synth corpus supports 2.." + std::to_string(all.size()) +
                         " activities, got " + std::to_string(n));
  }
  return {all.begin(), all.begin() + static_cast<long>(n)};
}

// One frame of an activity: per-joint rotation angles about the z axis
// (applied to the joint's whole subtree) plus a root offset.
struct SynthPose {
  std::array<double, 21> joint_angle{};
  std::array<double, 3> root_offset{};
};

inline SynthPose synth_pose(const std::string& activity, double time_s, double phase) {
  SynthPose pose{};
  const double two_pi = 2.0 * kPi;
  if (activity == "still") {
    // standing with folded arms: a static posture distinct from the mean
    // pose of the periodic activities, plus a slight postural sway
    pose.joint_angle[1] = 0.02 * std::sin(two_pi * 0.2 * time_s + phase);
    pose.joint_angle[5] = 1.2;
    pose.joint_angle[9] = -1.2;
  } else if (activity == "arm_raise") {
    const double a = (kPi / 3.0) * (0.5 + 0.5 * std::sin(two_pi * 0.5 * time_s + phase));
    pose.joint_angle[4] = -a;
    pose.joint_angle[8] = a;
    pose.joint_angle[5] = -0.3 * a;
    pose.joint_angle[9] = 0.3 * a;
  } else if (activity == "walk") {
    const double f = 1.2;
    const double s = std::sin(two_pi * f * time_s + phase);
    pose.joint_angle[12] = 0.4 * s;
    pose.joint_angle[16] = -0.4 * s;
    pose.joint_angle[13] = 0.3 * (0.5 + 0.5 * std::sin(two_pi * f * time_s + phase));
    pose.joint_angle[17] = 0.3 * (0.5 + 0.5 * std::sin(two_pi * f * time_s + phase + kPi));
    pose.joint_angle[4] = -0.3 * s;
    pose.joint_angle[8] = 0.3 * s;
    pose.root_offset[1] = 0.03 * std::sin(2.0 * two_pi * f * time_s + phase);
  } else if (activity == "squat") {
    const double q = 0.5 + 0.5 * std::sin(two_pi * 0.4 * time_s + phase);
    pose.joint_angle[12] = 0.5 * q;
    pose.joint_angle[16] = -0.5 * q;
    pose.joint_angle[13] = -0.9 * q;
    pose.joint_angle[17] = 0.9 * q;
    pose.joint_angle[1] = 0.2 * q;
    pose.root_offset[1] = -0.25 * q;
  } else {
    throw contract_error("unknown synthetic activity: " + activity);
  }
  return pose;
}

// Forward kinematics: bones from the rest pose, scaled uniformly per
// subject, with each joint's accumulated z-rotation applied to its subtree.
inline void synth_frame(const std::string& activity, double time_s, double phase, double scale,
                        double* out /* [21*3] */) {
  const SynthPose pose = synth_pose(activity, time_s, phase);
  const auto& rest = synth_detail::rest_pose();
  const SkeletonTopology& topo = topology();
  std::array<double, 21> accum{};
  std::array<std::array<double, 3>, 21> pos{};
  for (std::size_t j : synth_detail::fk_order()) {
    if (j == 0) {
      accum[0] = pose.joint_angle[0];
      for (std::size_t a = 0; a < 3; ++a) pos[0][a] = scale * pose.root_offset[a];
      continue;
    }
    const std::size_t p = topo.parent(j);
    accum[j] = accum[p] + pose.joint_angle[j];
    const double bx = (rest[j][0] - rest[p][0]) * scale;
    const double by = (rest[j][1] - rest[p][1]) * scale;
    const double bz = (rest[j][2] - rest[p][2]) * scale;
    const double c = std::cos(accum[j]), s = std::sin(accum[j]);
    pos[j][0] = pos[p][0] + c * bx - s * by;
    pos[j][1] = pos[p][1] + s * bx + c * by;
    pos[j][2] = pos[p][2] + bz;
  }
  for (std::size_t j = 0; j < 21; ++j)
    for (std::size_t a = 0; a < 3; ++a) out[j * 3 + a] = pos[j][a];
}

// Deterministic labeled corpus: every (activity, subject) pair contributes
// windows_per_subject consecutive 150-frame windows at 30 Hz, with a
// per-subject uniform limb scale and phase jitter.
inline std::vector<WindowedSample> synth_skeleton_corpus(std::size_t n_activities,
                                                         std::size_t n_subjects,
                                                         std::size_t windows_per_subject,
                                                         std::uint64_t seed) {
  if (n_subjects == 0 || windows_per_subject == 0)
    throw contract_error("synth corpus: need at least one subject and one window");
  const auto activities = synth_activity_names(n_activities);
  Rng rng(seed);
  std::vector<WindowedSample> corpus;
  const std::size_t t = WindowedSample::kFrames;
  for (std::size_t subject = 0; subject < n_subjects; ++subject) {
    const double scl = rng.uniform(0.85, 1.15);
    for (const std::string& activity : activities) {
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      SkeletonSequence seq = SkeletonSequence::zeros(21, windows_per_subject * t, 30.0);
      seq.subject_id = "s" + std::to_string(subject);
      seq.activity_label = activity;
      std::vector<double> frame(21 * 3);
      for (std::size_t f = 0; f < seq.t; ++f) {
        synth_frame(activity, static_cast<double>(f) / 30.0, phase, scl, frame.data());
        for (std::size_t j = 0; j < 21; ++j)
          for (std::size_t a = 0; a < 3; ++a) seq.at(j, a, f) = frame[j * 3 + a];
      }
      for (WindowedSample& w : window(seq, "synth/" + activity + "/s" + std::to_string(subject)))
        corpus.push_back(std::move(w));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Virtual IMU
// ---------------------------------------------------------------------------

inline constexpr double kGravity = 9.81;

// Default mounts: watch on the left wrist, phone strapped to the right
// upper arm (elbow end).
inline std::vector<std::size_t> default_imu_mounts() { return {6, 9}; }

// Synthesizes a 6-axis IMU stream per mount joint from a skeleton window:
// accelerometer = second central difference of position times rate^2 plus
// gravity, expressed in a bone-attached frame; gyroscope = angular velocity
// of the bone direction, also in the bone frame. Gaussian noise sigma is
// added to every channel. Output is row-major [t, mounts*6].
inline std::vector<double> synth_imu_from_skeleton(const WindowedSample& sample,
                                                   const std::vector<std::size_t>& mounts,
                                                   double noise_sigma, std::uint64_t seed,
                                                   double rate_hz = 30.0) {
  const SkeletonTopology& topo = topology();
  const std::size_t t = WindowedSample::kFrames;
  const std::size_t channels = mounts.size() * 6;
  std::vector<double> out(t * channels, 0.0);
  Rng rng(seed);
  auto pos_at = [&](std::size_t joint, std::size_t frame, double* p) {
    for (std::size_t a = 0; a < 3; ++a) p[a] = sample.at(joint, a, frame);
  };
  for (std::size_t m = 0; m < mounts.size(); ++m) {
    const std::size_t joint = mounts[m];
    const std::size_t parent = topo.parent(joint);
    if (parent == SIZE_MAX) throw contract_error("imu mount joint must have a parent bone");
    for (std::size_t f = 0; f < t; ++f) {
      const std::size_t prev = f == 0 ? 0 : f - 1;
      const std::size_t next = f == t - 1 ? t - 1 : f + 1;
      double pp[3], pc[3], pn[3], parent_c[3];
      pos_at(joint, prev, pp);
      pos_at(joint, f, pc);
      pos_at(joint, next, pn);
      pos_at(parent, f, parent_c);
      // world-frame acceleration plus gravity reaction (y up)
      double accel[3];
      const double dt = 1.0 / rate_hz;
      for (std::size_t a = 0; a < 3; ++a)
        accel[a] = (pn[a] - 2.0 * pc[a] + pp[a]) / (dt * dt);
      accel[1] += kGravity;
      // bone-attached orthonormal frame
      double e1[3];
      double norm = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        e1[a] = pc[a] - parent_c[a];
        norm += e1[a] * e1[a];
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) { e1[0] = 1.0; e1[1] = 0.0; e1[2] = 0.0; norm = 1.0; }
      for (std::size_t a = 0; a < 3; ++a) e1[a] /= norm;
      // e2 = e1 x z_axis; fall back to e1 x y_axis when nearly parallel
      double e2[3] = {e1[1], -e1[0], 0.0};
      double n2 = std::sqrt(e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]);
      if (n2 < 1e-8) {
        e2[0] = -e1[2];
        e2[1] = 0.0;
        e2[2] = e1[0];
        n2 = std::sqrt(e2[0] * e2[0] + e2[1] * e2[1] + e2[2] * e2[2]);
      }
      for (std::size_t a = 0; a < 3; ++a) e2[a] /= n2;
      const double e3[3] = {e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                            e1[0] * e2[1] - e1[1] * e2[0]};
      // angular velocity of the bone direction via central difference
      double bp[3], bn[3], parent_p[3], parent_n[3];
      pos_at(parent, prev, parent_p);
      pos_at(parent, next, parent_n);
      double dir_p[3], dir_n[3];
      double np = 0.0, nn = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        bp[a] = sample.at(joint, a, prev) - parent_p[a];
        bn[a] = sample.at(joint, a, next) - parent_n[a];
        np += bp[a] * bp[a];
        nn += bn[a] * bn[a];
      }
      np = std::sqrt(np);
      nn = std::sqrt(nn);
      for (std::size_t a = 0; a < 3; ++a) {
        dir_p[a] = np > 1e-12 ? bp[a] / np : 0.0;
        dir_n[a] = nn > 1e-12 ? bn[a] / nn : 0.0;
      }
      const double span = static_cast<double>(next - prev) * dt;
      double ddot[3];
      for (std::size_t a = 0; a < 3; ++a)
        ddot[a] = span > 0.0 ? (dir_n[a] - dir_p[a]) / span : 0.0;
      // omega = dir x d(dir)/dt for a unit vector rotating in space
      double dir_c[3];
      double nc = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        dir_c[a] = pc[a] - parent_c[a];
        nc += dir_c[a] * dir_c[a];
      }
      nc = std::sqrt(nc);
      for (std::size_t a = 0; a < 3; ++a) dir_c[a] = nc > 1e-12 ? dir_c[a] / nc : 0.0;
      const double omega[3] = {dir_c[1] * ddot[2] - dir_c[2] * ddot[1],
                               dir_c[2] * ddot[0] - dir_c[0] * ddot[2],
                               dir_c[0] * ddot[1] - dir_c[1] * ddot[0]};
      double* row = out.data() + f * channels + m * 6;
      const double* axes[3] = {e1, e2, e3};
      for (std::size_t a = 0; a < 3; ++a) {
        double acc_c = 0.0, gyr_c = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          acc_c += accel[c] * axes[a][c];
          gyr_c += omega[c] * axes[a][c];
        }
        row[a] = acc_c;
        row[3 + a] = gyr_c;
      }
    }
  }
  if (noise_sigma > 0.0)
    for (double& x : out) x += noise_sigma * rng.normal();
  return out;
}

// Magnitude spectrum of a real series via a direct DFT (series are short).
inline std::vector<double> power_spectrum(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mag(n / 2 + 1, 0.0);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(i) /
                       static_cast<double>(n);
      re += x[i] * std::cos(w);
      im += x[i] * std::sin(w);
    }
    mag[k] = std::sqrt(re * re + im * im);
  }
  return mag;
}

}  // namespace skelar
