#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "skelar/common.hpp"

namespace skelar {

// The canonical 21-joint skeleton: the NTU kinematic tree with the two hand
// tip and two thumb joints removed, so the hands become the arm leaves.
//
//  idx name            parent    idx name            parent
//   0  spine_base        -        11 hand_right        10
//   1  spine_mid         0        12 hip_left           0
//   2  neck             20        13 knee_left         12
//   3  head              2        14 ankle_left        13
//   4  shoulder_left    20        15 foot_left         14
//   5  elbow_left        4        16 hip_right          0
//   6  wrist_left        5        17 knee_right        16
//   7  hand_left         6        18 ankle_right       17
//   8  shoulder_right   20        19 foot_right        18
//   9  elbow_right       8        20 spine_shoulder     1
//  10  wrist_right       9
class SkeletonTopology {
 public:
  static constexpr std::size_t kNumJoints = 21;
  static constexpr double kDegreeEpsilon = 0.0001;

  SkeletonTopology() {
    names_ = {"spine_base",    "spine_mid",  "neck",        "head",       "shoulder_left",
              "elbow_left",    "wrist_left", "hand_left",   "shoulder_right",
              "elbow_right",   "wrist_right", "hand_right", "hip_left",   "knee_left",
              "ankle_left",    "foot_left",  "hip_right",   "knee_right", "ankle_right",
              "foot_right",    "spine_shoulder"};
    parent_ = {SIZE_MAX, 0, 20, 2, 20, 4, 5, 6, 20, 8, 9, 10, 0, 12, 13, 14, 0, 16, 17, 18, 1};
    for (std::size_t j = 0; j < kNumJoints; ++j)
      if (parent_[j] != SIZE_MAX) edges_.emplace_back(parent_[j], j);
  }

  const std::vector<std::string>& joint_names() const { return names_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  std::size_t parent(std::size_t j) const { return parent_[j]; }

  std::size_t joint_index(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw contract_error("unknown joint name: " + name);
  }

  std::vector<std::size_t> neighbors(std::size_t j) const {
    std::vector<std::size_t> out;
    for (const auto& [a, b] : edges_) {
      if (a == j) out.push_back(b);
      if (b == j) out.push_back(a);
    }
    return out;
  }

  std::size_t degree(std::size_t j) const { return neighbors(j).size(); }

  // Adjacency with self-connections, row-major [v, v].
  std::vector<double> adjacency_with_self() const {
    std::vector<double> a(kNumJoints * kNumJoints, 0.0);
    for (std::size_t j = 0; j < kNumJoints; ++j) a[j * kNumJoints + j] = 1.0;
    for (const auto& [u, v] : edges_) {
      a[u * kNumJoints + v] = 1.0;
      a[v * kNumJoints + u] = 1.0;
    }
    return a;
  }

  // D~^{-1/2} A~ D~^{1/2} with D~_ii = sum_j A~_ij + epsilon.
  std::vector<double> normalized_adjacency() const {
    const auto a = adjacency_with_self();
    std::vector<double> deg(kNumJoints, kDegreeEpsilon);
    for (std::size_t i = 0; i < kNumJoints; ++i)
      for (std::size_t j = 0; j < kNumJoints; ++j) deg[i] += a[i * kNumJoints + j];
    std::vector<double> out(kNumJoints * kNumJoints);
    for (std::size_t i = 0; i < kNumJoints; ++i)
      for (std::size_t j = 0; j < kNumJoints; ++j)
        out[i * kNumJoints + j] =
            a[i * kNumJoints + j] * std::sqrt(deg[j]) / std::sqrt(deg[i]);
    return out;
  }

  // Limb joints used as reconstruction targets; each has exactly two
  // incident bones in the tree.
  std::vector<std::size_t> essential_joints() const {
    return {5, 9, 6, 10, 13, 17, 14, 18};  // elbows, wrists, knees, ankles
  }

  // FNV-1a over names and edges; all modules must agree on this value.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 1099511628211ULL;
    };
    for (const std::string& n : names_)
      for (char c : n) mix(static_cast<unsigned char>(c));
    for (const auto& [a, b] : edges_) {
      mix(static_cast<unsigned char>(a));
      mix(static_cast<unsigned char>(b));
    }
    return h;
  }

 private:
  std::vector<std::string> names_;
  std::array<std::size_t, kNumJoints> parent_{};
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

// The shared canonical instance.
inline const SkeletonTopology& topology() {
  static const SkeletonTopology instance;
  return instance;
}

}  // namespace skelar
