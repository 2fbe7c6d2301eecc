#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "skelar/common.hpp"
#include "skelar/skeleton.hpp"
#include "skelar/tensor.hpp"
#include "skelar/topology.hpp"

namespace skelar {

// Projection norms below this are treated as degenerate and the axis is
// flagged undefined instead of producing a junk angle.
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kProjectionEps = 1e-8;

// Class marker for frames whose projection is degenerate; excluded from the
// loss.
inline constexpr long kAngleIgnore = kIgnoreIndex;

// The two bone vectors incident to a joint, both oriented away from it.
struct BonePair {
  std::array<double, 3> e1;
  std::array<double, 3> e2;
};

struct ProjectedAngles {
  std::array<double, 3> theta;      // radians, one per axis
  std::array<bool, 3> defined;      // false where a projection is degenerate
};

namespace detail {

// Drops the given axis, returning the 2D projection of a 3D vector.
inline std::array<double, 2> drop_axis(const std::array<double, 3>& v, std::size_t axis) {
  switch (axis) {
    case 0: return {v[1], v[2]};
    case 1: return {v[0], v[2]};
    default: return {v[0], v[1]};
  }
}

}  // namespace detail

// Angle between the two bones after projecting both onto the plane
// orthogonal to each axis; atan2 of the absolute 2D cross product over the
// dot product, range [0, pi] — well-conditioned near 0 and pi, unlike the
// arccos form. With signed_mode, the signed atan2 mapped to [0, 2pi).
inline ProjectedAngles projected_angles(const BonePair& pair, bool signed_mode = false) {
  ProjectedAngles out{};
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto u1 = detail::drop_axis(pair.e1, axis);
    const auto u2 = detail::drop_axis(pair.e2, axis);
    const double n1 = std::sqrt(u1[0] * u1[0] + u1[1] * u1[1]);
    const double n2 = std::sqrt(u2[0] * u2[0] + u2[1] * u2[1]);
    if (n1 < kProjectionEps || n2 < kProjectionEps) {
      out.defined[axis] = false;
      out.theta[axis] = 0.0;
      continue;
    }
    out.defined[axis] = true;
    if (signed_mode) {
      const double cross = u1[0] * u2[1] - u1[1] * u2[0];
      const double dot = u1[0] * u2[0] + u1[1] * u2[1];
      double theta = std::atan2(cross, dot);
      if (theta < 0.0) theta += 2.0 * kPi;
      if (theta >= 2.0 * kPi) theta = 0.0;
      out.theta[axis] = theta;
    } else {
      const double cross = u1[0] * u2[1] - u1[1] * u2[0];
      const double dot = u1[0] * u2[0] + u1[1] * u2[1];
      out.theta[axis] = std::atan2(std::abs(cross), dot);
    }
  }
  return out;
}

// Quantizes theta in [0, 2pi) into one of 2m half-open intervals
// [i*pi/m, (i+1)*pi/m); boundary angles land in the upper interval.
inline long coarse_bin(double theta, std::size_t m) {
  if (m == 0) throw contract_error("coarse_bin: m must be positive");
  if (!(theta >= 0.0) || theta >= 2.0 * kPi) {
    throw contract_error("coarse_bin: angle " + std::to_string(theta) +
                         " outside [0, 2*pi)");
  }
  const double s = theta * static_cast<double>(m) / kPi;
  long idx = static_cast<long>(std::floor(s));
  // Interval boundaries are closed below; snap values that rounding left a
  // few ulps short of an integer onto the upper interval.
  if (std::ceil(s) - s < 1e-9 && std::ceil(s) > s) idx = static_cast<long>(std::ceil(s));
  if (idx >= static_cast<long>(2 * m)) idx = static_cast<long>(2 * m) - 1;
  return idx;
}

// Per-frame coarse-angle class triples for one joint, with the raw angles
// kept for the fine-angle ablation.
struct AngleTargetSet {
  std::size_t m = 6;
  std::vector<long> classes;   // [3, t], kAngleIgnore where undefined
  std::vector<double> angles;  // [3, t], radians (0 where undefined)
  std::size_t t = 0;

  long class_at(std::size_t axis, std::size_t frame) const { return classes[axis * t + frame]; }
  double angle_at(std::size_t axis, std::size_t frame) const { return angles[axis * t + frame]; }
};

// Builds the per-frame bone pair at an essential joint (both bones oriented
// away from the joint) and quantizes the projected angles.
inline AngleTargetSet joint_angle_targets(const WindowedSample& sample, std::size_t joint,
                                          std::size_t m, bool signed_mode = false) {
  const SkeletonTopology& topo = topology();
  const auto nbrs = topo.neighbors(joint);
  if (nbrs.size() != 2) {
    throw contract_error("joint_angle_targets: joint " + std::to_string(joint) + " has " +
                         std::to_string(nbrs.size()) + " incident bones, need exactly 2");
  }
  AngleTargetSet out;
  out.m = m;
  out.t = WindowedSample::kFrames;
  out.classes.assign(3 * out.t, kAngleIgnore);
  out.angles.assign(3 * out.t, 0.0);
  for (std::size_t f = 0; f < out.t; ++f) {
    BonePair pair{};
    for (std::size_t a = 0; a < 3; ++a) {
      pair.e1[a] = sample.at(nbrs[0], a, f) - sample.at(joint, a, f);
      pair.e2[a] = sample.at(nbrs[1], a, f) - sample.at(joint, a, f);
    }
    const ProjectedAngles angles = projected_angles(pair, signed_mode);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      if (!angles.defined[axis]) continue;
      out.angles[axis * out.t + f] = angles.theta[axis];
      out.classes[axis * out.t + f] = coarse_bin(angles.theta[axis], m);
    }
  }
  return out;
}

// Identity copy of the coordinates, the regression target of the
// coordinate-reconstruction ablation.
inline std::vector<double> coordinate_targets(const WindowedSample& sample) {
  return sample.coords;
}

// CSV dump for inspection: frame, axis, angle_rad, class.
inline void write_angle_csv(const AngleTargetSet& targets, std::ostream& out) {
  out << "frame,axis,angle_rad,class\n";
  const char* axis_names[] = {"x", "y", "z"};
  for (std::size_t f = 0; f < targets.t; ++f)
    for (std::size_t axis = 0; axis < 3; ++axis) {
      out << f << "," << axis_names[axis] << "," << targets.angle_at(axis, f) << ","
          << targets.class_at(axis, f) << "\n";
    }
}

}  // namespace skelar
