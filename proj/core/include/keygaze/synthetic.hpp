// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Labeled keypoint data from a posed five-point 3D head.
 *
 * Head frame: x toward the subject's left, y up, z forward (out of the face).
 * The camera sits on the +z axis looking back at the head, so identity pose
 * is a frontal view. A pose is applied as R = Rz(roll) * Rx(pitch) * Ry(yaw)
 * with yaw > 0 turning the face toward image right and pitch > 0 tilting it
 * up. Projection is orthographic: image x = X, image y = -Y, then scaled and
 * translated. The label is the projected forward axis, normalized.
 *
 * A keypoint is visible when its outward direction (the normalized model
 * point, rotated) has a camera-facing component above a threshold.
 */
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keygaze/dataset.hpp"
#include "keygaze/features.hpp"

namespace keygaze {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct HeadModel3D {
  /// Slot order: nose, right eye, left eye, right ear, left ear. Units are
  /// head radii.
  std::array<Vec3, kNumSlots> points{{
      {0.0, 0.15, 0.95},
      {-0.35, -0.25, 0.80},
      {0.35, -0.25, 0.80},
      {-0.95, 0.0, 0.0},
      {0.95, 0.0, 0.0},
  }};
};

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct SynthParams {
  std::size_t n_samples = 1000;
  std::uint64_t seed = 1;
  Range yaw_deg{-180.0, 180.0};
  Range pitch_deg{-30.0, 30.0};
  Range roll_deg{-25.0, 25.0};
  Range scale_px{12.0, 60.0};  ///< pixels per head radius
  double image_width = 640.0;
  double image_height = 480.0;
  double coord_noise_px = 0.5;
  /// Minimum camera-facing component (cosine) for a keypoint to be visible.
  double visibility_threshold = -0.05;
  double conf_base = 0.55;
  double conf_slope = 0.4;
  double conf_noise = 0.08;
  double conf_min = 0.02;
  /// Probability that a visible keypoint is dropped by the detector.
  double miss_prob = 0.03;
  /// Probability that a keypoint hidden by a random occluder is still
  /// reported, displaced and with low confidence, as pose estimators tend to
  /// do. Self-occluded keypoints are never reported.
  double ghost_prob = 0.0;
  double ghost_offset = 0.3;     ///< displacement std, head radii
  double ghost_conf_max = 0.25;  ///< ghost confidence ~ U[conf_min, this]
  bool distortion = false;
  double distortion_k1 = 0.35;
  std::string camera = "synth";
  HeadModel3D head;

  /// Throws Error{InvalidConfig} naming the offending field.
  void validate() const;
};

nlohmann::ordered_json to_json(const SynthParams& p);
/// Starts from defaults and overrides the fields present in `j`.
SynthParams synth_params_from_json(const nlohmann::ordered_json& j);

struct Pose {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;
};

struct Rotation {
  std::array<double, 9> m{};  ///< row-major
  Vec3 apply(const Vec3& v) const;
};

Rotation pose_rotation(const Pose& pose);

struct ProjectedHead {
  std::array<Vec2, kNumSlots> points{};
  std::array<double, kNumSlots> facing{};  ///< camera-facing component per slot
  double scale = 1.0;                      ///< pixels per head radius
  Vec2 gaze;                               ///< unit label
};

/// Throws Error{DegenerateLabel} when the forward axis points along the
/// camera axis.
ProjectedHead project_head(const Pose& pose, double scale, Vec2 center,
                           const HeadModel3D& head = {});

class Rng;

/// Visibility, random misses and ghosts, coordinate noise, radial distortion
/// and confidences. Returns
/// nothing when fewer than two keypoints survive.
std::optional<PersonDetections> apply_detector_model(const ProjectedHead& head,
                                                     const SynthParams& params, Rng& rng);

struct SynthStats {
  std::size_t rejected_label = 0;
  std::size_t rejected_visibility = 0;
  std::array<std::size_t, 4> quadrant_histogram{};  ///< [0,90) [90,180] [-180,-90) [-90,0)
  std::array<std::size_t, kNumSlots + 1> keypoint_histogram{};  ///< by detected count
};

struct SynthResult {
  std::vector<Record> records;
  SynthStats stats;
};

/// Deterministic per (params, seed): sample i draws from its own stream
/// derived from (seed, i), so results do not depend on evaluation order.
SynthResult generate_dataset(const SynthParams& params);

/// Quadrant index used by the histogram for a label direction.
std::size_t label_quadrant(Vec2 g);

nlohmann::ordered_json synth_manifest(const SynthParams& params, const SynthStats& stats);

}  // namespace keygaze
