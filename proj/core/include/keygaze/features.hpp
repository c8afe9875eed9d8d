// SPDX-License-Identifier: Apache-2.0
/**
 * @file   features.hpp
 * @brief  Head keypoints and the normalized 15-value feature encoding.
 *
 * A person is described by five head keypoints in a fixed slot order
 * (nose, right eye, left eye, right ear, left ear). Detected keypoints are
 * centered on the head centroid and divided by the distance to the farthest
 * detected keypoint; each slot then contributes (x, y, confidence). A slot
 * with confidence 0 is absent and contributes (0, 0, 0).
 */
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "keygaze/vec2.hpp"

namespace keygaze {

inline constexpr std::size_t kNumSlots = 5;
inline constexpr std::size_t kFeatureDim = 3 * kNumSlots;

enum class Slot : std::size_t {
  Nose = 0,
  RightEye = 1,
  LeftEye = 2,
  RightEar = 3,
  LeftEar = 4,
};

enum class KeypointKind { Nose, Eye, Ear };
enum class Side { Left, Right, None };

constexpr std::size_t index(Slot s) { return static_cast<std::size_t>(s); }
KeypointKind slot_kind(Slot s);
Side slot_side(Slot s);
/// Slot holding the same kind on the other side; the nose maps to itself.
Slot opposite_slot(Slot s);
std::string_view slot_name(Slot s);

/// One keypoint as emitted by the pose estimator: pixel position plus
/// detection confidence. Confidence 0 marks an absent keypoint.
struct KeypointDetection {
  double x = 0.0;
  double y = 0.0;
  double c = 0.0;

  bool detected() const { return c > 0.0; }
  Vec2 pos() const { return {x, y}; }
  friend bool operator==(const KeypointDetection&, const KeypointDetection&) = default;
};

struct PersonDetections {
  std::array<KeypointDetection, kNumSlots> keypoints{};
  std::string person_id;

  const KeypointDetection& operator[](Slot s) const { return keypoints[index(s)]; }
  KeypointDetection& operator[](Slot s) { return keypoints[index(s)]; }
  int num_detected() const;
};

struct HeadGeometry {
  Vec2 centroid;
  double delta = 0.0;
};

/// Centroid and farthest-keypoint distance over detected keypoints only.
/// Empty when nothing is detected.
std::optional<HeadGeometry> head_geometry(const PersonDetections& person);

struct FeatureVector {
  std::array<double, kFeatureDim> values{};
  std::array<bool, kNumSlots> present{};

  Vec2 coord(Slot s) const { return {values[3 * index(s)], values[3 * index(s) + 1]}; }
  double confidence(Slot s) const { return values[3 * index(s) + 2]; }
  int num_detected() const;
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

enum class LabelSource { Direction, EyePlusFixation, Synthetic };

/// Unit gaze direction in image coordinates.
struct GazeLabel {
  Vec2 g;
  LabelSource source = LabelSource::Direction;
  friend bool operator==(const GazeLabel&, const GazeLabel&) = default;
};

/// Minimum number of detected keypoints for a sample to be estimable.
inline constexpr int kMinKeypoints = 2;

/// Throws Error{TooFewKeypoints} below two detections and
/// Error{DegenerateGeometry} when all detections coincide.
FeatureVector build_feature_vector(const PersonDetections& person);

/// Reflection about the vertical axis: x negated, left/right slots swapped,
/// label x negated.
FeatureVector mirror_features(const FeatureVector& f);
std::pair<FeatureVector, GazeLabel> mirror_sample(const FeatureVector& f, const GazeLabel& label);

/// Unit vector from the annotated eye to the fixation point.
GazeLabel derive_gaze_from_annotation(Vec2 eye, Vec2 fixation);

/// Renormalized mean of several annotation vectors.
GazeLabel average_annotation(std::span<const Vec2> vectors);

/// Radius multiplier (in units of delta) for matching an annotated eye to a
/// detected head.
inline constexpr double kMatchRadiusFactor = 1.5;

/// Index of the person whose head centroid is nearest to `annotated_eye`,
/// provided it lies within 1.5 delta of that centroid. People with fewer than
/// two detections are skipped. Ties go to the lower index.
std::optional<std::size_t> match_subject(std::span<const PersonDetections> people,
                                         Vec2 annotated_eye);

/// Label angle in degrees, measured with the y axis pointing up:
/// atan2(-g.y, g.x), in (-180, 180].
double label_angle_deg(Vec2 g);

}  // namespace keygaze
