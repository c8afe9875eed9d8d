// SPDX-License-Identifier: Apache-2.0
#include "keygaze/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "keygaze/error.hpp"

namespace keygaze {

KeypointKind slot_kind(Slot s) {
  switch (s) {
    case Slot::Nose: return KeypointKind::Nose;
    case Slot::RightEye:
    case Slot::LeftEye: return KeypointKind::Eye;
    case Slot::RightEar:
    case Slot::LeftEar: return KeypointKind::Ear;
  }
  return KeypointKind::Nose;
}

Side slot_side(Slot s) {
  switch (s) {
    case Slot::RightEye:
    case Slot::RightEar: return Side::Right;
    case Slot::LeftEye:
    case Slot::LeftEar: return Side::Left;
    case Slot::Nose: return Side::None;
  }
  return Side::None;
}

Slot opposite_slot(Slot s) {
  switch (s) {
    case Slot::RightEye: return Slot::LeftEye;
    case Slot::LeftEye: return Slot::RightEye;
    case Slot::RightEar: return Slot::LeftEar;
    case Slot::LeftEar: return Slot::RightEar;
    case Slot::Nose: return Slot::Nose;
  }
  return s;
}

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::Nose: return "nose";
    case Slot::RightEye: return "right_eye";
    case Slot::LeftEye: return "left_eye";
    case Slot::RightEar: return "right_ear";
    case Slot::LeftEar: return "left_ear";
  }
  return "?";
}

int PersonDetections::num_detected() const {
  return static_cast<int>(std::count_if(keypoints.begin(), keypoints.end(),
                                        [](const auto& k) { return k.detected(); }));
}

int FeatureVector::num_detected() const {
  return static_cast<int>(std::count(present.begin(), present.end(), true));
}

std::optional<HeadGeometry> head_geometry(const PersonDetections& person) {
  Vec2 sum;
  int n = 0;
  for (const auto& k : person.keypoints) {
    if (k.detected()) {
      sum += k.pos();
      ++n;
    }
  }
  if (n == 0) return std::nullopt;

  HeadGeometry geo;
  geo.centroid = sum / static_cast<double>(n);
  for (const auto& k : person.keypoints) {
    if (k.detected()) geo.delta = std::max(geo.delta, norm(k.pos() - geo.centroid));
  }
  return geo;
}

FeatureVector build_feature_vector(const PersonDetections& person) {
  const int n = person.num_detected();
  if (n < kMinKeypoints) {
    throw Error(ErrorCode::TooFewKeypoints,
                "person '" + person.person_id + "' has " + std::to_string(n) +
                    " detected keypoints, need at least 2");
  }
  const HeadGeometry geo = *head_geometry(person);
  if (!(geo.delta > 0.0)) {
    throw Error(ErrorCode::DegenerateGeometry,
                "detected keypoints of person '" + person.person_id + "' coincide");
  }

  FeatureVector f;
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const auto& k = person.keypoints[s];
    if (!k.detected()) continue;
    const Vec2 rel = (k.pos() - geo.centroid) / geo.delta;
    f.values[3 * s] = rel.x;
    f.values[3 * s + 1] = rel.y;
    f.values[3 * s + 2] = k.c;
    f.present[s] = true;
  }
  return f;
}

FeatureVector mirror_features(const FeatureVector& f) {
  FeatureVector out;
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const std::size_t d = index(opposite_slot(static_cast<Slot>(s)));
    // Absent slots stay exactly (0, 0, 0); avoid producing -0.0.
    out.values[3 * d] = f.present[s] ? -f.values[3 * s] : 0.0;
    out.values[3 * d + 1] = f.values[3 * s + 1];
    out.values[3 * d + 2] = f.values[3 * s + 2];
    out.present[d] = f.present[s];
  }
  return out;
}

std::pair<FeatureVector, GazeLabel> mirror_sample(const FeatureVector& f, const GazeLabel& label) {
  GazeLabel mirrored = label;
  mirrored.g.x = -label.g.x;
  return {mirror_features(f), mirrored};
}

GazeLabel derive_gaze_from_annotation(Vec2 eye, Vec2 fixation) {
  const Vec2 d = fixation - eye;
  const double len = norm(d);
  if (!(len > 0.0)) {
    throw Error(ErrorCode::ZeroLengthGaze, "eye and fixation points coincide");
  }
  return {d / len, LabelSource::EyePlusFixation};
}

GazeLabel average_annotation(std::span<const Vec2> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::DegenerateMean, "no annotation vectors");
  Vec2 mean;
  for (Vec2 v : vectors) mean += v;
  mean /= static_cast<double>(vectors.size());
  const double len = norm(mean);
  if (len < 1e-9) throw Error(ErrorCode::DegenerateMean, "annotation vectors cancel out");
  return {mean / len, LabelSource::Direction};
}

std::optional<std::size_t> match_subject(std::span<const PersonDetections> people,
                                         Vec2 annotated_eye) {
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  double best_delta = 0.0;
  for (std::size_t i = 0; i < people.size(); ++i) {
    if (people[i].num_detected() < kMinKeypoints) continue;
    const HeadGeometry geo = *head_geometry(people[i]);
    const double dist = norm(annotated_eye - geo.centroid);
    if (dist < best_dist) {
      best = i;
      best_dist = dist;
      best_delta = geo.delta;
    }
  }
  if (best && best_dist <= kMatchRadiusFactor * best_delta) return best;
  return std::nullopt;
}

double label_angle_deg(Vec2 g) {
  // -0.0 + 0.0 is +0.0, which keeps (-1, 0) at +180 rather than -180.
  return std::atan2(-g.y + 0.0, g.x) * 180.0 / std::numbers::pi;
}

}  // namespace keygaze
