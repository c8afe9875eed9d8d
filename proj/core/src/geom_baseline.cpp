// SPDX-License-Identifier: Apache-2.0
#include "keygaze/geom_baseline.hpp"

#include <cmath>

#include "keygaze/error.hpp"

namespace keygaze {

GeomEstimate estimate_gaze_geom(const PersonDetections& person) {
  const auto& nose = person[Slot::Nose];
  const auto& r_eye = person[Slot::RightEye];
  const auto& l_eye = person[Slot::LeftEye];
  if (!nose.detected()) throw Error(ErrorCode::MissingNose, "nose not detected");
  if (!r_eye.detected() && !l_eye.detected()) throw Error(ErrorCode::MissingEyes, "no eye detected");

  Vec2 eye_axis{1.0, 0.0};
  Vec2 eye_centroid;
  if (r_eye.detected() && l_eye.detected()) {
    const Vec2 d = l_eye.pos() - r_eye.pos();
    const double len = norm(d);
    if (len > 0.0) eye_axis = d / len;
    eye_centroid = 0.5 * (l_eye.pos() + r_eye.pos());
  } else {
    eye_centroid = r_eye.detected() ? r_eye.pos() : l_eye.pos();
  }

  GeomEstimate est;
  est.symmetry_axis = perp(eye_axis);
  est.facial_normal = dot(nose.pos() - eye_centroid, eye_axis) >= 0.0 ? eye_axis : -eye_axis;

  Vec2 ear_sum;
  int ears = 0;
  for (Slot s : {Slot::RightEar, Slot::LeftEar}) {
    if (person[s].detected()) {
      ear_sum += person[s].pos();
      ++ears;
    }
  }
  if (ears > 0) {
    const Vec2 v = eye_centroid - ear_sum / static_cast<double>(ears);
    if (norm(v) > 0.0) {
      const Vec2 axis = dot(v, eye_axis) >= 0.0 ? eye_axis : -eye_axis;
      est.pitch = std::atan2(cross(axis, v), dot(axis, v));
    }
  }

  est.gaze = rotate(est.facial_normal, est.pitch);
  est.gaze = est.gaze / norm(est.gaze);
  return est;
}

}  // namespace keygaze
