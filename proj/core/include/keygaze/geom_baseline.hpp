// SPDX-License-Identifier: Apache-2.0
/**
 * @file   geom_baseline.hpp
 * @brief  Non-learned gaze estimate from keypoint geometry.
 *
 * Construction, all in image coordinates (y down):
 *  1. eye axis e: unit vector right eye -> left eye, or the image horizontal
 *     when only one eye is detected;
 *  2. symmetry axis s: unit normal of e;
 *  3. facial normal n: unit vector along e (normal to s), pointing from the
 *     eye centroid toward the side of the symmetry line the nose lies on.
 *     A nose exactly on the line picks +e;
 *  4. pitch w: signed angle from the eye axis (oriented toward v) to
 *     v = eye centroid - ear centroid, so |w| <= 90 deg. No ear means w = 0;
 *  5. gaze = n rotated by w (positive w turns clockwise on screen).
 *
 * With both eyes detected the estimate is equivariant under in-plane
 * rotations; mirroring the keypoints mirrors the estimate.
 */
#pragma once

#include "keygaze/features.hpp"

namespace keygaze {

struct GeomEstimate {
  Vec2 gaze;
  Vec2 symmetry_axis;
  Vec2 facial_normal;
  double pitch = 0.0;  ///< radians
};

/// Throws Error{MissingNose} or Error{MissingEyes}.
GeomEstimate estimate_gaze_geom(const PersonDetections& person);

}  // namespace keygaze
