// SPDX-License-Identifier: Apache-2.0
/**
 * @file   dataset.hpp
 * @brief  Dataset records, the JSON-lines file format and sample admission.
 *
 * One line per person per frame:
 *
 *   {"frame": "000123", "camera": "cam1", "person": "0", "sequence": "s04",
 *    "keypoints": [[x, y, c], [x, y, c], [x, y, c], [x, y, c], [x, y, c]],
 *    "gaze": [gx, gy]}
 *
 *  - keypoints: pixel coordinates (x right, y down) and confidence in [0, 1],
 *    slot order nose, right eye, left eye, right ear, left ear. Confidence 0
 *    marks an absent keypoint; its coordinates are read as (0, 0).
 *  - label, at most one of
 *      "gaze":        unit direction [gx, gy] in image coordinates
 *      "eye" + "fixation": pixel points; the label is the unit vector eye to
 *                     fixation, and the eye point must match this person's
 *                     head (within 1.5 delta of the centroid, nearest among
 *                     the frame's people)
 *      "annotations": several direction vectors, averaged and renormalized
 *    or none.
 *  - optional: "sequence" (split grouping key), "pose" ([yaw, pitch, roll]
 *    in degrees, written by the synthetic generator).
 */
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "keygaze/error.hpp"
#include "keygaze/features.hpp"

namespace keygaze {

struct Record {
  std::string frame;
  std::string camera;
  std::string person;
  std::optional<std::string> sequence;
  PersonDetections detections;

  std::optional<Vec2> gaze;
  std::optional<Vec2> eye;
  std::optional<Vec2> fixation;
  std::vector<Vec2> annotations;

  std::optional<std::array<double, 3>> pose;

  bool has_label() const { return gaze || (eye && fixation) || !annotations.empty(); }
};

std::string record_to_json(const Record& r);
/// Throws Error{InvalidRecord} on schema violations, including confidences
/// outside [0, 1].
Record record_from_json(const std::string& line);

std::vector<Record> read_dataset(const std::filesystem::path& path);
std::string dataset_to_string(std::span<const Record> records);
void write_dataset(const std::filesystem::path& path, std::span<const Record> records);

/// Ground-truth label of a record, if any. The eye-plus-fixation form is
/// converted directly; annotations are averaged.
std::optional<GazeLabel> resolve_label(const Record& r);

struct SampleMeta {
  std::string frame;
  std::string camera;
  std::string person;
  std::optional<std::string> sequence;
};

struct LabeledSample {
  FeatureVector features;
  GazeLabel label;
  SampleMeta meta;
};

struct SkippedRecord {
  std::size_t index = 0;
  ErrorCode reason = ErrorCode::TooFewKeypoints;
};

struct AdmittedSet {
  std::vector<LabeledSample> samples;
  std::vector<std::size_t> source_index;  ///< record index of each sample
  std::vector<SkippedRecord> skipped;
  std::size_t unlabeled = 0;
};

/// Builds feature vectors for every labeled record; records that fail
/// admission are listed with their reason. Eye-plus-fixation labels also
/// require the annotated eye to match this record's person within its frame.
AdmittedSet admit(std::span<const Record> records);

/// Mapping from pose-estimator keypoint indices to the five head slots.
enum class PoseLayout { Coco18, Body25 };

/// Index of each slot (nose, right eye, left eye, right ear, left ear) in the
/// estimator's keypoint list.
std::array<std::size_t, kNumSlots> pose_layout_indices(PoseLayout layout);

/// Builds detections from a flat [x0, y0, c0, x1, y1, c1, ...] keypoint list
/// as emitted per person by the pose estimator.
PersonDetections from_pose_keypoints(std::span<const double> flat, PoseLayout layout,
                                     std::string person_id = {});

struct SplitProportions {
  double train = 0.5;
  double val = 0.2;
  double test = 0.3;
};

struct DatasetSplit {
  std::vector<Record> train;
  std::vector<Record> val;
  std::vector<Record> test;
};

/// Group-wise random split: all records sharing a sequence id (or, without
/// one, the same camera/frame/person key) land in the same subset. Groups are
/// shuffled with `seed` and assigned so that cumulative record counts follow
/// the proportions.
DatasetSplit split_dataset(std::span<const Record> records, const SplitProportions& props,
                           std::uint64_t seed);

}  // namespace keygaze
