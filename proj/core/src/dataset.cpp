// SPDX-License-Identifier: Apache-2.0
#include "keygaze/dataset.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "keygaze/io.hpp"
#include "keygaze/random.hpp"

namespace keygaze {

using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidRecord, what); }

ordered_json point(Vec2 p) { return ordered_json::array({p.x, p.y}); }

Vec2 read_point(const ordered_json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    invalid(std::string("'") + field + "' must be a [x, y] number pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string read_id(const ordered_json& j, const char* field) {
  if (!j.contains(field)) invalid(std::string("missing field '") + field + "'");
  const auto& v = j[field];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  invalid(std::string("'") + field + "' must be a string or integer");
}

// Unit-length tolerance for stored gaze directions. Values outside it are
// rejected; values within are kept verbatim (so files round-trip) and
// renormalized when the label is resolved.
constexpr double kUnitTolerance = 1e-6;

}  // namespace

std::string record_to_json(const Record& r) {
  ordered_json j;
  j["frame"] = r.frame;
  j["camera"] = r.camera;
  j["person"] = r.person;
  if (r.sequence) j["sequence"] = *r.sequence;
  ordered_json kps = ordered_json::array();
  for (const auto& k : r.detections.keypoints) kps.push_back({k.x, k.y, k.c});
  j["keypoints"] = std::move(kps);
  if (r.gaze) j["gaze"] = point(*r.gaze);
  if (r.eye) j["eye"] = point(*r.eye);
  if (r.fixation) j["fixation"] = point(*r.fixation);
  if (!r.annotations.empty()) {
    ordered_json a = ordered_json::array();
    for (Vec2 v : r.annotations) a.push_back(point(v));
    j["annotations"] = std::move(a);
  }
  if (r.pose) j["pose"] = {(*r.pose)[0], (*r.pose)[1], (*r.pose)[2]};
  return j.dump();
}

Record record_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const ordered_json::parse_error& e) {
    invalid(std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) invalid("record is not a JSON object");

  Record r;
  r.frame = read_id(j, "frame");
  r.camera = read_id(j, "camera");
  r.person = read_id(j, "person");
  if (j.contains("sequence")) r.sequence = read_id(j, "sequence");
  r.detections.person_id = r.person;

  if (!j.contains("keypoints")) invalid("missing field 'keypoints'");
  const auto& kps = j["keypoints"];
  if (!kps.is_array() || kps.size() != kNumSlots) invalid("'keypoints' must hold 5 triples");
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const auto& t = kps[s];
    if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number() ||
        !t[2].is_number()) {
      invalid("keypoint " + std::string(slot_name(static_cast<Slot>(s))) + " must be [x, y, c]");
    }
    KeypointDetection k{t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    if (!(k.c >= 0.0 && k.c <= 1.0)) {
      invalid("confidence of " + std::string(slot_name(static_cast<Slot>(s))) +
              " is outside [0, 1]");
    }
    if (!std::isfinite(k.x) || !std::isfinite(k.y)) invalid("keypoint coordinates must be finite");
    if (k.c == 0.0) k.x = k.y = 0.0;
    r.detections.keypoints[s] = k;
  }

  int label_forms = 0;
  if (j.contains("gaze")) {
    Vec2 g = read_point(j["gaze"], "gaze");
    const double len = norm(g);
    if (std::abs(len - 1.0) > kUnitTolerance) invalid("'gaze' must be a unit vector");
    r.gaze = g;
    ++label_forms;
  }
  if (j.contains("eye") || j.contains("fixation")) {
    if (!j.contains("eye") || !j.contains("fixation")) {
      invalid("'eye' and 'fixation' must appear together");
    }
    r.eye = read_point(j["eye"], "eye");
    r.fixation = read_point(j["fixation"], "fixation");
    ++label_forms;
  }
  if (j.contains("annotations")) {
    const auto& a = j["annotations"];
    if (!a.is_array() || a.empty()) invalid("'annotations' must be a non-empty array");
    for (const auto& v : a) r.annotations.push_back(read_point(v, "annotations"));
    ++label_forms;
  }
  if (label_forms > 1) invalid("record carries more than one label form");

  if (j.contains("pose")) {
    const auto& p = j["pose"];
    if (!p.is_array() || p.size() != 3) invalid("'pose' must be [yaw, pitch, roll]");
    r.pose = std::array<double, 3>{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
  }
  return r;
}

std::vector<Record> read_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidRecord,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string dataset_to_string(std::span<const Record> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const Record> records) {
  write_file_atomic(path, dataset_to_string(records));
}

std::optional<GazeLabel> resolve_label(const Record& r) {
  if (r.gaze) return GazeLabel{*r.gaze / norm(*r.gaze), LabelSource::Direction};
  if (r.eye && r.fixation) return derive_gaze_from_annotation(*r.eye, *r.fixation);
  if (!r.annotations.empty()) return average_annotation(r.annotations);
  return std::nullopt;
}

AdmittedSet admit(std::span<const Record> records) {
  // People sharing a frame, for eye-to-head matching.
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> frames;
  for (std::size_t i = 0; i < records.size(); ++i) {
    frames[{records[i].camera, records[i].frame}].push_back(i);
  }

  AdmittedSet out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    if (!r.has_label()) {
      ++out.unlabeled;
      continue;
    }
    try {
      const GazeLabel label = *resolve_label(r);
      const FeatureVector f = build_feature_vector(r.detections);
      if (r.eye) {
        const auto& members = frames.at({r.camera, r.frame});
        std::vector<PersonDetections> people;
        people.reserve(members.size());
        std::size_t self = 0;
        for (std::size_t m : members) {
          if (m == i) self = people.size();
          people.push_back(records[m].detections);
        }
        const auto matched = match_subject(people, *r.eye);
        if (!matched || *matched != self) {
          out.skipped.push_back({i, ErrorCode::NoSubjectMatch});
          continue;
        }
      }
      out.samples.push_back({f, label, {r.frame, r.camera, r.person, r.sequence}});
      out.source_index.push_back(i);
    } catch (const Error& e) {
      out.skipped.push_back({i, e.code()});
    }
  }
  return out;
}

std::array<std::size_t, kNumSlots> pose_layout_indices(PoseLayout layout) {
  switch (layout) {
    case PoseLayout::Coco18: return {0, 14, 15, 16, 17};
    case PoseLayout::Body25: return {0, 15, 16, 17, 18};
  }
  return {0, 14, 15, 16, 17};
}

PersonDetections from_pose_keypoints(std::span<const double> flat, PoseLayout layout,
                                     std::string person_id) {
  const auto idx = pose_layout_indices(layout);
  PersonDetections p;
  p.person_id = std::move(person_id);
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const std::size_t at = 3 * idx[s];
    if (at + 2 >= flat.size()) {
      throw Error(ErrorCode::InvalidRecord, "pose keypoint list too short for layout");
    }
    KeypointDetection k{flat[at], flat[at + 1], flat[at + 2]};
    if (!(k.c >= 0.0 && k.c <= 1.0)) throw Error(ErrorCode::InvalidRecord, "confidence outside [0, 1]");
    if (k.c == 0.0) k.x = k.y = 0.0;
    p.keypoints[s] = k;
  }
  return p;
}

DatasetSplit split_dataset(std::span<const Record> records, const SplitProportions& props,
                           std::uint64_t seed) {
  if (!(props.train >= 0 && props.val >= 0 && props.test >= 0) ||
      !(props.train + props.val + props.test > 0)) {
    throw Error(ErrorCode::InvalidConfig, "split proportions must be non-negative");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    const std::string key = r.sequence ? "seq:" + r.camera + "/" + *r.sequence
                                       : "rec:" + r.camera + "/" + r.frame + "/" + r.person;
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));

  const double total = static_cast<double>(records.size());
  const double sum = props.train + props.val + props.test;
  const double train_end = total * props.train / sum;
  const double val_end = total * (props.train + props.val) / sum;

  DatasetSplit out;
  std::size_t assigned = 0;
  for (const auto& key : order) {
    const auto& members = groups[key];
    // Place the group by where its midpoint falls on the cumulative scale.
    const double mid = static_cast<double>(assigned) + 0.5 * static_cast<double>(members.size());
    auto& dest = mid < train_end ? out.train : (mid < val_end ? out.val : out.test);
    for (std::size_t i : members) dest.push_back(records[i]);
    assigned += members.size();
  }
  return out;
}

}  // namespace keygaze
