// SPDX-License-Identifier: Apache-2.0
#include "keygaze/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "keygaze/error.hpp"
#include "keygaze/random.hpp"

namespace keygaze {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, "field '" + field + "': " + why);
}

void check_range(const Range& r, const std::string& field) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max)) bad_field(field, "bounds must be finite");
  if (r.min > r.max) bad_field(field, "min is greater than max");
}

ordered_json range_json(const Range& r) { return ordered_json::array({r.min, r.max}); }

Range read_range(const ordered_json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    bad_field(field, "expected [min, max]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

}  // namespace

void SynthParams::validate() const {
  if (n_samples < 1) bad_field("n_samples", "must be at least 1");
  check_range(yaw_deg, "yaw_deg");
  check_range(pitch_deg, "pitch_deg");
  check_range(roll_deg, "roll_deg");
  check_range(scale_px, "scale_px");
  if (!(scale_px.min > 0.0)) bad_field("scale_px", "must be positive");
  if (!(image_width > 0.0)) bad_field("image_width", "must be positive");
  if (!(image_height > 0.0)) bad_field("image_height", "must be positive");
  if (!(coord_noise_px >= 0.0)) bad_field("coord_noise_px", "must be non-negative");
  if (!(visibility_threshold >= -1.0 && visibility_threshold < 1.0)) {
    bad_field("visibility_threshold", "must lie in [-1, 1)");
  }
  if (!(conf_noise >= 0.0)) bad_field("conf_noise", "must be non-negative");
  if (!(conf_min > 0.0 && conf_min <= 1.0)) bad_field("conf_min", "must lie in (0, 1]");
  if (!(miss_prob >= 0.0 && miss_prob < 1.0)) bad_field("miss_prob", "must lie in [0, 1)");
  if (!(ghost_prob >= 0.0 && ghost_prob <= 1.0)) bad_field("ghost_prob", "must lie in [0, 1]");
  if (!(ghost_offset >= 0.0)) bad_field("ghost_offset", "must be non-negative");
  if (!(ghost_conf_max > 0.0 && ghost_conf_max <= 1.0)) bad_field("ghost_conf_max", "must lie in (0, 1]");
}

ordered_json to_json(const SynthParams& p) {
  ordered_json j;
  j["n_samples"] = p.n_samples;
  j["seed"] = p.seed;
  j["yaw_deg"] = range_json(p.yaw_deg);
  j["pitch_deg"] = range_json(p.pitch_deg);
  j["roll_deg"] = range_json(p.roll_deg);
  j["scale_px"] = range_json(p.scale_px);
  j["image_width"] = p.image_width;
  j["image_height"] = p.image_height;
  j["coord_noise_px"] = p.coord_noise_px;
  j["visibility_threshold"] = p.visibility_threshold;
  j["conf_base"] = p.conf_base;
  j["conf_slope"] = p.conf_slope;
  j["conf_noise"] = p.conf_noise;
  j["conf_min"] = p.conf_min;
  j["miss_prob"] = p.miss_prob;
  j["ghost_prob"] = p.ghost_prob;
  j["ghost_offset"] = p.ghost_offset;
  j["ghost_conf_max"] = p.ghost_conf_max;
  j["distortion"] = p.distortion;
  j["distortion_k1"] = p.distortion_k1;
  j["camera"] = p.camera;
  ordered_json head = ordered_json::array();
  for (const auto& v : p.head.points) head.push_back({v.x, v.y, v.z});
  j["head"] = std::move(head);
  return j;
}

SynthParams synth_params_from_json(const ordered_json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "synth config must be a JSON object");
  static const char* const kKnown[] = {
      "n_samples", "seed", "yaw_deg", "pitch_deg", "roll_deg", "scale_px", "image_width",
      "image_height", "coord_noise_px", "visibility_threshold", "conf_base", "conf_slope",
      "conf_noise", "conf_min", "miss_prob", "ghost_prob", "ghost_offset", "ghost_conf_max",
      "distortion", "distortion_k1", "camera", "head"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown),
                     [&](const char* k) { return key == k; }) == std::end(kKnown)) {
      bad_field(key, "unknown field");
    }
  }

  SynthParams p;
  auto number = [&](const char* field, double& out) {
    if (!j.contains(field)) return;
    if (!j[field].is_number()) bad_field(field, "expected a number");
    out = j[field].get<double>();
  };
  try {
    if (j.contains("n_samples")) {
      if (!j["n_samples"].is_number_integer() || j["n_samples"].get<long long>() < 1) {
        bad_field("n_samples", "must be a positive integer");
      }
      p.n_samples = j["n_samples"].get<std::size_t>();
    }
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) bad_field("seed", "must be a non-negative integer");
      p.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("yaw_deg")) p.yaw_deg = read_range(j["yaw_deg"], "yaw_deg");
    if (j.contains("pitch_deg")) p.pitch_deg = read_range(j["pitch_deg"], "pitch_deg");
    if (j.contains("roll_deg")) p.roll_deg = read_range(j["roll_deg"], "roll_deg");
    if (j.contains("scale_px")) p.scale_px = read_range(j["scale_px"], "scale_px");
    number("image_width", p.image_width);
    number("image_height", p.image_height);
    number("coord_noise_px", p.coord_noise_px);
    number("visibility_threshold", p.visibility_threshold);
    number("conf_base", p.conf_base);
    number("conf_slope", p.conf_slope);
    number("conf_noise", p.conf_noise);
    number("conf_min", p.conf_min);
    number("miss_prob", p.miss_prob);
    number("ghost_prob", p.ghost_prob);
    number("ghost_offset", p.ghost_offset);
    number("ghost_conf_max", p.ghost_conf_max);
    number("distortion_k1", p.distortion_k1);
    if (j.contains("distortion")) {
      if (!j["distortion"].is_boolean()) bad_field("distortion", "expected true or false");
      p.distortion = j["distortion"].get<bool>();
    }
    if (j.contains("camera")) {
      if (!j["camera"].is_string()) bad_field("camera", "expected a string");
      p.camera = j["camera"].get<std::string>();
    }
    if (j.contains("head")) {
      const auto& h = j["head"];
      if (!h.is_array() || h.size() != kNumSlots) bad_field("head", "expected 5 [x, y, z] points");
      for (std::size_t s = 0; s < kNumSlots; ++s) {
        if (!h[s].is_array() || h[s].size() != 3) bad_field("head", "expected 5 [x, y, z] points");
        p.head.points[s] = {h[s][0].get<double>(), h[s][1].get<double>(), h[s][2].get<double>()};
      }
    }
  } catch (const ordered_json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("synth config: ") + e.what());
  }
  p.validate();
  return p;
}

Vec3 Rotation::apply(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Rotation pose_rotation(const Pose& pose) {
  const double cy = std::cos(pose.yaw_deg * kDeg), sy = std::sin(pose.yaw_deg * kDeg);
  const double cp = std::cos(pose.pitch_deg * kDeg), sp = std::sin(pose.pitch_deg * kDeg);
  const double cr = std::cos(pose.roll_deg * kDeg), sr = std::sin(pose.roll_deg * kDeg);
  // Ry(yaw): forward (0,0,1) -> (sin yaw, 0, cos yaw)
  const std::array<double, 9> ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  // Rx(pitch): forward (0,0,1) -> (0, sin pitch, cos pitch)
  const std::array<double, 9> rx{1, 0, 0, 0, cp, sp, 0, -sp, cp};
  const std::array<double, 9> rz{cr, -sr, 0, sr, cr, 0, 0, 0, 1};
  auto mul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> c{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) c[3 * i + j] += a[3 * i + k] * b[3 * k + j];
    return c;
  };
  return {mul(rz, mul(rx, ry))};
}

ProjectedHead project_head(const Pose& pose, double scale, Vec2 center, const HeadModel3D& head) {
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidConfig, "scale must be positive");
  if (!std::isfinite(pose.yaw_deg) || !std::isfinite(pose.pitch_deg) ||
      !std::isfinite(pose.roll_deg)) {
    throw Error(ErrorCode::InvalidConfig, "pose angles must be finite");
  }
  const Rotation r = pose_rotation(pose);
  const Vec3 fwd = r.apply({0.0, 0.0, 1.0});
  const Vec2 g{fwd.x, -fwd.y};
  const double len = norm(g);
  if (len < 1e-9) throw Error(ErrorCode::DegenerateLabel, "forward axis is along the camera axis");

  ProjectedHead out;
  out.gaze = g / len;
  out.scale = scale;
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    const Vec3 p = r.apply(head.points[s]);
    out.points[s] = center + scale * Vec2{p.x, -p.y};
    out.facing[s] = r.apply(normalized(head.points[s])).z;
  }
  return out;
}

std::optional<PersonDetections> apply_detector_model(const ProjectedHead& head,
                                                     const SynthParams& params, Rng& rng) {
  const Vec2 image_center{0.5 * params.image_width, 0.5 * params.image_height};
  const double half_diag = 0.5 * std::hypot(params.image_width, params.image_height);

  PersonDetections det;
  int visible = 0;
  for (std::size_t s = 0; s < kNumSlots; ++s) {
    // Draw every random number for every slot, so that one slot's outcome
    // never shifts the stream seen by the next.
    const double nx = rng.normal();
    const double ny = rng.normal();
    const double nc = rng.normal();
    const double miss = rng.uniform();
    const double ghost = rng.uniform();
    const double gx = rng.normal();
    const double gy = rng.normal();
    const double gc = rng.uniform(params.conf_min, std::max(params.conf_min, params.ghost_conf_max));
    if (head.facing[s] <= params.visibility_threshold) continue;

    Vec2 p = head.points[s];
    double c = params.conf_base + params.conf_slope * head.facing[s] + params.conf_noise * nc;
    if (miss < params.miss_prob) {
      if (ghost >= params.ghost_prob) continue;
      p += Vec2{gx, gy} * (params.ghost_offset * head.scale);
      c = gc;
    }
    if (params.distortion) {
      const Vec2 u = (p - image_center) / half_diag;
      p = image_center + u * (1.0 + params.distortion_k1 * dot(u, u)) * half_diag;
    }
    p += Vec2{nx, ny} * params.coord_noise_px;
    det.keypoints[s] = {p.x, p.y, std::clamp(c, params.conf_min, 1.0)};
    ++visible;
  }
  if (visible < kMinKeypoints) return std::nullopt;
  return det;
}

std::size_t label_quadrant(Vec2 g) {
  const double a = label_angle_deg(g);
  if (a >= 0.0 && a < 90.0) return 0;
  if (a >= 90.0) return 1;
  if (a < -90.0) return 2;
  return 3;
}

SynthResult generate_dataset(const SynthParams& params) {
  params.validate();
  SynthResult out;
  out.records.reserve(params.n_samples);
  for (std::size_t i = 0; i < params.n_samples; ++i) {
    Rng rng(derive_seed(params.seed, i));
    for (;;) {
      Pose pose{rng.uniform(params.yaw_deg.min, params.yaw_deg.max),
                rng.uniform(params.pitch_deg.min, params.pitch_deg.max),
                rng.uniform(params.roll_deg.min, params.roll_deg.max)};
      const double scale = rng.uniform(params.scale_px.min, params.scale_px.max);
      const double margin = 1.5 * scale;
      const Vec2 center{
          rng.uniform(std::min(margin, 0.5 * params.image_width),
                      std::max(params.image_width - margin, 0.5 * params.image_width)),
          rng.uniform(std::min(margin, 0.5 * params.image_height),
                      std::max(params.image_height - margin, 0.5 * params.image_height))};

      ProjectedHead head;
      try {
        head = project_head(pose, scale, center, params.head);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateLabel) throw;
        ++out.stats.rejected_label;
        continue;
      }
      auto det = apply_detector_model(head, params, rng);
      if (!det) {
        ++out.stats.rejected_visibility;
        continue;
      }

      Record r;
      char frame[32];
      std::snprintf(frame, sizeof frame, "%07zu", i);
      r.frame = frame;
      r.camera = params.camera;
      r.person = "0";
      r.detections = *det;
      r.detections.person_id = r.person;
      r.gaze = head.gaze;
      r.pose = std::array<double, 3>{pose.yaw_deg, pose.pitch_deg, pose.roll_deg};
      ++out.stats.quadrant_histogram[label_quadrant(head.gaze)];
      ++out.stats.keypoint_histogram[static_cast<std::size_t>(det->num_detected())];
      out.records.push_back(std::move(r));
      break;
    }
  }
  return out;
}

ordered_json synth_manifest(const SynthParams& params, const SynthStats& stats) {
  ordered_json j;
  j["params"] = to_json(params);
  j["n_samples"] = params.n_samples;
  j["seed"] = params.seed;
  j["rejected"] = {{"degenerate_label", stats.rejected_label},
                   {"too_few_visible", stats.rejected_visibility}};
  j["quadrant_histogram"] = {{"[0,90)", stats.quadrant_histogram[0]},
                             {"[90,180]", stats.quadrant_histogram[1]},
                             {"[-180,-90)", stats.quadrant_histogram[2]},
                             {"[-90,0)", stats.quadrant_histogram[3]}};
  ordered_json k;
  for (std::size_t n = kMinKeypoints; n <= kNumSlots; ++n) {
    k[std::to_string(n)] = stats.keypoint_histogram[n];
  }
  j["keypoint_histogram"] = std::move(k);
  return j;
}

}  // namespace keygaze
