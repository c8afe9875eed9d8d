// SPDX-License-Identifier: Apache-2.0
#include "keygaze/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "keygaze/error.hpp"
#include "keygaze/geom_baseline.hpp"
#include "keygaze/io.hpp"

namespace keygaze {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double number_or_nan(const nlohmann::ordered_json& j) {
  return j.is_null() ? kNaN : j.get<double>();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string join_key(const std::string& camera, const std::string& frame, const std::string& person) {
  return camera + '\x1f' + frame + '\x1f' + person;
}

}  // namespace

double angular_error_deg(Vec2 g, Vec2 g_tilde) {
  const double ng = norm(g);
  const double nt = norm(g_tilde);
  if (ng < 1e-12 || nt < 1e-12) throw Error(ErrorCode::DegenerateVector, "zero-length direction");
  const double c = std::clamp(dot(g, g_tilde) / (ng * nt), -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

std::optional<double> pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 2) return std::nullopt;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double vx = sxx / static_cast<double>(n);
  const double vy = syy / static_cast<double>(n);
  if (vx < 1e-18 || vy < 1e-18) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mean_angular_error(const ModelWeights& w, std::span<const LabeledSample> samples) {
  if (samples.empty()) return kNaN;
  double sum = 0.0;
  for (const auto& s : samples) sum += angular_error_deg(s.label.g, forward(s.features, w).g_unit);
  return sum / static_cast<double>(samples.size());
}

double polar_angle_deg(Vec2 g) { return std::atan2(-g.y + 0.0, g.x) * kRadToDeg; }

const KeypointBucket& bucket_for(const EvalReport& r, int k) {
  if (k < 2 || k > 5) throw Error(ErrorCode::InvalidConfig, "keypoint count outside 2..5");
  return r.per_k[static_cast<std::size_t>(k - 2)];
}

EvalReport summarize(std::span<const ScoredSample> scored, std::size_t n_total) {
  EvalReport r;
  r.n_total = n_total;
  r.n_estimable = scored.size();
  r.coverage = n_total == 0 ? 0.0 : static_cast<double>(r.n_estimable) / static_cast<double>(n_total);

  std::vector<double> errors(scored.size());
  std::array<double, 4> bucket_sum{};
  bool all_sigma = !scored.empty();
  double sum = 0.0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& s = scored[i];
    errors[i] = angular_error_deg(s.label, s.prediction);
    sum += errors[i];
    if (s.k < 2 || s.k > 5) throw Error(ErrorCode::TooFewKeypoints, "scored sample with k outside 2..5");
    const auto b = static_cast<std::size_t>(s.k - 2);
    ++r.per_k[b].count;
    bucket_sum[b] += errors[i];
    all_sigma = all_sigma && s.sigma.has_value();
    r.samples.push_back({polar_angle_deg(s.prediction), s.sigma, errors[i], s.k});
  }
  r.mean_error_deg = scored.empty() ? kNaN : sum / static_cast<double>(scored.size());
  for (std::size_t b = 0; b < 4; ++b) {
    r.per_k[b].mean_error_deg =
        r.per_k[b].count == 0 ? kNaN : bucket_sum[b] / static_cast<double>(r.per_k[b].count);
  }

  if (all_sigma) {
    std::vector<double> sigmas(scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) sigmas[i] = *scored[i].sigma;
    r.pearson_rho = pearson_correlation(sigmas, errors);
    r.rho_zero_variance = !r.pearson_rho && scored.size() >= 2;

    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigmas[a] < sigmas[b]; });
    double prefix = 0.0;
    const double n = static_cast<double>(scored.size());
    for (std::size_t j = 0; j < order.size(); ++j) {
      prefix += errors[order[j]];
      const bool last_of_value = j + 1 == order.size() || sigmas[order[j + 1]] != sigmas[order[j]];
      if (last_of_value) {
        const double cnt = static_cast<double>(j + 1);
        r.cumulative.push_back({sigmas[order[j]], prefix / cnt, cnt / n});
      }
    }
    // Same summation order as the curve, so the endpoint equals the mean exactly.
    r.mean_error_deg = r.cumulative.back().mean_error_deg;
  }
  return r;
}

std::optional<double> cumulative_error_at_quantile(const EvalReport& r, double q) {
  if (r.cumulative.empty()) return std::nullopt;
  std::vector<double> sigmas;
  sigmas.reserve(r.samples.size());
  for (const auto& s : r.samples) sigmas.push_back(*s.sigma);
  std::sort(sigmas.begin(), sigmas.end());
  const double rank = std::ceil(std::clamp(q, 0.0, 1.0) * static_cast<double>(sigmas.size()));
  const std::size_t idx = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  const double threshold = sigmas[idx];
  const auto it = std::lower_bound(r.cumulative.begin(), r.cumulative.end(), threshold,
                                   [](const CurvePoint& p, double t) { return p.sigma_threshold < t; });
  return it->mean_error_deg;
}

std::vector<CurvePoint> cumulative_on_grid(const EvalReport& r, std::size_t points) {
  std::vector<CurvePoint> out;
  if (r.cumulative.empty() || points == 0) return out;
  const double lo = r.cumulative.front().sigma_threshold;
  const double hi = r.cumulative.back().sigma_threshold;
  std::size_t j = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    while (j + 1 < r.cumulative.size() && r.cumulative[j + 1].sigma_threshold <= t) ++j;
    out.push_back({t, r.cumulative[j].mean_error_deg, r.cumulative[j].fraction});
  }
  out.back() = {hi, r.cumulative.back().mean_error_deg, r.cumulative.back().fraction};
  return out;
}

Predictor network_predictor(const ModelWeights& w) {
  return [w](const Record&, const FeatureVector& f) {
    const GazePrediction p = forward(f, w);
    if (!(norm(p.g) >= 1e-12)) throw Error(ErrorCode::DegeneratePrediction, "network output vanishes");
    return Prediction{p.g_unit, p.sigma};
  };
}

Predictor geom_predictor() {
  return [](const Record& r, const FeatureVector&) {
    return Prediction{estimate_gaze_geom(r.detections).gaze, std::nullopt};
  };
}

EvalReport evaluate(const Predictor& predict, std::span<const Record> records) {
  const AdmittedSet admitted = admit(records);
  const std::size_t n_total = admitted.samples.size() + admitted.skipped.size();
  if (n_total == 0) throw Error(ErrorCode::EmptyDataset, "no labeled records");

  std::map<std::string, std::size_t> skipped;
  for (const auto& s : admitted.skipped) ++skipped[std::string(to_string(s.reason))];

  std::vector<ScoredSample> scored;
  scored.reserve(admitted.samples.size());
  for (std::size_t i = 0; i < admitted.samples.size(); ++i) {
    const auto& sample = admitted.samples[i];
    try {
      const Prediction p = predict(records[admitted.source_index[i]], sample.features);
      scored.push_back({sample.label.g, p.g_unit, p.sigma, sample.features.num_detected()});
    } catch (const Error& e) {
      ++skipped[std::string(to_string(e.code()))];
    }
  }
  EvalReport r = summarize(scored, n_total);
  r.skipped = std::move(skipped);
  r.dataset_digest = "sha256:" + sha256_hex(dataset_to_string(records));
  return r;
}

EvalReport evaluate(const ModelWeights& w, std::span<const Record> records) {
  EvalReport r = evaluate(network_predictor(w), records);
  r.model_kind = "net";
  r.model_tag = w.arch.tag();
  return r;
}

std::string prediction_to_json(const PredictionRecord& p) {
  nlohmann::ordered_json j;
  j["frame"] = p.frame;
  j["camera"] = p.camera;
  j["person"] = p.person;
  j["k"] = p.k;
  if (p.g) j["g"] = {p.g->x, p.g->y};
  if (p.sigma) j["sigma"] = *p.sigma;
  if (p.skip) j["skip"] = *p.skip;
  j["model"] = p.model;
  return j.dump();
}

PredictionRecord prediction_from_json(const std::string& line) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("prediction line is not JSON: ") + e.what());
  }
  try {
    PredictionRecord p;
    p.frame = j.at("frame").get<std::string>();
    p.camera = j.value("camera", std::string{});
    p.person = j.at("person").get<std::string>();
    p.k = j.value("k", 0);
    if (j.contains("g")) {
      const auto& g = j.at("g");
      if (!g.is_array() || g.size() != 2) throw Error(ErrorCode::InvalidRecord, "g must be [gx, gy]");
      p.g = Vec2{g[0].get<double>(), g[1].get<double>()};
    }
    if (j.contains("sigma")) p.sigma = j.at("sigma").get<double>();
    if (j.contains("skip")) p.skip = j.at("skip").get<std::string>();
    p.model = j.value("model", std::string{});
    if (!p.g && !p.skip) throw Error(ErrorCode::InvalidRecord, "prediction has neither g nor skip");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("bad prediction record: ") + e.what());
  }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prediction_from_json(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PredictionRecord> predict_records(const Predictor& predict, std::span<const Record> records,
                                              const std::string& model) {
  std::vector<PredictionRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    PredictionRecord p;
    p.frame = r.frame;
    p.camera = r.camera;
    p.person = r.person;
    p.k = r.detections.num_detected();
    p.model = model;
    try {
      const FeatureVector f = build_feature_vector(r.detections);
      const Prediction pred = predict(r, f);
      p.g = pred.g_unit;
      p.sigma = pred.sigma;
    } catch (const Error& e) {
      p.skip = std::string(to_string(e.code()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate_predictions(std::span<const PredictionRecord> predictions,
                                std::span<const Record> records, JoinDiagnostics* diag) {
  std::unordered_map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    by_key.emplace(join_key(p.camera, p.frame, p.person), i);
  }

  const AdmittedSet admitted = admit(records);
  const std::size_t n_total = admitted.samples.size() + admitted.skipped.size();
  if (n_total == 0) throw Error(ErrorCode::EmptyDataset, "no labeled records");

  JoinDiagnostics local;
  std::map<std::string, std::size_t> skipped;
  for (const auto& s : admitted.skipped) ++skipped[std::string(to_string(s.reason))];

  std::set<std::string> labeled_keys;
  for (const auto& r : records) {
    if (r.has_label()) labeled_keys.insert(join_key(r.camera, r.frame, r.person));
  }

  std::vector<ScoredSample> scored;
  for (std::size_t i = 0; i < admitted.samples.size(); ++i) {
    const auto& sample = admitted.samples[i];
    const Record& rec = records[admitted.source_index[i]];
    const auto it = by_key.find(join_key(rec.camera, rec.frame, rec.person));
    if (it == by_key.end()) {
      ++local.missing_predictions;
      ++skipped["MissingPrediction"];
      continue;
    }
    const auto& p = predictions[it->second];
    if (p.skip || !p.g) {
      ++skipped[p.skip.value_or("MissingPrediction")];
      continue;
    }
    if (!(norm(*p.g) >= 1e-12)) {
      ++skipped[std::string(to_string(ErrorCode::DegeneratePrediction))];
      continue;
    }
    scored.push_back({sample.label.g, *p.g / norm(*p.g), p.sigma, sample.features.num_detected()});
  }
  for (const auto& p : predictions) {
    const std::string key = join_key(p.camera, p.frame, p.person);
    if (!labeled_keys.contains(key)) local.unlabeled_keys.push_back(p.camera + "/" + p.frame + "/" + p.person);
  }

  EvalReport r = summarize(scored, n_total);
  r.skipped = std::move(skipped);
  r.dataset_digest = "sha256:" + sha256_hex(dataset_to_string(records));
  if (!predictions.empty()) {
    r.model_tag = predictions.front().model;
    r.model_kind = r.model_tag.rfind("geom", 0) == 0 ? "geom" : "net";
  }
  if (diag) *diag = std::move(local);
  return r;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model_kind"] = r.model_kind;
  j["model_tag"] = r.model_tag;
  j["dataset_digest"] = r.dataset_digest;
  j["n_total"] = r.n_total;
  j["n_estimable"] = r.n_estimable;
  j["coverage"] = r.coverage;
  j["mean_error_deg"] = number_or_null(r.mean_error_deg);
  auto per_k = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < 4; ++b) {
    per_k.push_back({{"k", b + 2},
                     {"count", r.per_k[b].count},
                     {"mean_error_deg", number_or_null(r.per_k[b].mean_error_deg)}});
  }
  j["per_k"] = std::move(per_k);
  j["pearson_rho"] = r.pearson_rho ? nlohmann::ordered_json(*r.pearson_rho) : nlohmann::ordered_json();
  j["rho_zero_variance"] = r.rho_zero_variance;
  auto skipped = nlohmann::ordered_json::object();
  for (const auto& [reason, n] : r.skipped) skipped[reason] = n;
  j["skipped"] = std::move(skipped);
  auto curve = nlohmann::ordered_json::array();
  for (const auto& p : r.cumulative) curve.push_back({p.sigma_threshold, p.mean_error_deg, p.fraction});
  j["cumulative"] = std::move(curve);
  auto samples = nlohmann::ordered_json::array();
  for (const auto& s : r.samples) {
    samples.push_back({s.alpha_deg, s.sigma ? nlohmann::ordered_json(*s.sigma) : nlohmann::ordered_json(),
                       s.error_deg, s.k});
  }
  j["samples"] = std::move(samples);
  return j;
}

EvalReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    EvalReport r;
    r.model_kind = j.at("model_kind").get<std::string>();
    r.model_tag = j.at("model_tag").get<std::string>();
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.n_total = j.at("n_total").get<std::size_t>();
    r.n_estimable = j.at("n_estimable").get<std::size_t>();
    r.coverage = j.at("coverage").get<double>();
    r.mean_error_deg = number_or_nan(j.at("mean_error_deg"));
    const auto& per_k = j.at("per_k");
    if (per_k.size() != 4) throw Error(ErrorCode::InvalidRecord, "per_k must have four buckets");
    for (std::size_t b = 0; b < 4; ++b) {
      r.per_k[b].count = per_k[b].at("count").get<std::size_t>();
      r.per_k[b].mean_error_deg = number_or_nan(per_k[b].at("mean_error_deg"));
    }
    if (!j.at("pearson_rho").is_null()) r.pearson_rho = j.at("pearson_rho").get<double>();
    r.rho_zero_variance = j.at("rho_zero_variance").get<bool>();
    for (const auto& [reason, n] : j.at("skipped").items()) r.skipped[reason] = n.get<std::size_t>();
    for (const auto& p : j.at("cumulative")) {
      r.cumulative.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    for (const auto& s : j.at("samples")) {
      PolarRecord rec{s[0].get<double>(), std::nullopt, s[2].get<double>(), s[3].get<int>()};
      if (!s[1].is_null()) rec.sigma = s[1].get<double>();
      r.samples.push_back(rec);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("bad report: ") + e.what());
  }
}

std::string samples_csv(const EvalReport& r) {
  std::string out = "alpha_deg,sigma,error_deg,k\n";
  for (const auto& s : r.samples) {
    out += fmt("%.10g", s.alpha_deg) + ',' + (s.sigma ? fmt("%.10g", *s.sigma) : std::string{}) + ',' +
           fmt("%.10g", s.error_deg) + ',' + std::to_string(s.k) + '\n';
  }
  return out;
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::string out = "sigma_threshold,mean_error_deg,fraction\n";
  for (const auto& p : curve) {
    out += fmt("%.10g", p.sigma_threshold) + ',' + fmt("%.10g", p.mean_error_deg) + ',' +
           fmt("%.10g", p.fraction) + '\n';
  }
  return out;
}

ComparisonTable compare_models(std::span<const EvalReport> reports, std::span<const std::string> labels) {
  ComparisonTable t;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string label = i < labels.size() ? labels[i] : r.model_tag;
    t.rows.push_back({label, r.n_total, r.coverage, r.mean_error_deg, r.pearson_rho});
  }
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].dataset_digest != reports[0].dataset_digest) {
      t.warnings.push_back("dataset digests differ: " + t.rows[0].label + " vs " + t.rows[i].label);
    }
  }

  const bool same_model = std::all_of(reports.begin(), reports.end(), [&](const EvalReport& r) {
    return r.model_kind == reports[0].model_kind && r.model_tag == reports[0].model_tag;
  });
  if (reports.size() >= 2 && same_model) {
    const double n = static_cast<double>(reports.size());
    auto mean_sd = [&](auto field) {
      double m = 0.0;
      for (const auto& row : t.rows) m += field(row);
      m /= n;
      double ss = 0.0;
      for (const auto& row : t.rows) ss += (field(row) - m) * (field(row) - m);
      return std::pair{m, std::sqrt(ss / (n - 1.0))};
    };
    const auto [tot_m, tot_s] = mean_sd([](const ComparisonRow& r) { return static_cast<double>(r.n_total); });
    const auto [cov_m, cov_s] = mean_sd([](const ComparisonRow& r) { return r.coverage; });
    const auto [err_m, err_s] = mean_sd([](const ComparisonRow& r) { return r.mean_error_deg; });
    ComparisonRow mean{"mean", static_cast<std::size_t>(std::llround(tot_m)), cov_m, err_m, std::nullopt};
    ComparisonRow spread{"std", static_cast<std::size_t>(std::llround(tot_s)), cov_s, err_s, std::nullopt};
    if (std::all_of(t.rows.begin(), t.rows.end(), [](const ComparisonRow& r) { return r.pearson_rho.has_value(); })) {
      const auto [rho_m, rho_s] = mean_sd([](const ComparisonRow& r) { return *r.pearson_rho; });
      mean.pearson_rho = rho_m;
      spread.pearson_rho = rho_s;
    }
    t.mean = mean;
    t.spread = spread;
  }
  return t;
}

std::string comparison_text(const ComparisonTable& t) {
  std::size_t width = std::string_view("mean+-std").size();
  for (const auto& r : t.rows) width = std::max(width, r.label.size());

  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  auto line = [&](const ComparisonRow& r) {
    char buf[160];
    const std::string rho = r.pearson_rho ? fmt("%8.3f", *r.pearson_rho) : std::string("     n/a");
    std::snprintf(buf, sizeof buf, "%8zu  %8.4f  %10.3f  %s\n", r.n_total, r.coverage, r.mean_error_deg,
                  rho.c_str());
    return pad(r.label) + buf;
  };

  std::string out = pad("model") + " n_total  coverage  error_deg       rho\n";
  for (const auto& r : t.rows) out += line(r);
  if (t.mean && t.spread) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%8zu  %8.4f  %5.2f+-%-4.2f", t.mean->n_total, t.mean->coverage,
                  t.mean->mean_error_deg, t.spread->mean_error_deg);
    out += pad("mean+-std") + buf;
    if (t.mean->pearson_rho) {
      std::snprintf(buf, sizeof buf, "  %.3f+-%.3f", *t.mean->pearson_rho, *t.spread->pearson_rho);
      out += buf;
    }
    out += '\n';
  }
  for (const auto& w : t.warnings) out += "warning: " + w + '\n';
  return out;
}

nlohmann::ordered_json comparison_json(const ComparisonTable& t) {
  auto row_json = [](const ComparisonRow& r) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["n_total"] = r.n_total;
    j["coverage"] = r.coverage;
    j["mean_error_deg"] = number_or_null(r.mean_error_deg);
    j["pearson_rho"] = r.pearson_rho ? nlohmann::ordered_json(*r.pearson_rho) : nlohmann::ordered_json();
    return j;
  };
  nlohmann::ordered_json j;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) rows.push_back(row_json(r));
  j["rows"] = std::move(rows);
  j["mean"] = t.mean ? row_json(*t.mean) : nlohmann::ordered_json();
  j["spread"] = t.spread ? row_json(*t.spread) : nlohmann::ordered_json();
  j["warnings"] = t.warnings;
  return j;
}

}  // namespace keygaze
