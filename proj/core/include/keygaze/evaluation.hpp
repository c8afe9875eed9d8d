// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Angular error, uncertainty correlation, cumulative-error curves,
 *         per-keypoint-count breakdowns and model comparison tables.
 */
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keygaze/dataset.hpp"
#include "keygaze/network.hpp"

namespace keygaze {

/// Angle between two directions in degrees, in [0, 180]. Throws
/// Error{DegenerateVector} if either vector is shorter than 1e-12.
double angular_error_deg(Vec2 g, Vec2 g_tilde);

/// Pearson correlation; empty when lengths differ, fewer than two points, or
/// either population variance is below 1e-18.
std::optional<double> pearson_correlation(std::span<const double> xs, std::span<const double> ys);

/// Mean angular error of a model over labeled samples.
double mean_angular_error(const ModelWeights& w, std::span<const LabeledSample> samples);

/// Direction of the gaze on a polar plot, y axis up: atan2(-g_y, g_x) in
/// degrees.
double polar_angle_deg(Vec2 g);

/// One evaluated prediction.
struct ScoredSample {
  Vec2 label;
  Vec2 prediction;
  std::optional<double> sigma;
  int k = 0;  ///< detected keypoints
};

struct KeypointBucket {
  std::size_t count = 0;
  double mean_error_deg = 0.0;  ///< NaN when count is 0
};

struct CurvePoint {
  double sigma_threshold = 0.0;
  double mean_error_deg = 0.0;
  double fraction = 0.0;
};

struct PolarRecord {
  double alpha_deg = 0.0;
  std::optional<double> sigma;
  double error_deg = 0.0;
  int k = 0;
};

struct EvalReport {
  std::string model_kind;  ///< "net" or "geom"
  std::string model_tag;   ///< arch tag or baseline name
  std::string dataset_digest;
  std::size_t n_total = 0;
  std::size_t n_estimable = 0;
  double coverage = 0.0;
  double mean_error_deg = 0.0;  ///< NaN when nothing is estimable
  std::array<KeypointBucket, 4> per_k{};  ///< k = 2, 3, 4, 5
  std::optional<double> pearson_rho;
  /// True when a correlation was attempted but one side had no variance.
  bool rho_zero_variance = false;
  /// Sorted by threshold; one point per distinct sigma.
  std::vector<CurvePoint> cumulative;
  std::vector<PolarRecord> samples;
  std::map<std::string, std::size_t> skipped;  ///< reason -> count
};

const KeypointBucket& bucket_for(const EvalReport& r, int k);

/// Aggregates scored samples. `n_total` counts every labeled sample,
/// estimable or not.
EvalReport summarize(std::span<const ScoredSample> scored, std::size_t n_total);

/// Mean error of samples whose sigma is at most the q-quantile of sigma
/// (nearest-rank). Empty without uncertainties.
std::optional<double> cumulative_error_at_quantile(const EvalReport& r, double q);

/// Cumulative curve resampled on a fixed sigma grid, for plotting.
std::vector<CurvePoint> cumulative_on_grid(const EvalReport& r, std::size_t points);

struct Prediction {
  Vec2 g_unit;
  std::optional<double> sigma;
};

/// Produces a prediction for an admitted record or throws keygaze::Error
/// (the code becomes the skip reason).
using Predictor = std::function<Prediction(const Record&, const FeatureVector&)>;

Predictor network_predictor(const ModelWeights& w);
Predictor geom_predictor();

/// Runs admission (label resolution, keypoint rule, subject matching) and the
/// predictor over every labeled record.
EvalReport evaluate(const Predictor& predict, std::span<const Record> records);
EvalReport evaluate(const ModelWeights& w, std::span<const Record> records);

/// One line of a prediction file.
struct PredictionRecord {
  std::string frame;
  std::string camera;
  std::string person;
  int k = 0;
  std::optional<Vec2> g;
  std::optional<double> sigma;
  std::optional<std::string> skip;
  std::string model;
};

std::string prediction_to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const std::string& line);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Runs a predictor over every record (labeled or not).
std::vector<PredictionRecord> predict_records(const Predictor& predict, std::span<const Record> records,
                                              const std::string& model);

struct JoinDiagnostics {
  std::size_t missing_predictions = 0;       ///< labeled records with no prediction line
  std::vector<std::string> unlabeled_keys;   ///< camera/frame/person of predictions without a labeled record
};

/// Joins prediction lines to dataset records on (camera, frame, person).
EvalReport evaluate_predictions(std::span<const PredictionRecord> predictions,
                                std::span<const Record> records, JoinDiagnostics* diag = nullptr);

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::ordered_json& j);
/// One row per estimable sample: alpha_deg,sigma,error_deg,k
std::string samples_csv(const EvalReport& r);
std::string curve_csv(std::span<const CurvePoint> curve);

struct ComparisonRow {
  std::string label;
  std::size_t n_total = 0;
  double coverage = 0.0;
  double mean_error_deg = 0.0;
  std::optional<double> pearson_rho;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  /// Mean and sample standard deviation across rows; present when all
  /// reports describe the same kind of model.
  std::optional<ComparisonRow> mean;
  std::optional<ComparisonRow> spread;
  std::vector<std::string> warnings;
};

ComparisonTable compare_models(std::span<const EvalReport> reports, std::span<const std::string> labels);
std::string comparison_text(const ComparisonTable& t);
nlohmann::ordered_json comparison_json(const ComparisonTable& t);

}  // namespace keygaze
