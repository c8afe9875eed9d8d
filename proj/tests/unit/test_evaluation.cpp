// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "keygaze/error.hpp"
#include "keygaze/evaluation.hpp"
#include "keygaze/synthetic.hpp"
#include "test_support.hpp"

namespace keygaze {
namespace {

Vec2 deg_dir(double deg) {
  const double r = deg * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

TEST(AngularError, Examples) {
  EXPECT_EQ(angular_error_deg({1, 0}, {1, 0}), 0.0);
  EXPECT_NEAR(angular_error_deg({1, 0}, {0, 1}), 90.0, 1e-12);
  EXPECT_NEAR(angular_error_deg({1, 0}, {-1, 0}), 180.0, 1e-12);
  EXPECT_NEAR(angular_error_deg({1, 0}, {1, 1e-9}), 0.0, 1e-5);
  EXPECT_FALSE(std::isnan(angular_error_deg({0.6, 0.8}, {0.6, 0.8})));
  try {
    angular_error_deg({1, 0}, {0, 1e-13});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVector);
  }
}

TEST(AngularError, SymmetricAndScaleInvariant) {
  Rng rng(2);
  for (int i = 0; i < 5000; ++i) {
    const Vec2 a{rng.normal(), rng.normal()};
    const Vec2 b{rng.normal(), rng.normal()};
    const double lambda = std::exp(rng.uniform(-5, 5));
    const double e = angular_error_deg(a, b);
    EXPECT_NEAR(e, angular_error_deg(b, a), 1e-9);
    EXPECT_NEAR(e, angular_error_deg(a, lambda * b), 1e-9);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 180.0);
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> xs{1, 2, 3, 4, 7};
  std::vector<double> up, down;
  for (double x : xs) {
    up.push_back(2 * x + 1);
    down.push_back(-x);
  }
  EXPECT_NEAR(*pearson_correlation(xs, up), 1.0, 1e-15);
  EXPECT_NEAR(*pearson_correlation(xs, down), -1.0, 1e-15);
  const std::vector<double> flat(5, 3.0);
  EXPECT_FALSE(pearson_correlation(xs, flat));
  EXPECT_FALSE(pearson_correlation(std::vector<double>{1.0}, std::vector<double>{2.0}));
  EXPECT_FALSE(pearson_correlation(xs, std::vector<double>{1, 2}));
}

TEST(Summarize, ThreeSampleHandExample) {
  const std::vector<ScoredSample> s{
      {{1, 0}, deg_dir(10), 0.1, 5}, {{1, 0}, deg_dir(20), 0.2, 4}, {{1, 0}, deg_dir(30), 0.3, 2}};
  const EvalReport r = summarize(s, 4);
  EXPECT_NEAR(*r.pearson_rho, 1.0, 1e-9);
  ASSERT_EQ(r.cumulative.size(), 3u);
  const double want[3][3] = {{0.1, 10, 1.0 / 3}, {0.2, 15, 2.0 / 3}, {0.3, 20, 1.0}};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(r.cumulative[i].sigma_threshold, want[i][0]);
    EXPECT_NEAR(r.cumulative[i].mean_error_deg, want[i][1], 1e-9);
    EXPECT_NEAR(r.cumulative[i].fraction, want[i][2], 1e-15);
  }
  EXPECT_EQ(r.n_total, 4u);
  EXPECT_EQ(r.n_estimable, 3u);
  EXPECT_DOUBLE_EQ(r.coverage, 0.75);
  EXPECT_EQ(bucket_for(r, 5).count, 1u);
  EXPECT_EQ(bucket_for(r, 3).count, 0u);
  EXPECT_TRUE(std::isnan(bucket_for(r, 3).mean_error_deg));
  EXPECT_NEAR(bucket_for(r, 2).mean_error_deg, 30.0, 1e-9);
  EXPECT_NEAR(*cumulative_error_at_quantile(r, 0.5), 15.0, 1e-9);
  EXPECT_NEAR(*cumulative_error_at_quantile(r, 0.34), 15.0, 1e-9);
  EXPECT_NEAR(*cumulative_error_at_quantile(r, 0.33), 10.0, 1e-9);
}

TEST(Summarize, PerfectPredictionsHaveUndefinedRho) {
  std::vector<ScoredSample> s;
  for (int i = 0; i < 10; ++i) s.push_back({deg_dir(i * 30.0), deg_dir(i * 30.0), 0.1 * (i + 1), 3});
  const EvalReport r = summarize(s, 10);
  EXPECT_NEAR(r.mean_error_deg, 0.0, 1e-6);
  EXPECT_FALSE(r.pearson_rho);
  EXPECT_TRUE(r.rho_zero_variance);
  const auto j = report_to_json(r);
  EXPECT_TRUE(j["pearson_rho"].is_null());
  EXPECT_TRUE(j["rho_zero_variance"].get<bool>());
}

TEST(SummarizeProperties, CurveEndpointPartitionAndMonotoneFraction) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredSample> s;
    const int n = 1 + static_cast<int>(rng.below(300));
    for (int i = 0; i < n; ++i) {
      // Coarse sigmas so that ties occur.
      s.push_back({test::random_unit(rng), test::random_unit(rng), std::round(rng.uniform(0, 20)) / 10.0,
                   2 + static_cast<int>(rng.below(4))});
    }
    const EvalReport r = summarize(s, static_cast<std::size_t>(n) + rng.below(10));
    EXPECT_EQ(r.cumulative.back().mean_error_deg, r.mean_error_deg);
    EXPECT_EQ(r.cumulative.back().fraction, 1.0);
    for (std::size_t i = 1; i < r.cumulative.size(); ++i) {
      EXPECT_LT(r.cumulative[i - 1].sigma_threshold, r.cumulative[i].sigma_threshold);
      EXPECT_LE(r.cumulative[i - 1].fraction, r.cumulative[i].fraction);
    }
    std::size_t total = 0;
    for (int k = 2; k <= 5; ++k) total += bucket_for(r, k).count;
    EXPECT_EQ(total, r.n_estimable);
    EXPECT_GE(r.coverage, 0.0);
    EXPECT_LE(r.coverage, 1.0);
    EXPECT_EQ(r.samples.size(), r.n_estimable);

    const auto grid = cumulative_on_grid(r, 11);
    ASSERT_EQ(grid.size(), 11u);
    EXPECT_EQ(grid.back().mean_error_deg, r.mean_error_deg);
  }
}

TEST(Summarize, PolarAngleConvention) {
  EXPECT_NEAR(polar_angle_deg({0, -1}), 90.0, 1e-12);
  EXPECT_NEAR(polar_angle_deg({-1, 0}), 180.0, 1e-12);
  const std::vector<ScoredSample> s{{{1, 0}, {0, 1}, std::nullopt, 3}};
  const EvalReport r = summarize(s, 1);
  EXPECT_NEAR(r.samples[0].alpha_deg, -90.0, 1e-12);
  EXPECT_TRUE(r.cumulative.empty());
  EXPECT_FALSE(r.pearson_rho);
  EXPECT_FALSE(r.rho_zero_variance);
}

std::vector<Record> small_dataset() {
  SynthParams p;
  p.n_samples = 200;
  p.seed = 3;
  auto recs = generate_dataset(p).records;
  // One record below the keypoint rule and one without a label.
  Record few = recs[0];
  few.frame = "few";
  for (std::size_t s = 1; s < kNumSlots; ++s) few.detections.keypoints[s] = {};
  few.detections.keypoints[0] = {10, 10, 0.9};
  recs.push_back(few);
  Record unlabeled = recs[1];
  unlabeled.frame = "unlabeled";
  unlabeled.gaze.reset();
  recs.push_back(unlabeled);
  return recs;
}

TEST(Evaluate, OraclePredictorScoresZero) {
  const auto recs = small_dataset();
  const Predictor oracle = [](const Record& r, const FeatureVector&) { return Prediction{*r.gaze, 0.5}; };
  const EvalReport rep = evaluate(oracle, recs);
  EXPECT_EQ(rep.n_total, 201u);
  EXPECT_EQ(rep.n_estimable, 200u);
  EXPECT_EQ(rep.skipped.at("TooFewKeypoints"), 1u);
  EXPECT_NEAR(rep.mean_error_deg, 0.0, 1e-5);
  EXPECT_TRUE(rep.rho_zero_variance);
  EXPECT_EQ(rep.dataset_digest.rfind("sha256:", 0), 0u);

  // Byte-identical report documents for identical inputs.
  EXPECT_EQ(report_to_json(rep).dump(), report_to_json(evaluate(oracle, recs)).dump());
  EXPECT_THROW(evaluate(oracle, std::span<const Record>{}), Error);
}

TEST(Evaluate, PredictionFilesJoinOnCameraFrameAndPerson) {
  const auto recs = small_dataset();
  const ModelWeights w = init_weights(1);
  const auto direct = evaluate(w, recs);

  auto preds = predict_records(network_predictor(w), recs, w.arch.tag());
  ASSERT_EQ(preds.size(), recs.size());
  EXPECT_EQ(preds[200].skip, "TooFewKeypoints");
  EXPECT_FALSE(preds[200].g);

  // Through the text format and back.
  std::vector<PredictionRecord> parsed;
  for (const auto& p : preds) parsed.push_back(prediction_from_json(prediction_to_json(p)));
  JoinDiagnostics diag;
  const auto joined = evaluate_predictions(parsed, recs, &diag);
  EXPECT_EQ(report_to_json(joined)["mean_error_deg"], report_to_json(direct)["mean_error_deg"]);
  EXPECT_EQ(joined.model_kind, "net");
  EXPECT_EQ(diag.missing_predictions, 0u);
  ASSERT_EQ(diag.unlabeled_keys.size(), 1u);
  EXPECT_EQ(diag.unlabeled_keys[0], "synth/unlabeled/0");

  // Drop two predictions and add one for an unknown key.
  parsed.erase(parsed.begin(), parsed.begin() + 2);
  PredictionRecord stray = parsed.back();
  stray.frame = "nowhere";
  parsed.push_back(stray);
  const auto partial = evaluate_predictions(parsed, recs, &diag);
  EXPECT_EQ(diag.missing_predictions, 2u);
  EXPECT_EQ(partial.skipped.at("MissingPrediction"), 2u);
  EXPECT_EQ(partial.n_estimable, 198u);
  EXPECT_EQ(diag.unlabeled_keys.size(), 2u);
}

TEST(Evaluate, GeomPredictorSkipsWithoutNoseOrEyes) {
  const auto recs = small_dataset();
  const auto preds = predict_records(geom_predictor(), recs, "geom");
  const auto rep = evaluate_predictions(preds, recs);
  EXPECT_EQ(rep.model_kind, "geom");
  EXPECT_LT(rep.n_estimable, rep.n_total);
  EXPECT_FALSE(rep.pearson_rho);
  for (const auto& p : preds) {
    if (p.g) EXPECT_FALSE(p.sigma);
  }
}

TEST(ReportJson, RoundTrip) {
  const auto recs = small_dataset();
  const EvalReport r = evaluate(init_weights(2), recs);
  const EvalReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(report_to_json(back).dump(), report_to_json(r).dump());

  const std::string csv = samples_csv(r);
  EXPECT_EQ(csv.rfind("alpha_deg,sigma,error_deg,k\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.n_estimable + 1);
}

EvalReport fake_report(const std::string& tag, double err, const std::string& digest, double rho) {
  EvalReport r;
  r.model_kind = "net";
  r.model_tag = tag;
  r.dataset_digest = digest;
  r.n_total = 100;
  r.n_estimable = 90;
  r.coverage = 0.9;
  r.mean_error_deg = err;
  r.pearson_rho = rho;
  return r;
}

TEST(CompareModels, RowsInOrderWithMeanAndSpread) {
  const std::vector<EvalReport> three{fake_report("a", 10, "d", 0.1), fake_report("a", 12, "d", 0.2),
                                      fake_report("a", 14, "d", 0.3)};
  const std::vector<std::string> labels{"s1", "s2", "s3"};
  const ComparisonTable t = compare_models(three, labels);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[1].label, "s2");
  EXPECT_EQ(t.rows[1].mean_error_deg, 12.0);
  ASSERT_TRUE(t.mean && t.spread);
  EXPECT_DOUBLE_EQ(t.mean->mean_error_deg, 12.0);
  EXPECT_DOUBLE_EQ(t.spread->mean_error_deg, 2.0);
  EXPECT_NEAR(*t.mean->pearson_rho, 0.2, 1e-15);
  EXPECT_TRUE(t.warnings.empty());
  EXPECT_NE(comparison_text(t).find("mean"), std::string::npos);
  EXPECT_EQ(comparison_json(t)["rows"].size(), 3u);
}

TEST(CompareModels, DifferentModelsAndDigests) {
  const std::vector<EvalReport> two{fake_report("net", 10, "d1", 0.1), fake_report("geom", 40, "d2", 0.2)};
  const ComparisonTable t = compare_models(two, std::vector<std::string>{"Net", "Geom"});
  EXPECT_FALSE(t.mean);
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("digest"), std::string::npos);
  EXPECT_EQ(t.rows[0].label, "Net");
  EXPECT_EQ(t.rows[1].mean_error_deg, 40.0);
}

}  // namespace
}  // namespace keygaze
