// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "keygaze/cli.hpp"
#include "keygaze/dataset.hpp"
#include "keygaze/evaluation.hpp"
#include "keygaze/io.hpp"
#include "keygaze/model_io.hpp"
#include "test_support.hpp"

namespace keygaze {
namespace {

using nlohmann::json;

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "keygaze");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string path_str(const std::filesystem::path& p) { return p.string(); }

json read_json_file(const std::filesystem::path& p) { return json::parse(read_file(p)); }

class CliTest : public ::testing::Test {
 protected:
  test::TempDir dir{"cli"};
  std::string at(const std::string& name) const { return path_str(dir / name); }

  void synth(const std::string& name, std::size_t n, std::uint64_t seed) {
    ASSERT_EQ(run_cli({"synth", "--quiet", "--n", std::to_string(n), "--seed", std::to_string(seed), "--out", at(name)}),
              0);
  }
};

TEST_F(CliTest, SynthWritesDatasetAndManifest) {
  synth("a.jsonl", 10, 4);
  EXPECT_EQ(read_dataset(at("a.jsonl")).size(), 10u);
  const json m = read_json_file(at("a.jsonl.manifest.json"));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["seed"], 4);
  EXPECT_EQ(m["outputs"][0]["digest"], file_digest(at("a.jsonl")));
  ASSERT_TRUE(m.contains("duration_s"));

  synth("b.jsonl", 10, 4);
  EXPECT_EQ(read_file(at("a.jsonl")), read_file(at("b.jsonl")));
  synth("c.jsonl", 10, 5);
  EXPECT_NE(read_file(at("a.jsonl")), read_file(at("c.jsonl")));
}

TEST_F(CliTest, InvalidConfigNamesTheField) {
  std::ofstream(at("bad.json")) << R"({"yaw_deg": {"min": 10, "max": -10}})";
  testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"synth", "--quiet", "--config", at("bad.json"), "--out", at("x.jsonl")}), cli::kValidation);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("yaw"), std::string::npos) << err;
  EXPECT_FALSE(std::filesystem::exists(at("x.jsonl")));
}

TEST_F(CliTest, ExitCodes) {
  testing::internal::CaptureStderr();
  EXPECT_EQ(run_cli({"eval", "--pred", at("missing.jsonl"), "--data", at("missing.jsonl")}), cli::kValidation);
  EXPECT_EQ(run_cli({"bogus"}), cli::kValidation);
  EXPECT_EQ(run_cli({"train", "--train"}), cli::kValidation);

  std::ofstream(at("broken.jsonl")) << "{nope\n";
  synth("d.jsonl", 20, 1);
  EXPECT_EQ(run_cli({"train", "--quiet", "--train", at("broken.jsonl"), "--val", at("d.jsonl"), "--out", at("m.json")}),
            cli::kValidation);
  const json m = read_json_file(at("m.json.manifest.json"));
  EXPECT_EQ(m["status"], "failed");
  EXPECT_EQ(m["error"]["code"], "InvalidRecord");

  EXPECT_EQ(run_cli({"synth", "--quiet", "--n", "5", "--out", at("d.jsonl") + "/sub/x.jsonl"}), cli::kIo);
  testing::internal::GetCapturedStderr();
}

TEST_F(CliTest, TrainPredictEvalCompare) {
  synth("train.jsonl", 400, 1);
  synth("val.jsonl", 200, 2);
  synth("test.jsonl", 300, 3);
  ASSERT_EQ(run_cli({"train", "--quiet", "--seed", "3", "--train", at("train.jsonl"), "--val", at("val.jsonl"),
                     "--epochs", "30", "--batch-size", "64", "--lr", "0.01", "--out", at("m.json")}),
            0);
  const ModelWeights w = load_model(at("m.json"));
  EXPECT_EQ(w.params.size(), 283u);
  const json rep = read_json_file(at("m.json.report.json"));
  const json& hist = rep["history"];
  ASSERT_GT(hist.size(), 1u);
  EXPECT_LT(rep["final_val_error_deg"].get<double>(), hist[0]["val_error_deg"].get<double>());
  EXPECT_EQ(read_json_file(at("m.json.config.json"))["max_epochs"], 30);

  ASSERT_EQ(run_cli({"predict", "--quiet", "--model", at("m.json"), "--data", at("test.jsonl"), "--out", at("p.jsonl")}),
            0);
  const auto preds = read_predictions(at("p.jsonl"));
  EXPECT_EQ(preds.size(), 300u);
  ASSERT_EQ(run_cli({"eval", "--quiet", "--pred", at("p.jsonl"), "--data", at("test.jsonl"), "--grid", "11",
                     "--out", at("r1.json")}),
            0);
  const json r1 = read_json_file(at("r1.json"));
  EXPECT_EQ(r1["join"]["missing_predictions"], 0);
  // Same numbers as the in-process evaluation.
  const EvalReport direct = evaluate(w, read_dataset(at("test.jsonl")));
  EXPECT_DOUBLE_EQ(r1["mean_error_deg"].get<double>(), direct.mean_error_deg);
  const std::string curve = read_file(at("r1.json.curve.csv"));
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 12);

  ASSERT_EQ(run_cli({"baseline", "--quiet", "--data", at("test.jsonl"), "--out", at("g.jsonl")}), 0);
  ASSERT_EQ(run_cli({"eval", "--quiet", "--pred", at("g.jsonl"), "--data", at("test.jsonl"), "--out", at("r2.json")}),
            0);
  ASSERT_EQ(run_cli({"predict", "--quiet", "--baseline", "geom", "--data", at("test.jsonl"), "--out", at("g2.jsonl")}),
            0);
  EXPECT_EQ(read_file(at("g.jsonl")), read_file(at("g2.jsonl")));

  ASSERT_EQ(run_cli({"train", "--quiet", "--seed", "4", "--train", at("train.jsonl"), "--val", at("val.jsonl"),
                     "--epochs", "10", "--variant", "net0", "--out", at("n0.json")}),
            0);
  EXPECT_EQ(load_model(at("n0.json")).arch.variant, InputVariant::Net0);
  ASSERT_EQ(run_cli({"predict", "--quiet", "--model", at("n0.json"), "--data", at("test.jsonl"), "--out",
                     at("p3.jsonl")}),
            0);
  ASSERT_EQ(run_cli({"eval", "--quiet", "--pred", at("p3.jsonl"), "--data", at("test.jsonl"), "--out", at("r3.json")}),
            0);

  ASSERT_EQ(run_cli({"compare", "--quiet", at("r1.json"), at("r3.json"), at("r1.json"), "--labels", "a,b,c", "--out",
                     at("cmp.json")}),
            0);
  const json cmp = read_json_file(at("cmp.json"));
  ASSERT_EQ(cmp["rows"].size(), 3u);
  EXPECT_EQ(cmp["rows"][1]["label"], "b");
  EXPECT_TRUE(std::filesystem::exists(at("cmp.json.txt")));
}

TEST_F(CliTest, FineTuneRejectsForeignModel) {
  synth("train.jsonl", 100, 1);
  synth("val.jsonl", 50, 2);
  ModelWeights w = init_weights(1);
  auto doc = json::parse(serialize_model(w));
  doc["arch_tag"] = "cgu5-fc10-fc10-out3";
  std::ofstream(at("foreign.json")) << doc.dump();
  testing::internal::CaptureStderr();
  const int code = run_cli({"train", "--quiet", "--train", at("train.jsonl"), "--val", at("val.jsonl"), "--finetune",
                            at("foreign.json"), "--out", at("ft.json")});
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(code, 0);
  EXPECT_NE(err.find("ArchMismatch"), std::string::npos) << err;
}

TEST_F(CliTest, PredictSkipsTooFewKeypoints) {
  Record r;
  r.frame = "1";
  r.camera = "c";
  r.person = "0";
  r.detections[Slot::Nose] = {10, 10, 0.9};
  r.gaze = Vec2{1, 0};
  Record ok = r;
  ok.person = "1";
  ok.detections[Slot::RightEye] = {5, 5, 0.9};
  ok.detections[Slot::LeftEye] = {15, 5, 0.9};
  write_dataset(at("d.jsonl"), std::vector<Record>{r, ok});
  save_model(init_weights(2), at("m.json"));
  ASSERT_EQ(run_cli({"predict", "--quiet", "--model", at("m.json"), "--data", at("d.jsonl"), "--out", at("p.jsonl")}),
            0);
  const auto preds = read_predictions(at("p.jsonl"));
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_EQ(preds[0].skip, "TooFewKeypoints");
  EXPECT_FALSE(preds[0].g);
  EXPECT_FALSE(preds[1].skip);
  EXPECT_TRUE(preds[1].sigma);
}

TEST_F(CliTest, EvalOfExactPredictionsIsZero) {
  synth("d.jsonl", 50, 9);
  const auto recs = read_dataset(at("d.jsonl"));
  std::string text;
  for (const auto& r : recs) {
    PredictionRecord p;
    p.frame = r.frame;
    p.camera = r.camera;
    p.person = r.person;
    p.k = r.detections.num_detected();
    p.g = *r.gaze;
    p.model = "oracle";
    text += prediction_to_json(p) + "\n";
  }
  write_file_atomic(at("p.jsonl"), text);
  ASSERT_EQ(run_cli({"eval", "--quiet", "--pred", at("p.jsonl"), "--data", at("d.jsonl"), "--out", at("r.json")}), 0);
  EXPECT_NEAR(read_json_file(at("r.json"))["mean_error_deg"].get<double>(), 0.0, 1e-6);
}

TEST_F(CliTest, SplitWritesThreeFiles) {
  synth("d.jsonl", 100, 2);
  ASSERT_EQ(run_cli({"split", "--quiet", "--data", at("d.jsonl"), "--seed", "1", "--out", at("s")}), 0);
  std::size_t total = 0;
  for (const char* n : {"train.jsonl", "val.jsonl", "test.jsonl"}) total += read_dataset(dir / "s" / n).size();
  EXPECT_EQ(total, 100u);
  EXPECT_EQ(read_json_file(dir / "s" / "manifest.json")["outputs"].size(), 3u);
}

}  // namespace
}  // namespace keygaze
