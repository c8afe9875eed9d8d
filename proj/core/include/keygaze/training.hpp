// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Uncertainty-weighted cosine loss, Adam with early stopping,
 *         confidence statistics and quadrant-balancing augmentation.
 *
 * Per-sample loss, with cos the cosine similarity between label g and raw
 * prediction g~:
 *
 *   L = exp(-sigma) / 2 * (-cos) + ln(sigma) / 2
 *
 * The batch objective is the mean of L over the batch plus
 * (l2_hidden / 2) * sum(w^2) over the fc1 and fc2 weight matrices.
 *
 * Note that for every cos in [-1, 1] this loss increases monotonically in
 * sigma, so training drives sigma toward its floor; the floor is what keeps
 * the objective bounded.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "keygaze/dataset.hpp"
#include "keygaze/network.hpp"

namespace keygaze {

class Rng;

inline constexpr double kDefaultLearningRate = 5e-3;
inline constexpr double kDefaultFineTuneLearningRate = 1e-5;

enum class Augmentation { None, QuadrantBalance };

std::string_view to_string(Augmentation a);
Augmentation parse_augmentation(std::string_view name);

struct TrainConfig {
  /// Unset means 5e-3 for training from scratch and 1e-5 for fine-tuning.
  std::optional<double> learning_rate;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 500;
  /// Epochs without a new best validation error before stopping.
  std::size_t patience = 20;
  double l2_hidden = 1e-4;
  std::uint64_t seed = 0;
  Augmentation augmentation = Augmentation::None;
  /// Unset means the standard CGU network (or, when fine-tuning, the base
  /// model's own variant).
  std::optional<InputVariant> input_variant;
  /// Fine-tuning only: keep the base model's confidence statistics.
  bool freeze_conf_stats = false;

  /// Throws Error{InvalidConfig} naming the offending field.
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
/// Starts from defaults and overrides the fields present; unknown fields are
/// rejected.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);
/// "sha256:<hex>" of the canonical JSON form.
std::string config_digest(const TrainConfig& c);

/// Throws Error{DegeneratePrediction} if |g_tilde| < 1e-12.
double loss(Vec2 g, Vec2 g_tilde, double sigma);

struct LossAndGrad {
  double value = 0.0;
  OutputGrad grad;  ///< d loss / d (g~x, g~y, sigma)
};

LossAndGrad loss_and_grad(Vec2 g, Vec2 g_tilde, double sigma);

/// Smallest per-sample loss reachable with sigma >= sigma_floor:
/// -exp(-floor) / 2 + ln(floor) / 2.
double loss_floor(double sigma_floor = kSigmaFloor);

struct ConfidenceStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Mean and population standard deviation over all 5 N confidences,
/// absent keypoints (zeros) included. The deviation is clamped to >= 1e-6.
ConfidenceStats compute_confidence_stats(std::span<const LabeledSample> samples);

/// Which of the two balanced label quadrants a label falls in, by its angle
/// a = atan2(-g_y, g_x): 'a' for [-90, 0), 'b' for [-180, -90), 0 otherwise.
char balance_quadrant(Vec2 g);

/// Appends mirrored copies of randomly chosen samples from the larger of the
/// two quadrants until both hold the same number of samples. Only samples
/// strictly inside the larger quadrant are candidates, so every mirror lands
/// in the smaller one. Originals keep their order at the front.
std::vector<LabeledSample> balance_quadrants(std::span<const LabeledSample> samples, Rng& rng);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Plain bias-corrected Adam update of `params` in place.
void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
                 const AdamParams& hp = {});

/// 1 for fc1 and fc2 weight entries, 0 elsewhere.
std::vector<char> l2_mask(const ArchDescriptor& arch);
double l2_penalty(const ModelWeights& w, double l2_hidden);
/// Adds l2_hidden * w on the masked entries.
void add_l2_gradient(const ModelWeights& w, double l2_hidden, std::span<double> grad);

/// Adds the L2 gradient to a copy of `data_grad`, then applies Adam.
void adam_step(ModelWeights& w, std::span<const double> data_grad, AdamState& state, double lr,
               double l2_hidden, const AdamParams& hp = {});

/// Mean per-sample loss plus the L2 penalty. When `grad` is non-empty it
/// receives the gradient of that objective (overwritten).
double batch_objective(const ModelWeights& w, std::span<const LabeledSample> batch, double l2_hidden,
                       std::span<double> grad = {});

struct EpochRecord {
  std::size_t epoch = 0;          ///< 0 is the untrained model
  double train_loss = 0.0;        ///< mean per-sample loss, L2 excluded
  double val_error_deg = 0.0;
};

enum class StopReason { EarlyStopping, MaxEpochs, NoEpochs };

std::string_view to_string(StopReason r);

struct TrainReport {
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  double final_val_error_deg = 0.0;
  StopReason stop = StopReason::NoEpochs;
  ConfidenceStats conf_stats;
  double learning_rate = 0.0;
  std::size_t n_train = 0;  ///< after augmentation
  std::size_t n_val = 0;
};

nlohmann::ordered_json to_json(const TrainReport& r);

struct TrainResult {
  ModelWeights weights;
  TrainReport report;
};

/// Throws Error{EmptyDataset} or Error{NonFiniteLoss}; the latter carries a
/// dump of the offending batch.
TrainResult train(const TrainConfig& config, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set);

/// Same as train() but starts from `base`. Throws Error{ArchMismatch} when
/// the configured variant differs from the base model's. With max_epochs 0
/// the base model is returned unchanged.
TrainResult fine_tune(const ModelWeights& base, const TrainConfig& config,
                      std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set);

}  // namespace keygaze
