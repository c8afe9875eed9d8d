// SPDX-License-Identifier: Apache-2.0
/**
 * @file   network.hpp
 * @brief  Confidence-gated gaze regressor (10 CGU, 10 FC, 10 FC, 3 FC).
 *
 * Each of the ten coordinates of the feature vector enters its own
 * Confidence Gated Unit:
 *
 *   q ---[w_q * q + b_q]--[relu]---.
 *                                  (*)---> cgu output
 *   c_std ---[w_c * c_std]--[sigmoid]-'
 *
 * The x- and y-unit of a keypoint slot gate on the same standardized
 * confidence but own independent parameters. The ten gated outputs feed two
 * relu hidden layers of width 10 and a linear output layer of width 3:
 * (g_x, g_y, raw uncertainty). The uncertainty is made positive with
 * softplus plus a small floor.
 *
 * Two ablation input layers share the same trunk: `Net0` (ten relu units on
 * the coordinates, confidences ignored) and `ReluConf` (fifteen relu units on
 * coordinates and standardized confidences, no gating).
 *
 * Parameters live in one flat vector, ordered input layer, fc1 weights
 * (row-major, out x in), fc1 bias, fc2 weights, fc2 bias, out weights,
 * out bias. Gradients use the same order.
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "keygaze/features.hpp"

namespace keygaze {

/// Lower bound added to the uncertainty output so that log(sigma) stays
/// finite and the training loss stays bounded below.
inline constexpr double kSigmaFloor = 1e-3;

enum class InputVariant { Cgu, Net0, ReluConf };

std::string_view to_string(InputVariant v);
InputVariant parse_input_variant(std::string_view name);

struct ArchDescriptor {
  InputVariant variant = InputVariant::Cgu;
  std::size_t input_units = 10;
  std::size_t hidden1 = 10;
  std::size_t hidden2 = 10;
  static constexpr std::size_t kOutputs = 3;

  static ArchDescriptor standard(InputVariant variant = InputVariant::Cgu);
  bool is_standard() const;
  /// 3 for a CGU (w_q, b_q, w_c), 2 for a plain relu unit (w, b).
  std::size_t params_per_input_unit() const;
  /// Stable tag written into model files, e.g. "cgu10-fc10-fc10-out3".
  std::string tag() const;

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

/// Offsets of each parameter block inside the flat parameter vector.
struct ParamLayout {
  std::size_t input = 0;
  std::size_t fc1_weight = 0;
  std::size_t fc1_bias = 0;
  std::size_t fc2_weight = 0;
  std::size_t fc2_bias = 0;
  std::size_t out_weight = 0;
  std::size_t out_bias = 0;
  std::size_t total = 0;
};

ParamLayout param_layout(const ArchDescriptor& arch);
std::size_t param_count(const ArchDescriptor& arch);

struct CguParams {
  double w_q = 1.0;
  double b_q = 1.0;
  double w_c = 1.0;
};

struct ModelWeights {
  ArchDescriptor arch;
  std::vector<double> params;
  double conf_mean = 0.0;
  double conf_std = 1.0;
  /// Provenance carried into model files.
  std::uint64_t seed = 0;
  std::string config_digest;

  ParamLayout layout() const { return param_layout(arch); }

  /// Only meaningful for the CGU variant.
  CguParams cgu(std::size_t unit) const;
  void set_cgu(std::size_t unit, const CguParams& p);

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

std::size_t param_count(const ModelWeights& w);

/// CGU params at 1.0, relu input units at w = b = 1, FC weights He-normal
/// (variance 2 / fan_in), FC biases 0, confidence stats (0, 1).
ModelWeights init_weights(std::uint64_t seed, InputVariant variant = InputVariant::Cgu);

double sigmoid(double x);
double softplus(double x);

/// relu(w_q * q + b_q) * sigmoid(w_c * c_std)
double cgu_forward(double q, double c_std, const CguParams& p);

struct GazePrediction {
  Vec2 g;          ///< raw (g_x, g_y) outputs
  double sigma = 0.0;
  Vec2 g_unit;     ///< g / |g|; (1, 0) if g vanishes
};

inline constexpr std::size_t kMaxWidth = 16;

/// Activations retained by forward() for backward().
struct ForwardCache {
  std::array<double, kMaxWidth> input{};      ///< value fed to each input unit
  std::array<double, kMaxWidth> gate_input{}; ///< standardized confidence (CGU only)
  std::array<double, kMaxWidth> unit_pre{};   ///< w * input + b
  std::array<double, kMaxWidth> gate{};       ///< sigmoid(w_c * c_std)
  std::array<double, kMaxWidth> unit_out{};
  std::array<double, kMaxWidth> h1_pre{};
  std::array<double, kMaxWidth> h1{};
  std::array<double, kMaxWidth> h2_pre{};
  std::array<double, kMaxWidth> h2{};
  std::array<double, ArchDescriptor::kOutputs> out{};
};

GazePrediction forward(const FeatureVector& f, const ModelWeights& w, ForwardCache* cache = nullptr);

/// Upstream gradient with respect to (g_x, g_y, sigma).
struct OutputGrad {
  double g_x = 0.0;
  double g_y = 0.0;
  double sigma = 0.0;
};

/// Adds the parameter gradient for one sample into `grad` (length
/// param_count). relu'(0) is taken as 0.
void backward(const ForwardCache& cache, const ModelWeights& w, const OutputGrad& upstream,
              std::span<double> grad);

/// Convenience wrapper returning a fresh gradient vector.
std::vector<double> backward(const ForwardCache& cache, const ModelWeights& w,
                             const OutputGrad& upstream);

}  // namespace keygaze
