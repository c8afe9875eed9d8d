// SPDX-License-Identifier: Apache-2.0
#include "keygaze/network.hpp"

#include <cmath>

#include "keygaze/error.hpp"
#include "keygaze/random.hpp"

namespace keygaze {

std::string_view to_string(InputVariant v) {
  switch (v) {
    case InputVariant::Cgu: return "cgu";
    case InputVariant::Net0: return "net0";
    case InputVariant::ReluConf: return "relu_conf";
  }
  return "?";
}

InputVariant parse_input_variant(std::string_view name) {
  if (name == "cgu") return InputVariant::Cgu;
  if (name == "net0") return InputVariant::Net0;
  if (name == "relu_conf") return InputVariant::ReluConf;
  throw Error(ErrorCode::InvalidConfig, "unknown input variant '" + std::string(name) + "'");
}

ArchDescriptor ArchDescriptor::standard(InputVariant variant) {
  ArchDescriptor a;
  a.variant = variant;
  a.input_units = variant == InputVariant::ReluConf ? kFeatureDim : 2 * kNumSlots;
  return a;
}

bool ArchDescriptor::is_standard() const { return *this == standard(variant); }

std::size_t ArchDescriptor::params_per_input_unit() const {
  return variant == InputVariant::Cgu ? 3 : 2;
}

std::string ArchDescriptor::tag() const {
  std::string prefix;
  switch (variant) {
    case InputVariant::Cgu: prefix = "cgu"; break;
    case InputVariant::Net0: prefix = "net0relu"; break;
    case InputVariant::ReluConf: prefix = "confrelu"; break;
  }
  return prefix + std::to_string(input_units) + "-fc" + std::to_string(hidden1) + "-fc" +
         std::to_string(hidden2) + "-out" + std::to_string(kOutputs);
}

ParamLayout param_layout(const ArchDescriptor& arch) {
  ParamLayout l;
  std::size_t at = 0;
  l.input = at;
  at += arch.input_units * arch.params_per_input_unit();
  l.fc1_weight = at;
  at += arch.hidden1 * arch.input_units;
  l.fc1_bias = at;
  at += arch.hidden1;
  l.fc2_weight = at;
  at += arch.hidden2 * arch.hidden1;
  l.fc2_bias = at;
  at += arch.hidden2;
  l.out_weight = at;
  at += ArchDescriptor::kOutputs * arch.hidden2;
  l.out_bias = at;
  at += ArchDescriptor::kOutputs;
  l.total = at;
  return l;
}

std::size_t param_count(const ArchDescriptor& arch) { return param_layout(arch).total; }
std::size_t param_count(const ModelWeights& w) { return param_count(w.arch); }

CguParams ModelWeights::cgu(std::size_t unit) const {
  const std::size_t at = layout().input + 3 * unit;
  return {params[at], params[at + 1], params[at + 2]};
}

void ModelWeights::set_cgu(std::size_t unit, const CguParams& p) {
  const std::size_t at = layout().input + 3 * unit;
  params[at] = p.w_q;
  params[at + 1] = p.b_q;
  params[at + 2] = p.w_c;
}

ModelWeights init_weights(std::uint64_t seed, InputVariant variant) {
  ModelWeights w;
  w.arch = ArchDescriptor::standard(variant);
  w.seed = seed;
  const ParamLayout l = w.layout();
  w.params.assign(l.total, 0.0);
  for (std::size_t i = l.input; i < l.fc1_weight; ++i) w.params[i] = 1.0;

  Rng rng(seed);
  auto he_fill = [&](std::size_t at, std::size_t rows, std::size_t fan_in) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < rows * fan_in; ++i) w.params[at + i] = rng.normal(0.0, stddev);
  };
  he_fill(l.fc1_weight, w.arch.hidden1, w.arch.input_units);
  he_fill(l.fc2_weight, w.arch.hidden2, w.arch.hidden1);
  he_fill(l.out_weight, ArchDescriptor::kOutputs, w.arch.hidden2);
  return w;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double cgu_forward(double q, double c_std, const CguParams& p) {
  const double pre = p.w_q * q + p.b_q;
  return (pre > 0.0 ? pre : 0.0) * sigmoid(p.w_c * c_std);
}

namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }

void check_arch(const ModelWeights& w) {
  if (w.arch.input_units > kMaxWidth || w.arch.hidden1 > kMaxWidth || w.arch.hidden2 > kMaxWidth ||
      w.params.size() != param_count(w.arch)) {
    throw Error(ErrorCode::ArchMismatch, "unsupported network shape " + w.arch.tag());
  }
}

// Dense layer: out[r] = sum_c W[r, c] * in[c] + b[r].
void dense(const double* weight, const double* bias, const double* in, std::size_t n_in,
           double* out, std::size_t n_out) {
  for (std::size_t r = 0; r < n_out; ++r) {
    double acc = bias[r];
    const double* row = weight + r * n_in;
    for (std::size_t c = 0; c < n_in; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

}  // namespace

GazePrediction forward(const FeatureVector& f, const ModelWeights& w, ForwardCache* cache) {
  check_arch(w);
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const ParamLayout l = w.layout();
  const double* p = w.params.data();
  const std::size_t n_in = w.arch.input_units;

  auto standardize = [&](double conf) { return (conf - w.conf_mean) / w.conf_std; };

  switch (w.arch.variant) {
    case InputVariant::Cgu:
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t slot = i / 2;
        const double* u = p + l.input + 3 * i;
        c.input[i] = f.values[3 * slot + i % 2];
        c.gate_input[i] = standardize(f.values[3 * slot + 2]);
        c.unit_pre[i] = u[0] * c.input[i] + u[1];
        c.gate[i] = sigmoid(u[2] * c.gate_input[i]);
        c.unit_out[i] = relu(c.unit_pre[i]) * c.gate[i];
      }
      break;
    case InputVariant::Net0:
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t slot = i / 2;
        const double* u = p + l.input + 2 * i;
        c.input[i] = f.values[3 * slot + i % 2];
        c.unit_pre[i] = u[0] * c.input[i] + u[1];
        c.unit_out[i] = relu(c.unit_pre[i]);
      }
      break;
    case InputVariant::ReluConf:
      for (std::size_t i = 0; i < n_in; ++i) {
        const double* u = p + l.input + 2 * i;
        c.input[i] = i % 3 == 2 ? standardize(f.values[i]) : f.values[i];
        c.unit_pre[i] = u[0] * c.input[i] + u[1];
        c.unit_out[i] = relu(c.unit_pre[i]);
      }
      break;
  }

  dense(p + l.fc1_weight, p + l.fc1_bias, c.unit_out.data(), n_in, c.h1_pre.data(), w.arch.hidden1);
  for (std::size_t i = 0; i < w.arch.hidden1; ++i) c.h1[i] = relu(c.h1_pre[i]);
  dense(p + l.fc2_weight, p + l.fc2_bias, c.h1.data(), w.arch.hidden1, c.h2_pre.data(),
        w.arch.hidden2);
  for (std::size_t i = 0; i < w.arch.hidden2; ++i) c.h2[i] = relu(c.h2_pre[i]);
  dense(p + l.out_weight, p + l.out_bias, c.h2.data(), w.arch.hidden2, c.out.data(),
        ArchDescriptor::kOutputs);

  GazePrediction pred;
  pred.g = {c.out[0], c.out[1]};
  pred.sigma = softplus(c.out[2]) + kSigmaFloor;
  const double len = norm(pred.g);
  pred.g_unit = len > 0.0 ? pred.g / len : Vec2{1.0, 0.0};
  return pred;
}

void backward(const ForwardCache& c, const ModelWeights& w, const OutputGrad& upstream,
              std::span<double> grad) {
  check_arch(w);
  if (grad.size() != w.params.size()) {
    throw Error(ErrorCode::ArchMismatch, "gradient buffer has wrong length");
  }
  const ParamLayout l = w.layout();
  const double* p = w.params.data();
  double* gp = grad.data();
  const std::size_t n_in = w.arch.input_units;
  const std::size_t h1n = w.arch.hidden1;
  const std::size_t h2n = w.arch.hidden2;
  constexpr std::size_t n_out = ArchDescriptor::kOutputs;

  std::array<double, n_out> d_out{upstream.g_x, upstream.g_y,
                                  upstream.sigma * sigmoid(c.out[2])};

  // Output layer.
  std::array<double, kMaxWidth> d_h2{};
  for (std::size_t r = 0; r < n_out; ++r) {
    gp[l.out_bias + r] += d_out[r];
    for (std::size_t k = 0; k < h2n; ++k) {
      gp[l.out_weight + r * h2n + k] += d_out[r] * c.h2[k];
      d_h2[k] += d_out[r] * p[l.out_weight + r * h2n + k];
    }
  }

  // Hidden layer 2.
  std::array<double, kMaxWidth> d_h1{};
  for (std::size_t r = 0; r < h2n; ++r) {
    const double d_pre = c.h2_pre[r] > 0.0 ? d_h2[r] : 0.0;
    if (d_pre == 0.0) continue;
    gp[l.fc2_bias + r] += d_pre;
    for (std::size_t k = 0; k < h1n; ++k) {
      gp[l.fc2_weight + r * h1n + k] += d_pre * c.h1[k];
      d_h1[k] += d_pre * p[l.fc2_weight + r * h1n + k];
    }
  }

  // Hidden layer 1.
  std::array<double, kMaxWidth> d_unit{};
  for (std::size_t r = 0; r < h1n; ++r) {
    const double d_pre = c.h1_pre[r] > 0.0 ? d_h1[r] : 0.0;
    if (d_pre == 0.0) continue;
    gp[l.fc1_bias + r] += d_pre;
    for (std::size_t k = 0; k < n_in; ++k) {
      gp[l.fc1_weight + r * n_in + k] += d_pre * c.unit_out[k];
      d_unit[k] += d_pre * p[l.fc1_weight + r * n_in + k];
    }
  }

  // Input layer.
  if (w.arch.variant == InputVariant::Cgu) {
    for (std::size_t i = 0; i < n_in; ++i) {
      const std::size_t at = l.input + 3 * i;
      const double r = c.unit_pre[i] > 0.0 ? c.unit_pre[i] : 0.0;
      // out = relu(pre) * gate
      const double d_pre = c.unit_pre[i] > 0.0 ? d_unit[i] * c.gate[i] : 0.0;
      const double d_gate_pre = d_unit[i] * r * c.gate[i] * (1.0 - c.gate[i]);
      gp[at] += d_pre * c.input[i];
      gp[at + 1] += d_pre;
      gp[at + 2] += d_gate_pre * c.gate_input[i];
    }
  } else {
    for (std::size_t i = 0; i < n_in; ++i) {
      const std::size_t at = l.input + 2 * i;
      const double d_pre = c.unit_pre[i] > 0.0 ? d_unit[i] : 0.0;
      gp[at] += d_pre * c.input[i];
      gp[at + 1] += d_pre;
    }
  }
}

std::vector<double> backward(const ForwardCache& cache, const ModelWeights& w,
                             const OutputGrad& upstream) {
  std::vector<double> grad(w.params.size(), 0.0);
  backward(cache, w, upstream, grad);
  return grad;
}

}  // namespace keygaze
