// SPDX-License-Identifier: Apache-2.0
#include "keygaze/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "keygaze/error.hpp"
#include "keygaze/evaluation.hpp"
#include "keygaze/io.hpp"
#include "keygaze/random.hpp"

namespace keygaze {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidConfig, "field '" + field + "': " + why);
}

ordered_json sample_dump(const LabeledSample& s, double sample_loss) {
  ordered_json j;
  j["frame"] = s.meta.frame;
  j["person"] = s.meta.person;
  j["features"] = s.features.values;
  j["label"] = {s.label.g.x, s.label.g.y};
  j["loss"] = std::isfinite(sample_loss) ? ordered_json(sample_loss) : ordered_json("non-finite");
  return j;
}

}  // namespace

std::string_view to_string(Augmentation a) {
  return a == Augmentation::QuadrantBalance ? "quadrant_balance" : "none";
}

Augmentation parse_augmentation(std::string_view name) {
  if (name == "none") return Augmentation::None;
  if (name == "quadrant_balance") return Augmentation::QuadrantBalance;
  throw Error(ErrorCode::InvalidConfig, "unknown augmentation '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (learning_rate && !(*learning_rate > 0.0 && std::isfinite(*learning_rate))) {
    bad_field("learning_rate", "must be positive");
  }
  if (batch_size < 1) bad_field("batch_size", "must be at least 1");
  if (!(l2_hidden >= 0.0 && std::isfinite(l2_hidden))) bad_field("l2_hidden", "must be non-negative");
}

ordered_json to_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate ? ordered_json(*c.learning_rate) : ordered_json();
  j["batch_size"] = c.batch_size;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["l2_hidden"] = c.l2_hidden;
  j["seed"] = c.seed;
  j["augmentation"] = to_string(c.augmentation);
  j["input_variant"] = c.input_variant ? ordered_json(to_string(*c.input_variant)) : ordered_json();
  j["freeze_conf_stats"] = c.freeze_conf_stats;
  return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "train config must be a JSON object");
  static const char* const kKnown[] = {"learning_rate", "batch_size", "max_epochs",  "patience",
                                       "l2_hidden",     "seed",       "augmentation", "input_variant",
                                       "freeze_conf_stats"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return key == k; }) ==
        std::end(kKnown)) {
      bad_field(key, "unknown field");
    }
  }

  TrainConfig c;
  auto count = [&](const char* field, std::size_t& out) {
    if (!j.contains(field)) return;
    if (!j[field].is_number_unsigned()) bad_field(field, "must be a non-negative integer");
    out = j[field].get<std::size_t>();
  };
  auto text = [&](const char* field) {
    if (!j[field].is_string()) bad_field(field, "expected a string");
    return j[field].get<std::string>();
  };
  if (j.contains("learning_rate") && !j["learning_rate"].is_null()) {
    if (!j["learning_rate"].is_number()) bad_field("learning_rate", "expected a number");
    c.learning_rate = j["learning_rate"].get<double>();
  }
  count("batch_size", c.batch_size);
  count("max_epochs", c.max_epochs);
  count("patience", c.patience);
  if (j.contains("l2_hidden")) {
    if (!j["l2_hidden"].is_number()) bad_field("l2_hidden", "expected a number");
    c.l2_hidden = j["l2_hidden"].get<double>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) bad_field("seed", "must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("augmentation")) {
    try {
      c.augmentation = parse_augmentation(text("augmentation"));
    } catch (const Error&) {
      bad_field("augmentation", "expected none or quadrant_balance");
    }
  }
  if (j.contains("input_variant") && !j["input_variant"].is_null()) {
    try {
      c.input_variant = parse_input_variant(text("input_variant"));
    } catch (const Error&) {
      bad_field("input_variant", "expected cgu, net0 or relu_conf");
    }
  }
  if (j.contains("freeze_conf_stats")) {
    if (!j["freeze_conf_stats"].is_boolean()) bad_field("freeze_conf_stats", "expected true or false");
    c.freeze_conf_stats = j["freeze_conf_stats"].get<bool>();
  }
  c.validate();
  return c;
}

std::string config_digest(const TrainConfig& c) { return "sha256:" + sha256_hex(to_json(c).dump()); }

double loss(Vec2 g, Vec2 g_tilde, double sigma) { return loss_and_grad(g, g_tilde, sigma).value; }

LossAndGrad loss_and_grad(Vec2 g, Vec2 g_tilde, double sigma) {
  const double nt = norm(g_tilde);
  if (!(nt >= 1e-12)) throw Error(ErrorCode::DegeneratePrediction, "prediction vector vanishes");
  const double ng = norm(g);
  const double cos = dot(g, g_tilde) / (ng * nt);
  const double w = std::exp(-sigma);

  LossAndGrad out;
  out.value = -0.5 * w * cos + 0.5 * std::log(sigma);
  // d cos / d g~ = g / (|g| |g~|) - cos g~ / |g~|^2
  const Vec2 dcos = g / (ng * nt) - g_tilde * (cos / (nt * nt));
  out.grad.g_x = -0.5 * w * dcos.x;
  out.grad.g_y = -0.5 * w * dcos.y;
  out.grad.sigma = 0.5 * w * cos + 0.5 / sigma;
  return out;
}

double loss_floor(double sigma_floor) { return -0.5 * std::exp(-sigma_floor) + 0.5 * std::log(sigma_floor); }

ConfidenceStats compute_confidence_stats(std::span<const LabeledSample> samples) {
  ConfidenceStats st;
  if (samples.empty()) return st;
  const double n = static_cast<double>(samples.size() * kNumSlots);
  double sum = 0.0;
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < kNumSlots; ++k) sum += s.features.values[3 * k + 2];
  }
  st.mean = sum / n;
  double ss = 0.0;
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < kNumSlots; ++k) {
      const double d = s.features.values[3 * k + 2] - st.mean;
      ss += d * d;
    }
  }
  st.std = std::max(std::sqrt(ss / n), 1e-6);
  return st;
}

char balance_quadrant(Vec2 g) {
  const double a = label_angle_deg(g);
  if (a >= -90.0 && a < 0.0) return 'a';
  if (a >= -180.0 && a < -90.0) return 'b';
  return 0;
}

std::vector<LabeledSample> balance_quadrants(std::span<const LabeledSample> samples, Rng& rng) {
  std::vector<LabeledSample> out(samples.begin(), samples.end());
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  for (const auto& s : samples) {
    const char q = balance_quadrant(s.label.g);
    count_a += q == 'a';
    count_b += q == 'b';
  }
  if (count_a == count_b) return out;
  const char donor = count_a > count_b ? 'a' : 'b';
  const std::size_t deficit = count_a > count_b ? count_a - count_b : count_b - count_a;

  // Boundary angles (-90, -180) would mirror onto themselves or out of the
  // pair, so only interior samples are candidates.
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double a = label_angle_deg(samples[i].label.g);
    const bool interior = donor == 'a' ? (a > -90.0 && a < 0.0) : (a > -180.0 && a < -90.0);
    if (interior) pool.push_back(i);
  }
  if (pool.empty()) return out;

  std::vector<std::size_t> order;
  for (std::size_t added = 0; added < deficit; ++added) {
    if (order.empty()) {
      order = pool;
      rng.shuffle(std::span<std::size_t>(order));
      std::reverse(order.begin(), order.end());  // consume from the back
    }
    const auto& src = samples[order.back()];
    order.pop_back();
    auto [f, label] = mirror_sample(src.features, src.label);
    out.push_back({f, label, src.meta});
  }
  return out;
}

void adam_update(std::span<double> params, std::span<const double> grad, AdamState& state, double lr,
                 const AdamParams& hp) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grad[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
  }
}

std::vector<char> l2_mask(const ArchDescriptor& arch) {
  const ParamLayout l = param_layout(arch);
  std::vector<char> mask(l.total, 0);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(l.fc1_weight),
            mask.begin() + static_cast<std::ptrdiff_t>(l.fc1_bias), 1);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(l.fc2_weight),
            mask.begin() + static_cast<std::ptrdiff_t>(l.fc2_bias), 1);
  return mask;
}

double l2_penalty(const ModelWeights& w, double l2_hidden) {
  if (l2_hidden == 0.0) return 0.0;
  const auto mask = l2_mask(w.arch);
  double ss = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) ss += w.params[i] * w.params[i];
  }
  return 0.5 * l2_hidden * ss;
}

void add_l2_gradient(const ModelWeights& w, double l2_hidden, std::span<double> grad) {
  if (l2_hidden == 0.0) return;
  const auto mask = l2_mask(w.arch);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) grad[i] += l2_hidden * w.params[i];
  }
}

void adam_step(ModelWeights& w, std::span<const double> data_grad, AdamState& state, double lr,
               double l2_hidden, const AdamParams& hp) {
  std::vector<double> g(data_grad.begin(), data_grad.end());
  add_l2_gradient(w, l2_hidden, g);
  adam_update(w.params, g, state, lr, hp);
}

namespace {

// A vanished direction output (every relu above it dead) has no defined
// cosine; it is scored as orthogonal and passes no gradient to (g~x, g~y).
LossAndGrad training_loss(Vec2 g, const GazePrediction& p) {
  if (norm(p.g) >= 1e-12) return loss_and_grad(g, p.g, p.sigma);
  LossAndGrad out;
  out.value = 0.5 * std::log(p.sigma);
  out.grad.sigma = 0.5 / p.sigma;
  return out;
}

}  // namespace

double batch_objective(const ModelWeights& w, std::span<const LabeledSample> batch, double l2_hidden,
                       std::span<double> grad) {
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  if (batch.empty()) return l2_penalty(w, l2_hidden);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  double sum = 0.0;
  for (const auto& s : batch) {
    const GazePrediction p = forward(s.features, w, want_grad ? &cache : nullptr);
    const LossAndGrad lg = training_loss(s.label.g, p);
    sum += lg.value;
    if (want_grad) {
      const OutputGrad up{lg.grad.g_x * inv_n, lg.grad.g_y * inv_n, lg.grad.sigma * inv_n};
      backward(cache, w, up, grad);
    }
  }
  if (want_grad) add_l2_gradient(w, l2_hidden, grad);
  return sum * inv_n + l2_penalty(w, l2_hidden);
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::EarlyStopping: return "early_stopping";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::NoEpochs: return "no_epochs";
  }
  return "no_epochs";
}

ordered_json to_json(const TrainReport& r) {
  ordered_json j;
  j["best_epoch"] = r.best_epoch;
  j["final_val_error_deg"] = r.final_val_error_deg;
  j["stop"] = to_string(r.stop);
  j["learning_rate"] = r.learning_rate;
  j["conf_mean"] = r.conf_stats.mean;
  j["conf_std"] = r.conf_stats.std;
  j["n_train"] = r.n_train;
  j["n_val"] = r.n_val;
  auto hist = ordered_json::array();
  for (const auto& e : r.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_error_deg", e.val_error_deg}});
  }
  j["history"] = std::move(hist);
  return j;
}

namespace {

double mean_loss(const ModelWeights& w, std::span<const LabeledSample> samples) {
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += training_loss(s.label.g, forward(s.features, w)).value;
  }
  return sum / static_cast<double>(samples.size());
}

[[noreturn]] void non_finite(const ModelWeights& w, std::span<const LabeledSample> batch, std::size_t epoch,
                             std::size_t batch_index) {
  ordered_json dump;
  dump["epoch"] = epoch;
  dump["batch"] = batch_index;
  dump["batch_size"] = batch.size();
  auto offenders = ordered_json::array();
  for (const auto& s : batch) {
    double l = std::numeric_limits<double>::quiet_NaN();
    try {
      l = training_loss(s.label.g, forward(s.features, w)).value;
    } catch (const Error&) {
    }
    if (!std::isfinite(l)) offenders.push_back(sample_dump(s, l));
  }
  if (offenders.empty()) {
    for (std::size_t i = 0; i < batch.size(); ++i) offenders.push_back(sample_dump(batch[i], 0.0));
  }
  dump["samples"] = std::move(offenders);
  throw Error(ErrorCode::NonFiniteLoss, dump.dump());
}

TrainResult run_training(ModelWeights w, const TrainConfig& config, double lr,
                         std::span<const LabeledSample> train_in, std::span<const LabeledSample> val_set,
                         bool recompute_stats) {
  Rng rng(derive_seed(config.seed, 1));

  TrainReport report;
  report.learning_rate = lr;
  if (recompute_stats) {
    const ConfidenceStats st = compute_confidence_stats(train_in);
    w.conf_mean = st.mean;
    w.conf_std = st.std;
  }
  report.conf_stats = {w.conf_mean, w.conf_std};

  std::vector<LabeledSample> train_set = config.augmentation == Augmentation::QuadrantBalance
                                             ? balance_quadrants(train_in, rng)
                                             : std::vector<LabeledSample>(train_in.begin(), train_in.end());
  report.n_train = train_set.size();
  report.n_val = val_set.size();

  double best_err = mean_angular_error(w, val_set);
  report.history.push_back({0, mean_loss(w, train_set), best_err});
  ModelWeights best = w;

  AdamState adam(w.params.size());
  std::vector<double> grad(w.params.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<LabeledSample> batch;
  batch.reserve(config.batch_size);

  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);

      const double objective = batch_objective(w, batch, 0.0, grad);
      if (!std::isfinite(objective) ||
          !std::all_of(grad.begin(), grad.end(), [](double v) { return std::isfinite(v); })) {
        non_finite(w, batch, epoch, batch_index);
      }
      epoch_sum += objective * static_cast<double>(batch.size());
      adam_step(w, grad, adam, lr, config.l2_hidden);
    }

    const double val_err = mean_angular_error(w, val_set);
    report.history.push_back({epoch, epoch_sum / static_cast<double>(train_set.size()), val_err});
    if (val_err < best_err) {
      best_err = val_err;
      best = w;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.stop = StopReason::EarlyStopping;
      break;
    }
  }
  if (report.stop != StopReason::EarlyStopping) {
    report.stop = config.max_epochs == 0 ? StopReason::NoEpochs : StopReason::MaxEpochs;
  }
  report.final_val_error_deg = best_err;
  best.seed = config.seed;
  best.config_digest = config_digest(config);
  return {std::move(best), std::move(report)};
}

void require_data(std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  if (val_set.empty()) throw Error(ErrorCode::EmptyDataset, "validation set is empty");
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set) {
  config.validate();
  require_data(train_set, val_set);
  const InputVariant variant = config.input_variant.value_or(InputVariant::Cgu);
  ModelWeights w = init_weights(derive_seed(config.seed, 0), variant);
  return run_training(std::move(w), config, config.learning_rate.value_or(kDefaultLearningRate), train_set,
                      val_set, true);
}

TrainResult fine_tune(const ModelWeights& base, const TrainConfig& config,
                      std::span<const LabeledSample> train_set, std::span<const LabeledSample> val_set) {
  config.validate();
  if (!base.arch.is_standard() || base.params.size() != param_count(base.arch)) {
    throw Error(ErrorCode::ArchMismatch, "base model architecture is not supported");
  }
  if (config.input_variant && *config.input_variant != base.arch.variant) {
    throw Error(ErrorCode::ArchMismatch, "configured variant " + std::string(to_string(*config.input_variant)) +
                                             " differs from base model " + base.arch.tag());
  }
  const double lr = config.learning_rate.value_or(kDefaultFineTuneLearningRate);
  if (config.max_epochs == 0) {
    TrainResult r{base, {}};
    r.report.learning_rate = lr;
    r.report.conf_stats = {base.conf_mean, base.conf_std};
    r.report.n_train = train_set.size();
    r.report.n_val = val_set.size();
    if (!val_set.empty()) {
      r.report.final_val_error_deg = mean_angular_error(base, val_set);
      r.report.history.push_back({0, train_set.empty() ? 0.0 : mean_loss(base, train_set),
                                  r.report.final_val_error_deg});
    }
    return r;
  }
  require_data(train_set, val_set);
  return run_training(base, config, lr, train_set, val_set, !config.freeze_conf_stats);
}

}  // namespace keygaze
