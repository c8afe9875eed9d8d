// SPDX-License-Identifier: Apache-2.0
#include "keygaze/model_io.hpp"

#include <nlohmann/json.hpp>

#include "keygaze/error.hpp"
#include "keygaze/io.hpp"

namespace keygaze {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kFormat = "keygaze-model";

ordered_json slice(const std::vector<double>& p, std::size_t from, std::size_t to) {
  return ordered_json(std::vector<double>(p.begin() + static_cast<std::ptrdiff_t>(from),
                                          p.begin() + static_cast<std::ptrdiff_t>(to)));
}

ordered_json dense_block(const std::vector<double>& p, std::size_t w_from, std::size_t b_from,
                         std::size_t b_to) {
  ordered_json j;
  j["weight"] = slice(p, w_from, b_from);
  j["bias"] = slice(p, b_from, b_to);
  return j;
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptModel, what); }

void append_numbers(const ordered_json& arr, std::size_t expected, const char* name,
                    std::vector<double>& out) {
  if (!arr.is_array()) corrupt(std::string("'") + name + "' is not an array");
  if (arr.size() != expected) {
    corrupt(std::string("'") + name + "' has " + std::to_string(arr.size()) +
            " values, expected " + std::to_string(expected));
  }
  for (const auto& v : arr) {
    if (!v.is_number()) corrupt(std::string("'") + name + "' holds a non-numeric value");
    out.push_back(v.get<double>());
  }
}

}  // namespace

std::string serialize_model(const ModelWeights& w) {
  const ParamLayout l = w.layout();
  if (w.params.size() != l.total) {
    throw Error(ErrorCode::CorruptModel, "parameter vector does not match architecture");
  }
  ordered_json j;
  j["format"] = kFormat;
  j["schema_version"] = kModelSchemaVersion;
  j["arch_tag"] = w.arch.tag();
  j["variant"] = to_string(w.arch.variant);
  j["param_count"] = l.total;
  j["sigma_floor"] = kSigmaFloor;
  ordered_json layers;
  layers["input"] = slice(w.params, l.input, l.fc1_weight);
  layers["fc1"] = dense_block(w.params, l.fc1_weight, l.fc1_bias, l.fc2_weight);
  layers["fc2"] = dense_block(w.params, l.fc2_weight, l.fc2_bias, l.out_weight);
  layers["out"] = dense_block(w.params, l.out_weight, l.out_bias, l.total);
  j["layers"] = std::move(layers);
  j["conf_mean"] = w.conf_mean;
  j["conf_std"] = w.conf_std;
  j["metadata"] = {{"seed", w.seed}, {"config_digest", w.config_digest}};
  return j.dump(1) + "\n";
}

ModelWeights parse_model(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    corrupt(std::string("not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("format", "") != kFormat) corrupt("not a keygaze model file");
    if (j.at("schema_version").get<int>() != kModelSchemaVersion) {
      corrupt("unsupported schema_version " + j.at("schema_version").dump());
    }

    const std::string tag = j.at("arch_tag").get<std::string>();
    ModelWeights w;
    bool known = false;
    for (InputVariant v : {InputVariant::Cgu, InputVariant::Net0, InputVariant::ReluConf}) {
      if (ArchDescriptor::standard(v).tag() == tag) {
        w.arch = ArchDescriptor::standard(v);
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::ArchMismatch, "model architecture '" + tag + "' is not supported");
    if (j.contains("variant") && j["variant"].get<std::string>() != to_string(w.arch.variant)) {
      corrupt("variant field disagrees with arch_tag");
    }

    const ParamLayout l = w.layout();
    const auto& layers = j.at("layers");
    w.params.reserve(l.total);
    append_numbers(layers.at("input"), l.fc1_weight - l.input, "input", w.params);
    append_numbers(layers.at("fc1").at("weight"), l.fc1_bias - l.fc1_weight, "fc1.weight", w.params);
    append_numbers(layers.at("fc1").at("bias"), l.fc2_weight - l.fc1_bias, "fc1.bias", w.params);
    append_numbers(layers.at("fc2").at("weight"), l.fc2_bias - l.fc2_weight, "fc2.weight", w.params);
    append_numbers(layers.at("fc2").at("bias"), l.out_weight - l.fc2_bias, "fc2.bias", w.params);
    append_numbers(layers.at("out").at("weight"), l.out_bias - l.out_weight, "out.weight", w.params);
    append_numbers(layers.at("out").at("bias"), l.total - l.out_bias, "out.bias", w.params);
    if (j.contains("param_count") && j["param_count"].get<std::size_t>() != l.total) {
      corrupt("param_count " + j["param_count"].dump() + " does not match architecture");
    }

    w.conf_mean = j.at("conf_mean").get<double>();
    w.conf_std = j.at("conf_std").get<double>();
    if (!(w.conf_std > 0.0)) corrupt("conf_std must be positive");
    if (j.contains("metadata")) {
      const auto& meta = j["metadata"];
      w.seed = meta.value("seed", std::uint64_t{0});
      w.config_digest = meta.value("config_digest", std::string{});
    }
    return w;
  } catch (const ordered_json::exception& e) {
    corrupt(std::string("malformed model document: ") + e.what());
  }
}

void save_model(const ModelWeights& w, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(w));
}

ModelWeights load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

}  // namespace keygaze
