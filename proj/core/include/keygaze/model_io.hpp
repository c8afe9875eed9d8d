// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model_io.hpp
 * @brief  Model file reading and writing.
 *
 * A model file is a single JSON document:
 *
 *   {
 *     "format": "keygaze-model",
 *     "schema_version": 1,
 *     "arch_tag": "cgu10-fc10-fc10-out3",
 *     "variant": "cgu",
 *     "param_count": 283,
 *     "sigma_floor": 0.001,
 *     "layers": {
 *       "input": [...],                       // 3 per CGU: w_q, b_q, w_c
 *       "fc1": {"weight": [...], "bias": [...]},
 *       "fc2": {"weight": [...], "bias": [...]},
 *       "out": {"weight": [...], "bias": [...]}
 *     },
 *     "conf_mean": 0.61,
 *     "conf_std": 0.32,
 *     "metadata": {"seed": 7, "config_digest": "..."}
 *   }
 *
 * Weight matrices are row-major (output unit major). Numbers are written in
 * shortest round-trip form, so load(save(w)) == w bit for bit.
 */
#pragma once

#include <filesystem>
#include <string>

#include "keygaze/network.hpp"

namespace keygaze {

inline constexpr int kModelSchemaVersion = 1;

std::string serialize_model(const ModelWeights& w);
ModelWeights parse_model(const std::string& text);

void save_model(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_model(const std::filesystem::path& path);

}  // namespace keygaze
