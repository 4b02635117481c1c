#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovp/nn.hpp"

namespace ovp {

// Shared checkpoint envelope for the perceptual and dynamic modules:
// magic, version, JSON header (kind + hyperparameter echo + array index),
// then raw float64 array payloads in index order.
void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& hyper,
                     const std::vector<nn::ParamRef>& params);

struct LoadedCheckpoint {
  std::string kind;
  nlohmann::json hyper;
  std::map<std::string, nn::Tensor> arrays;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Assigns arrays onto params by name; every name must exist with an equal
// shape on both sides.
void assign_params(const LoadedCheckpoint& ckpt,
                   const std::vector<nn::ParamRef>& params);

}  // namespace ovp
