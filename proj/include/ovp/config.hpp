#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "ovp/dynamics.hpp"
#include "ovp/perceptual.hpp"
#include "ovp/physim.hpp"

namespace ovp {

struct MetricSettings {
  int lpsnr_window = 16;
  std::uint64_t embedder_seed = 0x5EEDULL;

  nlohmann::json to_json() const;
  static MetricSettings from_json(const nlohmann::json& j);
};

// One structured config for the whole pipeline. Sub-seeds default to values
// derived from the global seed; explicit sub-seeds win.
struct RunConfig {
  std::uint64_t seed = 0;
  physim::WorldConfig world;
  perceptual::PerceptualConfig perceptual;
  dynamics::DynamicConfig dynamic;
  MetricSettings metrics;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
};

}  // namespace ovp
