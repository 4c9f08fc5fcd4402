#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "clinstructor/llm_gateway.hpp"
#include "clinstructor/predictor.hpp"

namespace clinstructor {

struct PipelineConfig {
  std::string backend = "mock";  // "mock" | "http"
  std::string model_id = "mock";
  std::optional<std::string> api_base;  // overrides CLINSTRUCTOR_API_BASE
  double temperature = 0.0;
  int max_tokens = 4096;
  std::size_t parallelism = 4;
  std::size_t max_schema_retries = 3;
  std::size_t k = 50;
  std::size_t candidates_per_note = 20;
  std::size_t identification_sample_n = 1000;
  std::uint64_t sampling_seed = 0;
  std::uint64_t training_seed = 0;
  std::optional<std::filesystem::path> cache_dir;
  std::filesystem::path work_dir = ".";
  bool use_cache = true;
  predictor::EncoderConfig encoder;
  predictor::TrainConfig train;

  void validate() const;
  // Explicit cache_dir, else $CLINSTRUCTOR_CACHE_DIR, else {work_dir}/.clinstructor_cache.
  std::filesystem::path resolved_cache_dir() const;
};

// Unknown keys are rejected so typos do not silently fall back to defaults.
PipelineConfig config_from_json(const json& j);
json to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

std::unique_ptr<llm::Gateway> make_gateway(const PipelineConfig& cfg);

}  // namespace clinstructor
