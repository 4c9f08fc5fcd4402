#include "clinstructor/config.hpp"

#include <cstdlib>
#include <set>

#include "clinstructor/mock_backend.hpp"

namespace clinstructor {

void PipelineConfig::validate() const {
  if (backend != "mock" && backend != "http") {
    throw ConfigError("backend must be \"mock\" or \"http\", got \"" + backend + "\"");
  }
  if (k < 1) throw ConfigError("k must be >= 1");
  if (candidates_per_note < 1) throw ConfigError("candidates_per_note must be >= 1");
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (identification_sample_n < 2) throw ConfigError("identification_sample_n must be >= 2");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  encoder.validate();
  train.validate();
}

std::filesystem::path PipelineConfig::resolved_cache_dir() const {
  if (cache_dir) return *cache_dir;
  if (const char* env = std::getenv("CLINSTRUCTOR_CACHE_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return work_dir / ".clinstructor_cache";
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key " + where + key);
  }
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"backend", "model_id", "api_base", "temperature", "max_tokens", "parallelism",
                  "max_schema_retries", "k", "candidates_per_note", "identification_sample_n",
                  "seeds", "paths", "cache", "encoder", "train"},
                 "");
  PipelineConfig cfg;
  try {
    cfg.backend = j.value("backend", cfg.backend);
    cfg.model_id = j.value("model_id", cfg.model_id);
    if (j.contains("api_base")) cfg.api_base = j["api_base"].get<std::string>();
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    cfg.max_schema_retries = j.value("max_schema_retries", cfg.max_schema_retries);
    cfg.k = j.value("k", cfg.k);
    cfg.candidates_per_note = j.value("candidates_per_note", cfg.candidates_per_note);
    cfg.identification_sample_n = j.value("identification_sample_n", cfg.identification_sample_n);
    cfg.use_cache = j.value("cache", cfg.use_cache);
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      reject_unknown(s, {"sampling", "training"}, "seeds.");
      cfg.sampling_seed = s.value("sampling", cfg.sampling_seed);
      cfg.training_seed = s.value("training", cfg.training_seed);
    }
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown(p, {"cache_dir", "work_dir"}, "paths.");
      if (p.contains("cache_dir")) cfg.cache_dir = p["cache_dir"].get<std::string>();
      if (p.contains("work_dir")) cfg.work_dir = p["work_dir"].get<std::string>();
    }
    if (j.contains("encoder")) {
      reject_unknown(j["encoder"], {"hash_dim", "ngram_orders", "salt_scheme"}, "encoder.");
      cfg.encoder = predictor::encoder_from_json(j["encoder"]);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      reject_unknown(t, {"learning_rate", "epochs", "l2", "eval_every", "grid"}, "train.");
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.l2 = t.value("l2", cfg.train.l2);
      cfg.train.eval_every = t.value("eval_every", cfg.train.eval_every);
      cfg.train.grid = t.value("grid", cfg.train.grid);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
  }
  cfg.train.seed = cfg.training_seed;
  cfg.validate();
  return cfg;
}

json to_json(const PipelineConfig& cfg) {
  json j{{"backend", cfg.backend},
         {"model_id", cfg.model_id},
         {"temperature", cfg.temperature},
         {"max_tokens", cfg.max_tokens},
         {"parallelism", cfg.parallelism},
         {"max_schema_retries", cfg.max_schema_retries},
         {"k", cfg.k},
         {"candidates_per_note", cfg.candidates_per_note},
         {"identification_sample_n", cfg.identification_sample_n},
         {"seeds", {{"sampling", cfg.sampling_seed}, {"training", cfg.training_seed}}},
         {"paths", {{"work_dir", cfg.work_dir.string()}}},
         {"cache", cfg.use_cache},
         {"encoder", predictor::to_json(cfg.encoder)},
         {"train",
          {{"learning_rate", cfg.train.learning_rate},
           {"epochs", cfg.train.epochs},
           {"l2", cfg.train.l2},
           {"eval_every", cfg.train.eval_every},
           {"grid", cfg.train.grid}}}};
  if (cfg.api_base) j["api_base"] = *cfg.api_base;
  if (cfg.cache_dir) j["paths"]["cache_dir"] = cfg.cache_dir->string();
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

std::unique_ptr<llm::Gateway> make_gateway(const PipelineConfig& cfg) {
  cfg.validate();
  std::shared_ptr<llm::ChatBackend> backend;
  if (cfg.backend == "mock") {
    backend = std::make_shared<llm::MockBackend>(corpus::default_attribute_pool(),
                                                 cfg.candidates_per_note);
  } else {
    llm::HttpOptions opts;
    if (cfg.api_base) {
      opts.base_url = *cfg.api_base;
      if (const char* key = std::getenv("CLINSTRUCTOR_API_KEY")) opts.api_key = key;
    } else {
      opts = llm::http_options_from_env();
    }
    backend = std::make_shared<llm::HttpBackend>(opts);
  }
  std::optional<llm::ResponseCache> cache;
  if (cfg.use_cache) cache.emplace(cfg.resolved_cache_dir());
  return std::make_unique<llm::Gateway>(
      backend, std::move(cache), llm::GatewayOptions{cfg.max_schema_retries, cfg.parallelism});
}

}  // namespace clinstructor
