#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "examforge/api.hpp"
#include "examforge/engagement.hpp"
#include "examforge/events.hpp"
#include "examforge/pipeline.hpp"
#include "examforge/store.hpp"
#include "examforge/sync.hpp"
#include "examforge/upload.hpp"

namespace examforge {

// Settings shared by every entry point. Keys mirror the environment
// variable names, which is also the shape of a --config file.
struct AppConfig {
  std::string database_url = "examforge.db";
  std::string ocr_provider = "fixture";    // OCR_PROVIDER: fixture | remote
  std::string synth_provider = "local";    // SYNTH_PROVIDER: local | remote
  std::filesystem::path fixtures_dir = "fixtures/layouts";  // OCR_FIXTURES_DIR
  std::string ocr_endpoint;
  std::string ocr_api_key;
  std::string llm_endpoint;
  std::string llm_api_key;
  std::string llm_model = "o3-mini";
  std::filesystem::path prompt_file = "prompts/system.txt";  // PROMPT_FILE
  bool review_first = false;                                // REVIEW_FIRST
  std::string bind_addr = "127.0.0.1:8080";
  std::filesystem::path auth_tokens_file;
  int workers = 2;  // PIPELINE_WORKERS

  // Applies recognized keys from a flat string map (env or config file).
  // Unknown keys are ignored; malformed values throw Error("bad-config").
  void apply(const std::map<std::string, std::string>& values);
  // Values of every recognized variable present in the process environment.
  static std::map<std::string, std::string> from_environment();
  // A --config JSON object; non-string scalars are stringified.
  static std::map<std::string, std::string> from_file(const std::filesystem::path& path);
};

// "sqlite:///abs/path", "sqlite://rel/path", "file:path", ":memory:" or a
// bare path. Server URLs are rejected with Error("unsupported-database").
std::string database_path(const std::string& url);

struct SeedCounts {
  int institutions = 0;
  int courses = 0;
  int users = 0;
  int concepts = 0;
};

// Loads {"institutions": [...], "courses": [...], "users": [...],
// "concepts": [...]}; idempotent.
SeedCounts load_seed(ContentStore& store, const nlohmann::json& seed);
nlohmann::json to_json(const SeedCounts& c);

// Every module wired together over one store.
struct App {
  explicit App(const AppConfig& config, Clock clock = system_clock(), PipelineConfig pipeline_config = {});

  AppConfig config;
  std::shared_ptr<ContentStore> store;
  std::shared_ptr<EventHub> events;
  std::shared_ptr<Pipeline> pipeline;
  std::shared_ptr<Engagement> engagement;
  std::shared_ptr<SyncService> sync;
  std::shared_ptr<UploadManager> uploads;
  std::shared_ptr<Api> api;

  [[nodiscard]] JobOutcomeLookup outcome_lookup() const;
};

std::shared_ptr<OcrProvider> make_ocr_provider(const AppConfig& config, Clock clock);
std::shared_ptr<SynthesisProvider> make_synthesis_provider(const AppConfig& config);

}  // namespace examforge
