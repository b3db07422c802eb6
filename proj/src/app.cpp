#include "examforge/app.hpp"

#include <cstdlib>
#include <fstream>

#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

namespace {

constexpr const char* kKeys[] = {"DATABASE_URL", "OCR_PROVIDER",  "SYNTH_PROVIDER", "OCR_FIXTURES_DIR",
                                 "OCR_ENDPOINT", "OCR_API_KEY",   "LLM_ENDPOINT",   "LLM_API_KEY",
                                 "LLM_MODEL",    "PROMPT_FILE",   "REVIEW_FIRST",   "BIND_ADDR",
                                 "AUTH_TOKENS_FILE", "PIPELINE_WORKERS"};

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
  throw Error("bad-config", key + " must be a boolean");
}

}  // namespace

void AppConfig::apply(const std::map<std::string, std::string>& values) {
  auto get = [&](const char* key) -> const std::string* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };
  if (auto v = get("DATABASE_URL")) database_url = *v;
  if (auto v = get("OCR_PROVIDER")) ocr_provider = *v;
  if (auto v = get("SYNTH_PROVIDER")) synth_provider = *v;
  if (auto v = get("OCR_FIXTURES_DIR")) fixtures_dir = *v;
  if (auto v = get("OCR_ENDPOINT")) ocr_endpoint = *v;
  if (auto v = get("OCR_API_KEY")) ocr_api_key = *v;
  if (auto v = get("LLM_ENDPOINT")) llm_endpoint = *v;
  if (auto v = get("LLM_API_KEY")) llm_api_key = *v;
  if (auto v = get("LLM_MODEL")) llm_model = *v;
  if (auto v = get("PROMPT_FILE")) prompt_file = *v;
  if (auto v = get("REVIEW_FIRST")) review_first = parse_bool("REVIEW_FIRST", *v);
  if (auto v = get("BIND_ADDR")) bind_addr = *v;
  if (auto v = get("AUTH_TOKENS_FILE")) auth_tokens_file = *v;
  if (auto v = get("PIPELINE_WORKERS")) {
    try {
      workers = std::stoi(*v);
    } catch (const std::exception&) {
      throw Error("bad-config", "PIPELINE_WORKERS must be an integer");
    }
  }
  if (ocr_provider != "fixture" && ocr_provider != "remote")
    throw Error("bad-config", "OCR_PROVIDER must be fixture or remote");
  if (synth_provider != "local" && synth_provider != "remote")
    throw Error("bad-config", "SYNTH_PROVIDER must be local or remote");
}

std::map<std::string, std::string> AppConfig::from_environment() {
  std::map<std::string, std::string> out;
  for (const char* key : kKeys)
    if (const char* v = std::getenv(key)) out[key] = v;
  return out;
}

std::map<std::string, std::string> AppConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("bad-config", "cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("bad-config", "config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw Error("bad-config", "config file must hold a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return out;
}

std::string database_path(const std::string& url) {
  if (url.rfind("sqlite:///", 0) == 0) return url.substr(9);  // keeps the leading '/'
  if (url.rfind("sqlite://", 0) == 0) return url.substr(9);
  if (url.rfind("sqlite:", 0) == 0) return url.substr(7);
  if (url.rfind("file:", 0) == 0) return url.substr(5);
  if (url.find("://") != std::string::npos)
    throw Error("unsupported-database", "only the embedded store is built in; got " + url);
  return url;
}

SeedCounts load_seed(ContentStore& store, const json& seed) {
  SeedCounts n;
  try {
    for (const auto& i : seed.value("institutions", json::array())) {
      store.put_institution({i.at("id"), i.at("name"), i.value("country_code", std::string{})});
      ++n.institutions;
    }
    for (const auto& c : seed.value("courses", json::array())) {
      Course course{c.at("id"), c.at("code"), c.at("title"), {}};
      for (const auto& inst : c.value("institution_ids", json::array())) course.institution_ids.insert(inst.get<std::string>());
      store.put_course(course);
      ++n.courses;
    }
    for (const auto& c : seed.value("concepts", json::array())) {
      Concept concept_{c.at("id"), c.at("name"), std::nullopt};
      if (c.contains("parent_id") && c["parent_id"].is_string()) concept_.parent_id = c["parent_id"];
      store.put_concept(concept_);
      ++n.concepts;
    }
    for (const auto& u : seed.value("users", json::array())) {
      const auto role = parse_role(u.value("role", std::string("student")));
      if (!role) throw Error("bad-seed", "unknown role for user " + u.at("id").get<std::string>());
      store.put_user({u.at("id"), *role, u.value("institution_id", std::string{}), u.value("display_name", std::string{})});
      ++n.users;
    }
  } catch (const json::exception& e) {
    throw Error("bad-seed", std::string("malformed seed file: ") + e.what());
  }
  return n;
}

json to_json(const SeedCounts& c) {
  return {{"institutions", c.institutions}, {"courses", c.courses}, {"users", c.users}, {"concepts", c.concepts}};
}

std::shared_ptr<OcrProvider> make_ocr_provider(const AppConfig& config, Clock clock) {
  if (config.ocr_provider == "remote") {
    RemoteOcrConfig rc;
    rc.endpoint = config.ocr_endpoint;
    rc.api_key = config.ocr_api_key;
    return std::make_shared<RemoteOcrProvider>(rc, std::move(clock));
  }
  return std::make_shared<FixtureOcrProvider>(config.fixtures_dir, std::move(clock));
}

std::shared_ptr<SynthesisProvider> make_synthesis_provider(const AppConfig& config) {
  auto local = std::make_shared<LocalSynthesisProvider>();
  if (config.synth_provider != "remote") return local;
  RemoteSynthesisConfig rc;
  rc.endpoint = config.llm_endpoint;
  rc.api_key = config.llm_api_key;
  rc.model = config.llm_model;
  return std::make_shared<FallbackSynthesisProvider>(std::make_shared<RemoteSynthesisProvider>(rc), local);
}

App::App(const AppConfig& cfg, Clock clock, PipelineConfig pipeline_config) : config(cfg) {
  auto db = Database::open(database_path(config.database_url));
  bootstrap_schema(*db);
  store = std::make_shared<ContentStore>(db, clock);
  events = std::make_shared<EventHub>();
  pipeline_config.review_first = pipeline_config.review_first || config.review_first;
  pipeline_config.workers = config.workers;
  if (pipeline_config.prompt_file.empty()) pipeline_config.prompt_file = config.prompt_file;
  pipeline = std::make_shared<Pipeline>(store, make_ocr_provider(config, clock), make_synthesis_provider(config),
                                        events, pipeline_config);
  engagement = std::make_shared<Engagement>(store);
  sync = std::make_shared<SyncService>(store, engagement);
  auto submitter = [p = pipeline](const std::string& doc, const std::string& course, const PaperMeta& paper) {
    auto id = p->submit_job(doc, course, paper);
    p->enqueue(id);
    return id;
  };
  uploads = std::make_shared<UploadManager>(store, submitter, events, UploadConfig{}, clock);
  ApiContext ctx;
  ctx.store = store;
  ctx.engagement = engagement;
  ctx.sync = sync;
  ctx.pipeline = pipeline;
  if (!config.auth_tokens_file.empty()) ctx.tokens = TokenTable::load(config.auth_tokens_file);
  api = std::make_shared<Api>(std::move(ctx));
}

JobOutcomeLookup App::outcome_lookup() const {
  return [p = pipeline](const std::string& job_id) -> std::optional<JobOutcome> {
    PipelineJob j;
    try {
      j = p->job(job_id);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (j.state == JobState::kDone && j.result)
      return JobOutcome{true, j.result->past_paper_id, j.result->accepted_count, {}, {}};
    if (j.state == JobState::kFailed && j.failure)
      return JobOutcome{false, {}, 0, j.failure->code, j.failure->message};
    return std::nullopt;
  };
}

}  // namespace examforge
