// examforge: serve the API, process papers headless, seed, export, import.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "examforge/app.hpp"
#include "examforge/error.hpp"
#include "examforge/server.hpp"

namespace {

using examforge::App;
using examforge::AppConfig;
using examforge::Error;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Thrown for bad input the user can fix; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path);
  out << content;
}

std::string resolve_course(examforge::ContentStore& store, const std::string& id_or_code) {
  if (store.course(id_or_code)) return id_or_code;
  if (auto c = store.course_by_code(id_or_code)) return c->id;
  throw UsageError("unknown course " + id_or_code);
}

struct Options {
  std::string config_file;
  std::map<std::string, std::string> flags;  // same keys as the environment
  bool json_output = false;

  std::string process_file;
  std::string course;
  std::string paper_title;
  int paper_year = 0;
  std::string provider;
  std::string out;
  std::string paper_id;
  std::string import_file;
  std::string fixtures_dir;
};

AppConfig build_config(const Options& o) {
  AppConfig cfg;
  if (!o.config_file.empty()) cfg.apply(AppConfig::from_file(o.config_file));
  cfg.apply(AppConfig::from_environment());
  cfg.apply(o.flags);
  return cfg;
}

int cmd_process(const Options& o) {
  const auto bytes = read_file(o.process_file);
  auto flags = o.flags;
  if (!o.provider.empty()) {
    if (o.provider != "local" && o.provider != "remote") throw UsageError("--provider must be local or remote");
    flags["OCR_PROVIDER"] = o.provider == "local" ? "fixture" : "remote";
    flags["SYNTH_PROVIDER"] = o.provider;
  }
  Options with_provider = o;
  with_provider.flags = flags;
  App app(build_config(with_provider));
  const auto course_id = resolve_course(*app.store, o.course);

  const auto started = std::chrono::steady_clock::now();
  const std::string filename = std::filesystem::path(o.process_file).filename().string();
  std::span<const std::uint8_t> view(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
  const auto doc = app.store->put_document(filename, examforge::sniff_content_type(view, filename), view);
  const auto job_id = app.pipeline->submit_job(doc.id, course_id, {o.paper_title, o.paper_year});
  const auto state = app.pipeline->run_job(job_id);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const auto job = app.pipeline->job(job_id);

  if (state != examforge::JobState::kDone) {
    const auto& f = *job.failure;
    if (o.json_output)
      std::cout << json{{"job_id", job_id}, {"state", "failed"}, {"stage", f.stage}, {"code", f.code},
                        {"message", f.message}}
                       .dump()
                << "\n";
    std::cerr << "process failed in " << f.stage << ": " << f.code << ": " << f.message << "\n";
    return kExitFailure;
  }
  const auto& r = *job.result;
  if (!o.out.empty()) write_file(o.out, app.store->export_bank(r.past_paper_id));
  if (o.json_output) {
    std::cout << json{{"job_id", job_id},
                      {"state", "done"},
                      {"paper_id", r.past_paper_id},
                      {"accepted", r.accepted_count},
                      {"dropped", r.dropped_count},
                      {"seconds", seconds}}
                     .dump()
              << "\n";
  } else {
    std::cout << "accepted=" << r.accepted_count << " dropped=" << r.dropped_count << " seconds=" << seconds
              << " paper_id=" << r.past_paper_id << " job_id=" << job_id << "\n";
  }
  return kExitOk;
}

int cmd_export(const Options& o) {
  App app(build_config(o));
  const auto bank = app.store->export_bank(o.paper_id);
  if (o.out.empty() || o.out == "-")
    std::cout << bank;
  else
    write_file(o.out, bank);
  return kExitOk;
}

int cmd_import(const Options& o) {
  const auto doc = read_file(o.import_file);
  App app(build_config(o));
  const auto r = app.store->import_bank(doc, resolve_course(*app.store, o.course));
  if (o.json_output)
    std::cout << json{{"paper_id", r.past_paper_id}, {"inserted", r.inserted}, {"skipped", r.skipped}}.dump() << "\n";
  else
    std::cout << "inserted=" << r.inserted << " skipped=" << r.skipped << " paper_id=" << r.past_paper_id << "\n";
  return kExitOk;
}

int cmd_seed(const Options& o) {
  const auto path = std::filesystem::path(o.fixtures_dir) / "seed.json";
  json seed;
  try {
    seed = json::parse(read_file(path.string()));
  } catch (const json::exception& e) {
    throw UsageError(path.string() + " is not valid JSON: " + e.what());
  }
  App app(build_config(o));
  const auto counts = examforge::load_seed(*app.store, seed);
  if (o.json_output)
    std::cout << to_json(counts).dump() << "\n";
  else
    std::cout << "institutions=" << counts.institutions << " courses=" << counts.courses << " users=" << counts.users
              << " concepts=" << counts.concepts << "\n";
  return kExitOk;
}

int cmd_serve(const Options& o) {
  // Signals are taken synchronously by this thread; block them before any
  // worker thread exists so they inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  App app(build_config(o));
  if (app.config.auth_tokens_file.empty())
    std::cerr << "warning: AUTH_TOKENS_FILE is not set; every authenticated route will answer 401\n";
  app.pipeline->start();
  const auto recovered = app.pipeline->recover();
  examforge::ServerOptions so;
  so.bind_addr = app.config.bind_addr;
  examforge::Server server(*app.api, *app.uploads, app.events, app.outcome_lookup(), so);
  server.start();
  std::cout << "listening on " << examforge::parse_bind_addr(so.bind_addr).first << ":" << server.port()
            << " (recovered " << recovered.size() << " jobs)" << std::endl;

  for (;;) {
    app.sync->compact();
    app.uploads->expire_idle();
    timespec hour{3600, 0};
    if (sigtimedwait(&signals, nullptr, &hour) > 0) break;
  }
  std::cout << "shutting down" << std::endl;
  server.stop();
  app.pipeline->stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"examforge: exam papers in, question banks out"};
  cli.require_subcommand(1);
  Options o;
  cli.add_option("--config", o.config_file, "JSON file with the same keys as the environment variables")
      ->check(CLI::ExistingFile);
  auto flag_opt = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
  };
  flag_opt(&cli, "--database", "DATABASE_URL", "store location (DATABASE_URL)");
  flag_opt(&cli, "--fixtures", "OCR_FIXTURES_DIR", "directory of <sha256>.layout.json files (OCR_FIXTURES_DIR)");
  flag_opt(&cli, "--prompt", "PROMPT_FILE", "system instructions asset (PROMPT_FILE)");
  cli.add_flag_callback("--review-first", [&o] { o.flags["REVIEW_FIRST"] = "true"; },
                        "hold generated questions as drafts");
  cli.add_flag("--json", o.json_output, "machine-readable output");

  auto* serve = cli.add_subcommand("serve", "run the HTTP and WebSocket service");
  flag_opt(serve, "--bind", "BIND_ADDR", "host:port (BIND_ADDR)");
  flag_opt(serve, "--tokens", "AUTH_TOKENS_FILE", "bearer token table (AUTH_TOKENS_FILE)");
  flag_opt(serve, "--workers", "PIPELINE_WORKERS", "parallel pipeline jobs (PIPELINE_WORKERS)");

  auto* process = cli.add_subcommand("process", "run one document through the pipeline");
  process->add_option("file", o.process_file, "PDF or image of the exam paper")->required();
  process->add_option("--course", o.course, "course id or code")->required();
  process->add_option("--paper-title", o.paper_title, "past paper title")->required();
  process->add_option("--paper-year", o.paper_year, "past paper year")->required();
  process->add_option("--provider", o.provider, "local or remote")->check(CLI::IsMember({"local", "remote"}));
  process->add_option("--out", o.out, "write the resulting .bank.json here");
  process->add_flag("--json", o.json_output, "machine-readable output");

  auto* exp = cli.add_subcommand("export", "write a past paper's bank as .bank.json");
  exp->add_option("--paper-id", o.paper_id, "past paper id")->required();
  exp->add_option("--out", o.out, "output file, - for stdout");

  auto* imp = cli.add_subcommand("import", "load a .bank.json into a course");
  imp->add_option("--file", o.import_file, "bank file")->required();
  imp->add_option("--course", o.course, "course id or code")->required();
  imp->add_flag("--json", o.json_output, "machine-readable output");

  auto* seed = cli.add_subcommand("seed", "load institutions, courses, users and concepts");
  seed->add_option("--fixtures-dir", o.fixtures_dir, "directory holding seed.json")->required();
  seed->add_flag("--json", o.json_output, "machine-readable output");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve) return cmd_serve(o);
    if (*process) return cmd_process(o);
    if (*exp) return cmd_export(o);
    if (*imp) return cmd_import(o);
    if (*seed) return cmd_seed(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    const std::string& c = e.code();
    const bool usage = c == "bad-config" || c == "bad-seed" || c == "bad-interchange" || c == "invalid-content" ||
                       c == "invalid-paper" || c == "unknown-paper" || c == "unknown-course" ||
                       c == "unsupported-database";
    return usage ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
