// Python bindings. Structured values cross the boundary as JSON text; the
// package __init__ turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "examforge/app.hpp"
#include "examforge/codec.hpp"
#include "examforge/error.hpp"

namespace py = pybind11;
using namespace examforge;
using nlohmann::json;

namespace {

template <typename T, typename Parse>
T enum_field(const json& j, const char* key, T fallback, Parse parse) {
  if (!j.contains(key)) return fallback;
  auto v = parse(j.at(key).get<std::string>());
  if (!v) throw Error("bad-question", std::string("unknown ") + key + " " + j.at(key).dump());
  return *v;
}

Question question_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    Question q;
    q.id = j.value("id", "");
    q.kind = enum_field(j, "kind", QuestionKind::kMcq, parse_question_kind);
    q.stem = j.value("stem", "");
    if (j.contains("explanation") && j["explanation"].is_string()) q.explanation = j["explanation"].get<std::string>();
    q.past_paper_id = j.value("past_paper_id", "");
    q.course_id = j.value("course_id", "");
    q.concept_ids = j.value("concept_ids", std::vector<std::string>{});
    q.state = enum_field(j, "state", QuestionState::kDraft, parse_question_state);
    q.fingerprint = j.value("fingerprint", "");
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      q.provenance.source_document_id = p.value("source_document_id", "");
      q.provenance.generator = enum_field(p, "generator", Generator::kManual, parse_generator);
      q.provenance.confidence = p.value("confidence", 1.0);
    }
    for (const auto& c : j.value("choices", json::array()))
      q.choices.push_back({c.at("index").get<int>(), c.at("text").get<std::string>(), c.value("is_correct", false)});
    for (const auto& p : j.value("parts", json::array()))
      q.parts.push_back({p.at("index").get<int>(), p.at("prompt").get<std::string>(), p.value("expected_answer", ""),
                         p.value("marks", 1)});
    return q;
  } catch (const json::exception& e) {
    throw Error("bad-question", e.what());
  }
}

Day day_arg(const std::string& s) {
  auto d = parse_date(s);
  if (!d) throw Error("bad-date", "expected YYYY-MM-DD, got " + s);
  return *d;
}

class Bank {
 public:
  Bank(const std::string& database, const std::filesystem::path& fixtures_dir,
       const std::filesystem::path& prompt_file, bool review_first) {
    AppConfig cfg;
    cfg.database_url = database;
    cfg.fixtures_dir = fixtures_dir;
    cfg.prompt_file = prompt_file;
    cfg.review_first = review_first;
    cfg.ocr_provider = "fixture";
    cfg.synth_provider = "local";
    app_ = std::make_unique<App>(cfg);
  }

  std::string seed(const std::filesystem::path& seed_file) {
    std::ifstream in(seed_file);
    if (!in) throw Error("bad-seed", "cannot read " + seed_file.string());
    json seed;
    try {
      seed = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("bad-seed", e.what());
    }
    return to_json(load_seed(*app_->store, seed)).dump();
  }

  std::string process(const std::filesystem::path& file, const std::string& course, const std::string& title,
                      int year) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("unknown-document", "cannot read " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const auto bytes = buf.str();
    std::span<const std::uint8_t> view(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
    const auto name = file.filename().string();
    const auto doc = app_->store->put_document(name, sniff_content_type(view, name), view);
    const auto job_id = app_->pipeline->submit_job(doc.id, course_id(course), {title, year});
    app_->pipeline->run_job(job_id);
    const auto job = app_->pipeline->job(job_id);
    json out = {{"job_id", job_id}, {"state", to_string(job.state)}};
    if (job.result) {
      out["paper_id"] = job.result->past_paper_id;
      out["accepted"] = job.result->accepted_count;
      out["dropped"] = job.result->dropped_count;
    }
    if (job.failure)
      out["failure"] = {{"stage", job.failure->stage}, {"code", job.failure->code}, {"message", job.failure->message}};
    return out.dump();
  }

  std::string questions(const std::string& paper_id) {
    json out = json::array();
    for (int page = 1;; ++page) {
      auto p = app_->store->query_questions({.past_paper_id = paper_id, .page = page, .page_size = 100}, Role::kAdmin);
      for (const auto& q : p.items) out.push_back(to_json(q));
      if (p.items.size() < 100) break;
    }
    return out.dump();
  }

  std::string export_bank(const std::string& paper_id) { return app_->store->export_bank(paper_id); }

  std::string import_bank(const std::string& document, const std::string& course) {
    const auto r = app_->store->import_bank(document, course_id(course));
    return json{{"paper_id", r.past_paper_id}, {"inserted", r.inserted}, {"skipped", r.skipped}}.dump();
  }

  std::vector<std::string> integrity() { return app_->store->check_integrity(); }

 private:
  std::string course_id(const std::string& id_or_code) {
    if (app_->store->course(id_or_code)) return id_or_code;
    if (auto c = app_->store->course_by_code(id_or_code)) return c->id;
    throw Error("unknown-course", "unknown course " + id_or_code);
  }

  std::unique_ptr<App> app_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "examforge core";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(error.ptr(), py::make_tuple(e.code(), e.what()).ptr());
    }
  });

  m.def("normalize_text", &normalize_text, py::arg("text"));
  m.def(
      "fingerprint", [](const std::string& q) { return question_fingerprint(question_from_json(q)); },
      py::arg("question_json"));
  m.def(
      "validate", [](const std::string& q) { return validate_question(question_from_json(q)).violations; },
      py::arg("question_json"));
  m.def(
      "compute_dau",
      [](const std::vector<std::pair<std::string, std::string>>& events, const std::string& from,
         const std::string& to) {
        std::vector<EngagementEvent> in;
        for (const auto& [user, at] : events) {
          auto ts = parse_rfc3339(at);
          if (!ts) throw Error("bad-timestamp", "not RFC 3339: " + at);
          in.push_back({user, *ts});
        }
        std::vector<std::pair<std::string, int>> out;
        for (const auto& p : examforge::compute_dau(in, {day_arg(from), day_arg(to)}))
          out.emplace_back(format_date(p.day), p.dau);
        return out;
      },
      py::arg("events"), py::arg("start"), py::arg("end"));
  m.def("percent_change", &percent_change, py::arg("baseline_mean"), py::arg("current_mean"));

  py::class_<Bank>(m, "Bank")
      .def(py::init<const std::string&, const std::filesystem::path&, const std::filesystem::path&, bool>(),
           py::arg("database") = ":memory:", py::arg("fixtures_dir") = "fixtures/layouts",
           py::arg("prompt_file") = "prompts/system.txt", py::arg("review_first") = false)
      .def("seed", &Bank::seed, py::arg("seed_file"))
      .def("process", &Bank::process, py::arg("file"), py::arg("course"), py::arg("title"), py::arg("year"),
           py::call_guard<py::gil_scoped_release>())
      .def("questions", &Bank::questions, py::arg("paper_id"))
      .def("export_bank", &Bank::export_bank, py::arg("paper_id"))
      .def("import_bank", &Bank::import_bank, py::arg("document"), py::arg("course"))
      .def("integrity", &Bank::integrity);
}
