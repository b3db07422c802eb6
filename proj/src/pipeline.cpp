#include "examforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

namespace {

constexpr std::pair<JobState, std::string_view> kJobStateNames[] = {
    {JobState::kQueued, "queued"},         {JobState::kOcr, "ocr"},   {JobState::kGenerating, "generating"},
    {JobState::kInserting, "inserting"},   {JobState::kDone, "done"}, {JobState::kFailed, "failed"},
};

// Percent at which each stage starts; events within a stage only grow.
int stage_floor(JobState s) {
  switch (s) {
    case JobState::kQueued: return 0;
    case JobState::kOcr: return 5;
    case JobState::kGenerating: return 30;
    case JobState::kInserting: return 85;
    case JobState::kDone:
    case JobState::kFailed: return 100;
  }
  return 0;
}

std::optional<ParagraphKey> paragraph_at(const OrderedText& text, std::size_t offset) {
  for (const auto& [key, range] : text.offsets)
    if (offset >= range.first && offset < range.second) return key;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(JobState s) {
  for (auto [state, name] : kJobStateNames)
    if (state == s) return name;
  return "unknown";
}

std::optional<JobState> parse_job_state(std::string_view s) {
  for (auto [state, name] : kJobStateNames)
    if (name == s) return state;
  return std::nullopt;
}

bool is_terminal(JobState s) { return s == JobState::kDone || s == JobState::kFailed; }

Pipeline::Pipeline(std::shared_ptr<ContentStore> store, std::shared_ptr<OcrProvider> ocr,
                   std::shared_ptr<SynthesisProvider> synthesis, std::shared_ptr<EventHub> events,
                   PipelineConfig config)
    : store_(std::move(store)),
      ocr_(std::move(ocr)),
      synthesis_(std::move(synthesis)),
      events_(events ? std::move(events) : std::make_shared<EventHub>()),
      config_(std::move(config)) {
  if (config_.max_stage_attempts < 1) config_.max_stage_attempts = 1;
  if (config_.workers < 1) config_.workers = 1;
  if (config_.window_concurrency < 1) config_.window_concurrency = 1;
}

Pipeline::~Pipeline() { stop(); }

// --- persistence -------------------------------------------------------------

std::optional<PipelineJob> Pipeline::load(const std::string& job_id) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare(
      "SELECT id, document_id, course_id, paper_title, paper_year, state, attempts, timestamps, failure, result "
      "FROM jobs WHERE id = ?");
  st.bind_all(job_id);
  if (!st.step()) return std::nullopt;
  PipelineJob job;
  job.id = st.text(0);
  job.document_id = st.text(1);
  job.course_id = st.text(2);
  job.paper = {st.text(3), static_cast<int>(st.integer(4))};
  job.state = parse_job_state(st.text(5)).value_or(JobState::kFailed);
  const json attempts = json::parse(st.text(6));
  for (const auto& [k, v] : attempts.items()) job.attempts[k] = v.get<int>();
  const json stamps = json::parse(st.text(7));
  for (const auto& [k, v] : stamps.items()) job.timestamps[k] = parse_rfc3339(v.get<std::string>()).value_or(Timestamp{});
  if (auto f = st.opt_text(8)) {
    auto j = json::parse(*f);
    job.failure = JobFailure{j.at("stage"), j.at("code"), j.at("message")};
  }
  if (auto r = st.opt_text(9)) {
    auto j = json::parse(*r);
    job.result = JobResult{j.at("past_paper_id"), j.at("accepted_count"), j.at("dropped_count")};
  }
  return job;
}

void Pipeline::save(const PipelineJob& job) {
  json attempts = json::object();
  for (const auto& [k, v] : job.attempts) attempts[k] = v;
  json stamps = json::object();
  for (const auto& [k, v] : job.timestamps) stamps[k] = format_rfc3339(v);
  std::optional<std::string> failure;
  if (job.failure)
    failure = json{{"stage", job.failure->stage}, {"code", job.failure->code}, {"message", job.failure->message}}.dump();
  std::optional<std::string> result;
  if (job.result)
    result = json{{"past_paper_id", job.result->past_paper_id},
                  {"accepted_count", job.result->accepted_count},
                  {"dropped_count", job.result->dropped_count}}
                 .dump();
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare(
      "INSERT INTO jobs (id, document_id, course_id, paper_title, paper_year, state, attempts, timestamps, failure, "
      "result) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?) "
      "ON CONFLICT(id) DO UPDATE SET state = excluded.state, attempts = excluded.attempts, "
      "timestamps = excluded.timestamps, failure = excluded.failure, result = excluded.result");
  st.bind_all(job.id, job.document_id, job.course_id, job.paper.title, job.paper.year, to_string(job.state),
              attempts.dump(), stamps.dump(), failure, result);
  st.run();
}

void Pipeline::emit_raw(const ProgressEvent& e) {
  {
    auto& db = store_->db();
    auto lock = db.lock();
    auto st = db.prepare("INSERT INTO job_events (job_id, stage, percent, log, at) VALUES (?, ?, ?, ?, ?)");
    st.bind_all(e.id, e.stage, e.percent, e.log, format_rfc3339(e.at));
    st.run();
  }
  events_->publish(e);
}

void Pipeline::emit(const PipelineJob& job, const std::string& stage, int percent, const std::string& log) {
  emit_raw(ProgressEvent{job.id, stage, std::clamp(percent, 0, 100), log, store_->now()});
}

void Pipeline::transition(PipelineJob& job, JobState next) {
  Timestamp at = store_->now();
  for (const auto& [state, stamp] : job.timestamps) at = std::max(at, stamp);
  job.state = next;
  job.timestamps[std::string(to_string(next))] = at;
  save(job);
  switch (next) {
    case JobState::kDone:
      emit(job, "done", 100,
           "done: " + std::to_string(job.result ? job.result->accepted_count : 0) + " questions inserted");
      break;
    case JobState::kFailed:
      emit(job, "failed", 100,
           job.failure ? "failed in " + job.failure->stage + ": " + job.failure->code + ": " + job.failure->message
                       : "failed");
      break;
    case JobState::kQueued:
      break;
    default:
      emit(job, std::string(to_string(next)), stage_floor(next), "entered " + std::string(to_string(next)));
  }
  if (config_.on_stage_boundary) config_.on_stage_boundary(job.id, next);
}

std::string Pipeline::load_system_instructions() const {
  if (!config_.prompt_file.empty()) {
    std::ifstream in(config_.prompt_file, std::ios::binary);
    if (in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      if (!buf.str().empty()) return buf.str();
    }
  }
  return config_.system_instructions;
}

// --- public API ----------------------------------------------------------------

std::string Pipeline::submit_job(const std::string& document_id, const std::string& course_id,
                                 const PaperMeta& paper) {
  if (!store_->document(document_id)) throw Error("unknown-document", "no document " + document_id);
  if (!store_->course(course_id)) throw Error("unknown-course", "no course " + course_id);
  PipelineJob job;
  job.id = new_id("job");
  job.document_id = document_id;
  job.course_id = course_id;
  job.paper = paper;
  job.state = JobState::kQueued;
  job.timestamps["queued"] = store_->now();
  save(job);
  emit(job, "uploading", 100, "document " + document_id + " handed to pipeline as job " + job.id);
  return job.id;
}

PipelineJob Pipeline::job(const std::string& job_id) {
  auto job = load(job_id);
  if (!job) throw Error("unknown-job", "no job " + job_id);
  return *job;
}

std::vector<PipelineJob> Pipeline::jobs() {
  std::vector<std::string> ids;
  {
    auto& db = store_->db();
    auto lock = db.lock();
    auto st = db.prepare("SELECT id FROM jobs ORDER BY id");
    while (st.step()) ids.push_back(st.text(0));
  }
  std::vector<PipelineJob> out;
  for (const auto& id : ids)
    if (auto j = load(id)) out.push_back(std::move(*j));
  return out;
}

JobStatus Pipeline::job_status(const std::string& job_id) {
  PipelineJob j = job(job_id);
  JobStatus status{j.state, {}, j.result, j.failure};
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare("SELECT stage, percent, log, at FROM job_events WHERE job_id = ? ORDER BY seq");
  st.bind_all(job_id);
  while (st.step())
    status.log.push_back({job_id, st.text(0), static_cast<int>(st.integer(1)), st.text(2), parse_rfc3339(st.text(3)).value_or(Timestamp{})});
  return status;
}

std::optional<Pipeline::StageFailure> Pipeline::attempt_stage(PipelineJob& job, const std::string& stage,
                                                              const std::function<void()>& fn) {
  for (int attempt = job.attempts[stage] + 1;; ++attempt) {
    job.attempts[stage] = attempt;
    save(job);
    try {
      fn();
      return std::nullopt;
    } catch (const Error& e) {
      if (!e.retryable() || attempt >= config_.max_stage_attempts) return StageFailure{e.code(), e.what()};
      emit(job, stage, stage_floor(job.state),
           "attempt " + std::to_string(attempt) + " failed (" + e.code() + "), retrying");
      config_.sleep(config_.stage_backoff * (1 << (attempt - 1)));
    } catch (const std::exception& e) {
      return StageFailure{"internal-error", e.what()};
    }
  }
}

JobState Pipeline::run_job(const std::string& job_id) {
  PipelineJob j = job(job_id);
  auto fail = [&](const std::string& stage, const StageFailure& f) {
    j.failure = JobFailure{stage, f.code, f.message};
    transition(j, JobState::kFailed);
  };
  while (!is_terminal(j.state)) {
    switch (j.state) {
      case JobState::kQueued:
        transition(j, JobState::kOcr);
        break;
      case JobState::kOcr:
        if (auto f = attempt_stage(j, "ocr", [&] { run_ocr(j); }))
          fail("ocr", *f);
        else
          transition(j, JobState::kGenerating);
        break;
      case JobState::kGenerating:
        if (auto f = attempt_stage(j, "generating", [&] { run_generation(j); }))
          fail("generating", *f);
        else
          transition(j, JobState::kInserting);
        break;
      case JobState::kInserting:
        if (auto f = attempt_stage(j, "inserting", [&] { run_insertion(j); }))
          fail("inserting", *f);
        else
          transition(j, JobState::kDone);
        break;
      default:
        break;
    }
  }
  return j.state;
}

// --- stages --------------------------------------------------------------------

void Pipeline::run_ocr(PipelineJob& job) {
  if (store_->latest_artifact(job.id, "layout")) return;
  const auto doc = store_->document(job.document_id);
  if (!doc) throw Error("unknown-document", "no document " + job.document_id);
  const Bytes bytes = store_->document_bytes(job.document_id);
  emit(job, "ocr", 10, "analyzing " + doc->filename + " (" + std::to_string(doc->size) + " bytes) with " + ocr_->name());
  AnalyzeOutput out = ocr_->analyze(bytes, doc->content_type, job.document_id);
  store_->put_artifact(job.document_id, job.id, "ocr-raw", out.raw_payload);
  json layout = to_json(out.layout);
  layout["provider"] = out.layout.provider_name;
  layout["produced_at"] = format_rfc3339(out.layout.produced_at);
  store_->put_artifact(job.document_id, job.id, "layout", layout.dump());
  emit(job, "ocr", 25, "layout: " + std::to_string(out.layout.pages.size()) + " pages, " +
                           std::to_string(out.layout.tables.size()) + " tables");
}

void Pipeline::run_generation(PipelineJob& job) {
  if (store_->latest_artifact(job.id, "synthesis")) return;
  const auto layout_json = store_->latest_artifact(job.id, "layout");
  if (!layout_json) throw Error("missing-artifact", "layout artifact missing for job " + job.id);
  const LayoutResult layout = parse_layout(*layout_json);
  const OrderedText ordered = layout_to_text(layout);

  ContextTags context;
  context.locale_note = config_.locale_note;
  if (auto course = store_->course(job.course_id)) {
    context.course_code = course->code;
    if (!course->institution_ids.empty())
      if (auto inst = store_->institution(*course->institution_ids.begin())) context.institution = inst->name;
  }
  const auto windows = window_text(ordered.text, std::max(synthesis_->max_window_chars(), kMinWindowChars),
                                   load_system_instructions(), context);
  emit(job, "generating", 32,
       std::to_string(ordered.text.size()) + " chars in " + std::to_string(windows.size()) + " window(s) via " +
           synthesis_->name());

  struct WindowOutcome {
    std::optional<SynthesisOutput> output;
    std::optional<StageFailure> failure;
    Generator generator = Generator::kModel;
  };
  std::vector<WindowOutcome> outcomes(windows.size());
  std::atomic<size_t> next{0};
  std::mutex progress_mutex;
  size_t finished = 0;

  auto work = [&] {
    for (size_t i = next++; i < windows.size(); i = next++) {
      for (int attempt = 1;; ++attempt) {
        try {
          RawOutput raw = generate_with_model(windows[i], *synthesis_, [&](const RawOutput& r) {
            store_->put_artifact(job.document_id, job.id, "model-raw",
                                 json{{"window", i},
                                      {"provider", r.provider_name},
                                      {"model_version", r.model_version},
                                      {"latency_ms", r.latency.count()},
                                      {"text", r.text}}
                                     .dump());
          });
          SynthesisOutput parsed = parse_model_output(raw.text);
          parsed.provider_name = raw.provider_name;
          parsed.model_version = raw.model_version;
          parsed.latency = raw.latency;
          outcomes[i].output = std::move(parsed);
          outcomes[i].generator = raw.generator;
          break;
        } catch (const Error& e) {
          if (!e.retryable() || attempt >= config_.max_stage_attempts) {
            outcomes[i].failure = StageFailure{e.code(), e.what()};
            break;
          }
          config_.sleep(config_.stage_backoff * (1 << (attempt - 1)));
        } catch (const std::exception& e) {
          outcomes[i].failure = StageFailure{"internal-error", e.what()};
          break;
        }
      }
      std::lock_guard lock(progress_mutex);
      ++finished;
      const int pct = 32 + static_cast<int>(50 * finished / windows.size());
      emit(job, "generating", pct,
           "window " + std::to_string(i + 1) + "/" + std::to_string(windows.size()) +
               (outcomes[i].output ? ": " + std::to_string(outcomes[i].output->drafts.size()) + " drafts"
                                   : ": failed (" + outcomes[i].failure->code + ")"));
    }
  };
  const size_t n_threads = std::min<size_t>(static_cast<size_t>(config_.window_concurrency), windows.size());
  std::vector<std::thread> threads;
  for (size_t t = 1; t < n_threads; ++t) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();

  SynthesisOutput merged;
  merged.provider_name = synthesis_->name();
  size_t failed = 0;
  const StageFailure* first_failure = nullptr;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.output) {
      ++failed;
      if (!first_failure) first_failure = &*o.failure;
      merged.rejected.push_back({"window " + std::to_string(i + 1), o.failure->code});
      continue;
    }
    merged.model_version = o.output->model_version;
    merged.latency += o.output->latency;
    for (auto& d : o.output->drafts) {
      d.content.provenance.generator = o.generator;
      if (d.source_offset) {
        auto first = paragraph_at(ordered, *d.source_offset);
        if (first) d.source_span = SourceSpan{*first, *first};
      }
      merged.drafts.push_back(std::move(d));
    }
    for (auto& r : o.output->rejected) merged.rejected.push_back(std::move(r));
  }
  if (!windows.empty() && failed == windows.size())
    throw Error(first_failure->code, "all windows failed: " + first_failure->message);
  store_->put_artifact(job.document_id, job.id, "synthesis", synthesis_to_json(merged).dump());
  emit(job, "generating", 84,
       std::to_string(merged.drafts.size()) + " drafts, " + std::to_string(merged.rejected.size()) + " rejected");
}

void Pipeline::run_insertion(PipelineJob& job) {
  const auto synthesis_json = store_->latest_artifact(job.id, "synthesis");
  if (!synthesis_json) throw Error("missing-artifact", "synthesis artifact missing for job " + job.id);
  SynthesisOutput synthesis = synthesis_from_json(json::parse(*synthesis_json));

  std::optional<Concept> fallback;
  for (auto& d : synthesis.drafts) {
    Question& q = d.content;
    q.course_id = job.course_id;
    q.provenance.source_document_id = job.document_id;
    q.concept_ids.clear();
    for (const auto& name : d.concept_names) {
      const auto id = store_->ensure_concept(name).id;
      if (std::find(q.concept_ids.begin(), q.concept_ids.end(), id) == q.concept_ids.end()) q.concept_ids.push_back(id);
    }
    if (q.concept_ids.empty()) {
      if (!fallback) fallback = store_->default_concept(job.course_id);
      q.concept_ids.push_back(fallback->id);
    }
  }
  // The job's own document is excluded so a re-run after a crash accepts the
  // same drafts again and the store maps them onto the rows already written.
  const auto existing = store_->course_fingerprints(job.course_id, job.document_id);
  DedupeResult deduped = validate_and_dedupe(std::move(synthesis.drafts), existing);

  json dropped = json::array();
  for (const auto& d : deduped.dropped)
    dropped.push_back({{"stem", d.draft.content.stem}, {"reason", d.reason}, {"detail", d.detail}});
  store_->put_artifact(job.document_id, job.id, "dedupe", dropped.dump());

  std::vector<Question> accepted;
  accepted.reserve(deduped.accepted.size());
  for (auto& d : deduped.accepted) accepted.push_back(std::move(d.content));
  emit(job, "inserting", 90, "inserting " + std::to_string(accepted.size()) + " questions");
  const auto inserted = store_->insert_question_bank(
      accepted, job.course_id, job.paper, job.document_id,
      config_.review_first ? QuestionState::kDraft : QuestionState::kPublished);
  job.result = JobResult{inserted.past_paper_id, static_cast<int>(accepted.size()),
                         static_cast<int>(deduped.dropped.size() + synthesis.rejected.size())};
  emit(job, "inserting", 99,
       std::to_string(inserted.newly_inserted) + " new rows, " + std::to_string(job.result->dropped_count) + " dropped");
}

// --- worker pool -----------------------------------------------------------------

void Pipeline::start() {
  std::lock_guard lock(queue_mutex_);
  if (!workers_.empty()) return;
  stopping_ = false;
  for (int i = 0; i < config_.workers; ++i) {
    workers_.emplace_back([this] {
      for (;;) {
        std::string id;
        {
          std::unique_lock lock(queue_mutex_);
          queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
          if (stopping_) return;
          id = std::move(queue_.front());
          queue_.pop_front();
          if (!active_.insert(id).second) continue;
          ++busy_;
        }
        try {
          run_job(id);
        } catch (const std::exception&) {
          // The job stays non-terminal and is picked up by recover().
        }
        {
          std::lock_guard lock(queue_mutex_);
          active_.erase(id);
          --busy_;
        }
        idle_cv_.notify_all();
      }
    });
  }
}

void Pipeline::stop() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
  workers_.clear();
  idle_cv_.notify_all();
}

void Pipeline::enqueue(const std::string& job_id) {
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(job_id);
  }
  queue_cv_.notify_one();
}

std::vector<std::string> Pipeline::recover() {
  std::vector<std::string> ids;
  {
    auto& db = store_->db();
    auto lock = db.lock();
    auto st = db.prepare("SELECT id FROM jobs WHERE state NOT IN ('done', 'failed') ORDER BY id");
    while (st.step()) ids.push_back(st.text(0));
  }
  for (const auto& id : ids) enqueue(id);
  return ids;
}

void Pipeline::wait_idle() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return (queue_.empty() && busy_ == 0) || workers_.empty(); });
}

}  // namespace examforge
