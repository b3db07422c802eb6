#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "examforge/events.hpp"
#include "examforge/ocr.hpp"
#include "examforge/store.hpp"
#include "examforge/synthesis.hpp"

namespace examforge {

enum class JobState { kQueued, kOcr, kGenerating, kInserting, kDone, kFailed };

std::string_view to_string(JobState s);
std::optional<JobState> parse_job_state(std::string_view s);
bool is_terminal(JobState s);

struct JobFailure {
  std::string stage;
  std::string code;
  std::string message;
};

struct JobResult {
  std::string past_paper_id;
  int accepted_count = 0;
  int dropped_count = 0;
};

struct PipelineJob {
  std::string id;
  std::string document_id;
  std::string course_id;
  PaperMeta paper;
  JobState state = JobState::kQueued;
  std::map<std::string, int> attempts;          // stage -> attempts used
  std::map<std::string, Timestamp> timestamps;  // state -> entered at
  std::optional<JobFailure> failure;
  std::optional<JobResult> result;
};

struct JobStatus {
  JobState state = JobState::kQueued;
  std::vector<ProgressEvent> log;
  std::optional<JobResult> result;
  std::optional<JobFailure> failure;
};

struct PipelineConfig {
  bool review_first = false;  // hold generated questions as drafts
  int max_stage_attempts = 3;
  int workers = 2;
  int window_concurrency = 2;
  std::chrono::milliseconds stage_backoff{std::chrono::seconds(1)};
  Sleeper sleep = real_sleeper();
  std::string system_instructions = default_system_instructions();
  // Prompt asset read at the start of every generation stage; falls back to
  // system_instructions when unset or unreadable.
  std::filesystem::path prompt_file;
  std::string locale_note;
  // Called after a state transition is persisted and before the next stage
  // starts; lets tests simulate a crash at every boundary.
  std::function<void(const std::string& job_id, JobState entered)> on_stage_boundary;
};

// Durable job state machine: queued -> ocr -> generating -> inserting ->
// done, any non-terminal state -> failed. Every stage reloads its inputs from
// audit artifacts, so a restarted process resumes where the last one stopped.
class Pipeline {
 public:
  Pipeline(std::shared_ptr<ContentStore> store, std::shared_ptr<OcrProvider> ocr,
           std::shared_ptr<SynthesisProvider> synthesis, std::shared_ptr<EventHub> events,
           PipelineConfig config = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  std::string submit_job(const std::string& document_id, const std::string& course_id, const PaperMeta& paper);
  // Runs the job to a terminal state on the calling thread.
  JobState run_job(const std::string& job_id);
  [[nodiscard]] JobStatus job_status(const std::string& job_id);
  [[nodiscard]] PipelineJob job(const std::string& job_id);
  [[nodiscard]] std::vector<PipelineJob> jobs();

  // Worker pool over the durable queue.
  void start();
  void stop();
  void enqueue(const std::string& job_id);
  // Enqueues every non-terminal job found in the store; returns their ids.
  std::vector<std::string> recover();
  void wait_idle();

  [[nodiscard]] ContentStore& store() { return *store_; }
  [[nodiscard]] const std::shared_ptr<EventHub>& events() const { return events_; }

 private:
  struct StageFailure {
    std::string code;
    std::string message;
  };

  std::optional<PipelineJob> load(const std::string& job_id);
  void save(const PipelineJob& job);
  void transition(PipelineJob& job, JobState next);
  void emit(const PipelineJob& job, const std::string& stage, int percent, const std::string& log);
  void emit_raw(const ProgressEvent& e);

  // Runs fn with per-stage retry; returns a failure instead of throwing.
  std::optional<StageFailure> attempt_stage(PipelineJob& job, const std::string& stage,
                                            const std::function<void()>& fn);
  [[nodiscard]] std::string load_system_instructions() const;
  void run_ocr(PipelineJob& job);
  void run_generation(PipelineJob& job);
  void run_insertion(PipelineJob& job);

  std::shared_ptr<ContentStore> store_;
  std::shared_ptr<OcrProvider> ocr_;
  std::shared_ptr<SynthesisProvider> synthesis_;
  std::shared_ptr<EventHub> events_;
  PipelineConfig config_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::set<std::string> active_;
  int busy_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace examforge
