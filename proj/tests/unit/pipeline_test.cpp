#include <atomic>

#include <gtest/gtest.h>

#include "examforge/error.hpp"
#include "examforge/pipeline.hpp"
#include "support.hpp"

using namespace examforge;
using namespace examforge::testing;

namespace {

class DownOcr final : public OcrProvider {
 public:
  AnalyzeOutput analyze(std::span<const std::uint8_t>, const std::string&, const std::string&) override {
    ++calls;
    throw Error("provider-unavailable", "connection refused", true);
  }
  [[nodiscard]] std::string name() const override { return "down"; }
  std::atomic<int> calls{0};
};

// Windowed rule-based generator where chosen windows always fail.
class FlakyWindows final : public SynthesisProvider {
 public:
  explicit FlakyWindows(std::set<int> failing) : failing_(std::move(failing)) {}
  RawOutput generate(const PromptBundle& bundle) override {
    if (failing_.count(bundle.window_index)) throw Error("provider-bad-response", "garbage");
    return local_.generate(bundle);
  }
  [[nodiscard]] std::string name() const override { return "flaky"; }
  [[nodiscard]] Generator generator() const override { return Generator::kModel; }
  [[nodiscard]] std::size_t max_window_chars() const override { return kMinWindowChars; }

 private:
  std::set<int> failing_;
  LocalSynthesisProvider local_;
};

struct Rig {
  std::shared_ptr<ContentStore> store = seeded_store();
  std::shared_ptr<EventHub> events = std::make_shared<EventHub>();
  std::unique_ptr<Pipeline> pipeline;

  explicit Rig(std::shared_ptr<OcrProvider> ocr = nullptr, std::shared_ptr<SynthesisProvider> synth = nullptr,
               PipelineConfig config = {}) {
    if (!ocr) ocr = std::make_shared<FixtureOcrProvider>(fixtures_dir() / "layouts");
    if (!synth) synth = std::make_shared<LocalSynthesisProvider>();
    config.sleep = [](std::chrono::milliseconds) {};
    pipeline = std::make_unique<Pipeline>(store, ocr, synth, events, config);
  }

  std::string doc(const std::string& file) {
    return store->put_document(file, "application/pdf", read_bytes(fixtures_dir() / file)).id;
  }
};

int manifest_accepted(const std::string& name) {
  return static_cast<int>(manifest_paper(name + ".pdf")["questions"].size());
}

}  // namespace

TEST(SubmitJob, QueuesDurably) {
  Rig rig;
  const auto d = rig.doc("paper_A.pdf");
  const auto id = rig.pipeline->submit_job(d, "crs-med101", {"End of Semester Examination", 2023});
  const auto job = rig.pipeline->job(id);
  EXPECT_EQ(job.state, JobState::kQueued);
  EXPECT_TRUE(job.timestamps.count("queued"));
  EXPECT_EQ(rig.pipeline->recover(), std::vector<std::string>{id});
}

TEST(SubmitJob, ResubmissionMakesDistinctJobs) {
  Rig rig;
  const auto d = rig.doc("paper_A.pdf");
  const auto a = rig.pipeline->submit_job(d, "crs-med101", {"X", 2023});
  const auto b = rig.pipeline->submit_job(d, "crs-med101", {"X", 2023});
  EXPECT_NE(a, b);
  EXPECT_EQ(rig.pipeline->jobs().size(), 2u);
}

TEST(SubmitJob, UnknownDocument) {
  Rig rig;
  try {
    rig.pipeline->submit_job("doc_nope", "crs-med101", {"X", 2023});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown-document");
  }
}

TEST(RunJob, PaperAMatchesManifest) {
  Rig rig;
  const auto id = rig.pipeline->submit_job(rig.doc("paper_A.pdf"), "crs-med101", {"End of Semester Examination", 2023});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kDone);
  const auto job = rig.pipeline->job(id);
  ASSERT_TRUE(job.result);
  EXPECT_EQ(job.result->accepted_count, manifest_accepted("paper_A"));
  EXPECT_EQ(job.result->dropped_count, manifest_paper("paper_A.pdf")["dropped"].get<int>());
  EXPECT_EQ(rig.store->query_questions({.course_id = "crs-med101"}, Role::kStudent).total, job.result->accepted_count);
  Timestamp last{};
  for (const auto* s : {"queued", "ocr", "generating", "inserting", "done"}) {
    ASSERT_TRUE(job.timestamps.count(s)) << s;
    EXPECT_GE(job.timestamps.at(s), last);
    last = job.timestamps.at(s);
  }
  // audit trail
  EXPECT_TRUE(rig.store->latest_artifact(id, "ocr-raw"));
  EXPECT_TRUE(rig.store->latest_artifact(id, "layout"));
  EXPECT_FALSE(rig.store->artifacts(id, "model-raw").empty());
  EXPECT_TRUE(rig.store->latest_artifact(id, "synthesis"));
}

TEST(RunJob, ReviewFirstHoldsDrafts) {
  Rig rig(nullptr, nullptr, PipelineConfig{.review_first = true});
  const auto id = rig.pipeline->submit_job(rig.doc("paper_B.pdf"), "crs-med102", {"Mid-Semester Test", 2022});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kDone);
  EXPECT_EQ(rig.store->query_questions({.course_id = "crs-med102"}, Role::kStudent).total, 0);
  EXPECT_EQ(rig.store->query_questions({.course_id = "crs-med102", .state = QuestionState::kDraft}, Role::kFaculty).total,
            manifest_accepted("paper_B"));
}

TEST(RunJob, OcrPermanentlyUnavailableFailsAfterThreeAttempts) {
  auto ocr = std::make_shared<DownOcr>();
  Rig rig(ocr);
  const auto id = rig.pipeline->submit_job(rig.doc("paper_A.pdf"), "crs-med101", {"X", 2023});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kFailed);
  EXPECT_EQ(ocr->calls, 3);
  const auto job = rig.pipeline->job(id);
  ASSERT_TRUE(job.failure);
  EXPECT_EQ(job.failure->stage, "ocr");
  EXPECT_EQ(job.failure->code, "provider-unavailable");
  EXPECT_EQ(job.attempts.at("ocr"), 3);
  EXPECT_FALSE(job.result);
  const auto status = rig.pipeline->job_status(id);
  EXPECT_EQ(status.log.back().stage, "failed");
  EXPECT_EQ(status.log.back().percent, 100);
  EXPECT_EQ(rig.store->count_rows("questions"), 0);
}

TEST(RunJob, EmptyLayoutIsDoneWithZero) {
  Rig rig;
  const auto id = rig.pipeline->submit_job(rig.doc("blank.pdf"), "crs-med101", {"Blank Scan", 2023});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kDone);
  EXPECT_EQ(rig.pipeline->job(id).result->accepted_count, 0);
  EXPECT_EQ(rig.store->count_rows("questions"), 0);
}

TEST(RunJob, PartialWindowFailureStillCompletes) {
  auto synth = std::make_shared<FlakyWindows>(std::set<int>{1});
  Rig rig(nullptr, synth);
  const auto id = rig.pipeline->submit_job(rig.doc("paper_A.pdf"), "crs-med101", {"X", 2023});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kDone);
  const auto job = rig.pipeline->job(id);
  EXPECT_GT(job.result->accepted_count, 0);
  EXPECT_LT(job.result->accepted_count, manifest_accepted("paper_A"));
  const auto synthesis = nlohmann::json::parse(*rig.store->latest_artifact(id, "synthesis"));
  EXPECT_NE(synthesis.dump().find("window 2"), std::string::npos);
}

TEST(RunJob, AllWindowsFailingFailsTheJob) {
  auto synth = std::make_shared<FlakyWindows>(std::set<int>{0, 1, 2, 3});
  Rig rig(nullptr, synth);
  const auto id = rig.pipeline->submit_job(rig.doc("paper_A.pdf"), "crs-med101", {"X", 2023});
  EXPECT_EQ(rig.pipeline->run_job(id), JobState::kFailed);
  EXPECT_EQ(rig.pipeline->job(id).failure->stage, "generating");
  EXPECT_EQ(rig.pipeline->job(id).failure->code, "provider-bad-response");
}

TEST(JobStatus, DoneLogEndsAtHundred) {
  Rig rig;
  const auto id = rig.pipeline->submit_job(rig.doc("paper_C.pdf"), "crs-pha201", {"Supplementary Examination", 2021});
  rig.pipeline->run_job(id);
  const auto status = rig.pipeline->job_status(id);
  EXPECT_EQ(status.state, JobState::kDone);
  ASSERT_FALSE(status.log.empty());
  EXPECT_EQ(status.log.back().stage, "done");
  EXPECT_EQ(status.log.back().percent, 100);
  EXPECT_EQ(rig.pipeline->job_status(id).log.size(), status.log.size());
  for (size_t i = 1; i < status.log.size(); ++i) EXPECT_GE(status.log[i].at, status.log[i - 1].at);
}

TEST(JobStatus, PolledLogIsPrefixExtension) {
  Rig rig;
  const auto id = rig.pipeline->submit_job(rig.doc("paper_A.pdf"), "crs-med101", {"X", 2023});
  std::vector<std::vector<ProgressEvent>> snapshots;
  auto token = rig.events->subscribe(id, [&](const ProgressEvent&) {});
  rig.pipeline->start();
  rig.pipeline->enqueue(id);
  for (int i = 0; i < 50; ++i) {
    snapshots.push_back(rig.pipeline->job_status(id).log);
    if (is_terminal(rig.pipeline->job_status(id).state)) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  rig.pipeline->wait_idle();
  rig.pipeline->stop();
  rig.events->unsubscribe(token);
  snapshots.push_back(rig.pipeline->job_status(id).log);
  for (size_t s = 1; s < snapshots.size(); ++s) {
    const auto& a = snapshots[s - 1];
    const auto& b = snapshots[s];
    ASSERT_LE(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].stage, b[i].stage);
      EXPECT_EQ(a[i].log, b[i].log);
    }
  }
}

TEST(JobStatus, UnknownJob) {
  Rig rig;
  try {
    (void)rig.pipeline->job_status("job_nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown-job");
  }
}

TEST(Events, PublishedInOrderPerJob) {
  Rig rig;
  const auto id = rig.pipeline->submit_job(rig.doc("paper_B.pdf"), "crs-med102", {"Mid-Semester Test", 2022});
  std::vector<ProgressEvent> seen;
  rig.events->subscribe(id, [&](const ProgressEvent& e) { seen.push_back(e); });
  rig.pipeline->run_job(id);
  const auto log = rig.pipeline->job_status(id).log;
  ASSERT_EQ(seen.size() + 1, log.size());  // the handoff event predates the subscription
  for (size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i].log, log[i + 1].log);
}

TEST(WorkerPool, RunsManyJobsAndRecovers) {
  Rig rig;
  std::vector<std::string> ids;
  const std::vector<std::pair<std::string, std::string>> papers = {
      {"paper_A.pdf", "crs-med101"}, {"paper_B.pdf", "crs-med102"}, {"paper_C.pdf", "crs-pha201"},
      {"paper_D.pdf", "crs-mic201"}, {"paper_E.pdf", "crs-pat301"}};
  for (const auto& [file, course] : papers) ids.push_back(rig.pipeline->submit_job(rig.doc(file), course, {file, 2023}));
  EXPECT_EQ(rig.pipeline->recover().size(), 5u);
  rig.pipeline->start();
  rig.pipeline->wait_idle();
  rig.pipeline->stop();
  int total = 0;
  for (const auto& id : ids) {
    EXPECT_EQ(rig.pipeline->job(id).state, JobState::kDone);
    total += rig.pipeline->job(id).result->accepted_count;
  }
  EXPECT_EQ(total, 23 + 9 + 7 + 14 + 9);
  EXPECT_EQ(rig.store->count_rows("questions"), total);
  EXPECT_TRUE(rig.pipeline->recover().empty());
}

TEST(Recovery, InterruptedAtEveryBoundaryInsertsOnce) {
  for (const auto stop_at : {JobState::kOcr, JobState::kGenerating, JobState::kInserting}) {
    auto store = seeded_store();
    auto events = std::make_shared<EventHub>();
    auto ocr = std::make_shared<FixtureOcrProvider>(fixtures_dir() / "layouts");
    auto synth = std::make_shared<LocalSynthesisProvider>();
    const auto d = store->put_document("paper_E.pdf", "application/pdf", read_bytes(fixtures_dir() / "paper_E.pdf")).id;
    std::string id;
    {
      PipelineConfig cfg;
      cfg.on_stage_boundary = [&](const std::string&, JobState s) {
        if (s == stop_at) throw std::runtime_error("simulated crash");
      };
      Pipeline first(store, ocr, synth, events, cfg);
      id = first.submit_job(d, "crs-pat301", {"Sessional Examination", 2020});
      EXPECT_THROW(first.run_job(id), std::runtime_error);
      EXPECT_EQ(first.job(id).state, stop_at);
    }
    Pipeline second(store, ocr, synth, events);
    EXPECT_EQ(second.recover(), std::vector<std::string>{id});
    EXPECT_EQ(second.run_job(id), JobState::kDone);
    EXPECT_EQ(store->count_rows("questions"), 9);
    // a full rerun of the same document inserts nothing new
    const auto again = second.submit_job(d, "crs-pat301", {"Sessional Examination", 2020});
    EXPECT_EQ(second.run_job(again), JobState::kDone);
    EXPECT_EQ(store->count_rows("questions"), 9);
    EXPECT_TRUE(store->check_integrity().empty());
  }
}

TEST(Prompt, AssetFileIsReadPerStage) {
  struct Capture final : SynthesisProvider {
    std::string seen;
    RawOutput generate(const PromptBundle& b) override {
      seen = b.system_instructions;
      return {"[]", {}, "capture", "", Generator::kModel};
    }
    [[nodiscard]] std::string name() const override { return "capture"; }
    [[nodiscard]] Generator generator() const override { return Generator::kModel; }
    [[nodiscard]] std::size_t max_window_chars() const override { return 100000; }
  };
  auto cap = std::make_shared<Capture>();
  const auto prompt = std::filesystem::temp_directory_path() / "examforge_prompt_test.txt";
  {
    std::ofstream(prompt) << "custom instructions v1";
  }
  Rig rig(nullptr, cap, PipelineConfig{.prompt_file = prompt});
  rig.pipeline->run_job(rig.pipeline->submit_job(rig.doc("paper_B.pdf"), "crs-med102", {"X", 2022}));
  EXPECT_EQ(cap->seen, "custom instructions v1");
  {
    std::ofstream(prompt) << "custom instructions v2";
  }
  rig.pipeline->run_job(rig.pipeline->submit_job(rig.doc("paper_B.pdf"), "crs-med102", {"Y", 2022}));
  EXPECT_EQ(cap->seen, "custom instructions v2");
  std::filesystem::remove(prompt);
}
