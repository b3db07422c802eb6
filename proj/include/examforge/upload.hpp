#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "examforge/events.hpp"
#include "examforge/store.hpp"

namespace examforge {

struct UploadConfig {
  std::size_t default_chunk_size = 256 * 1024;
  std::size_t min_chunk_size = 64 * 1024;
  std::size_t max_chunk_size = 1024 * 1024;
  std::uint64_t max_upload_size = 50ull * 1024 * 1024;
  std::chrono::milliseconds idle_expiry{std::chrono::hours(24)};
};

struct UploadMeta {
  std::string filename;
  std::uint64_t declared_size = 0;
  std::string declared_sha256;
  std::string course_id;
  PaperMeta paper;
  std::optional<std::size_t> chunk_size;  // clamped to the configured range
};

enum class UploadState { kOpen, kComplete, kAborted, kExpired };
std::string_view to_string(UploadState s);

struct UploadSession {
  std::string id;
  std::string filename;
  std::string course_id;
  PaperMeta paper;
  std::uint64_t declared_size = 0;
  std::size_t chunk_size = 0;
  std::size_t total_chunks = 0;
  std::vector<bool> received;
  std::string declared_sha256;
  UploadState state = UploadState::kOpen;
  Timestamp created_at{};
  Timestamp last_activity{};

  [[nodiscard]] std::size_t received_count() const;
  [[nodiscard]] std::size_t expected_length(std::size_t index) const;
};

enum class ChunkAck { kAccepted, kDuplicate };
std::string_view to_string(ChunkAck a);

struct CompletedUpload {
  DocumentRecord document;
  std::string job_id;  // empty when no submitter is attached
};

// Hands a stored document to the pipeline; returns the job id.
using JobSubmitter =
    std::function<std::string(const std::string& document_id, const std::string& course_id, const PaperMeta& paper)>;

// Resumable chunked uploads. Sessions live in memory; chunks may arrive in
// any order and any number of times.
class UploadManager {
 public:
  UploadManager(std::shared_ptr<ContentStore> store, JobSubmitter submit, std::shared_ptr<EventHub> events,
                UploadConfig config = {}, Clock clock = system_clock());

  UploadSession init_upload(const UploadMeta& meta);
  ChunkAck append_chunk(const std::string& session_id, std::size_t index, std::span<const std::uint8_t> payload,
                        const std::string& chunk_sha256);
  // Missing chunk indices, ascending.
  std::vector<std::size_t> resume_upload(const std::string& session_id);
  CompletedUpload complete_upload(const std::string& session_id);
  [[nodiscard]] UploadSession session(const std::string& session_id);
  // Marks idle sessions expired and frees their buffers; returns how many.
  std::size_t expire_idle();

  [[nodiscard]] const UploadConfig& config() const { return config_; }

 private:
  struct Entry {
    std::mutex mutex;
    UploadSession session;
    std::vector<Bytes> chunks;
  };
  std::shared_ptr<Entry> find(const std::string& session_id);
  // Caller holds entry->mutex.
  void check_open(Entry& entry);

  std::shared_ptr<ContentStore> store_;
  JobSubmitter submit_;
  std::shared_ptr<EventHub> events_;
  UploadConfig config_;
  Clock clock_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

// Looks up the outcome of a finished job: {paper_id, question_count} or a
// failure {code, message}.
struct JobOutcome {
  bool done = false;
  std::string paper_id;
  int question_count = 0;
  std::string failure_code;
  std::string failure_message;
};
using JobOutcomeLookup = std::function<std::optional<JobOutcome>(const std::string& job_id)>;

// One client connection speaking the JSON upload protocol, independent of
// the transport. Outgoing text frames go through `send`, which may be called
// from any thread but never concurrently. When owned by a shared_ptr, event
// callbacks hold only a weak reference, so the session may be dropped while
// jobs are still publishing.
class ChannelSession : public std::enable_shared_from_this<ChannelSession> {
 public:
  using Send = std::function<void(const std::string& text)>;

  ChannelSession(UploadManager& uploads, std::shared_ptr<EventHub> events, JobOutcomeLookup outcome, Send send,
                 bool binary_frames);
  ~ChannelSession();
  ChannelSession(const ChannelSession&) = delete;
  ChannelSession& operator=(const ChannelSession&) = delete;

  // Greets the client and advertises whether binary frames are accepted.
  void open();
  void on_text(std::string_view frame);
  void on_binary(std::span<const std::uint8_t> frame);

 private:
  struct PendingChunk {
    std::string session_id;
    std::size_t index = 0;
    std::string sha256;
  };

  void send_json(const nlohmann::json& message);
  void send_error(const std::string& code, const std::string& message, const nlohmann::json& extra = {});
  void follow(const std::string& id);
  void deliver(const ProgressEvent& e);
  void follow_job(const std::string& job_id);
  void maybe_send_result(const std::string& job_id);
  void handle(const nlohmann::json& message);

  UploadManager& uploads_;
  std::shared_ptr<EventHub> events_;
  JobOutcomeLookup outcome_;
  Send send_;
  bool binary_frames_;
  std::mutex send_mutex_;
  std::mutex state_mutex_;
  std::vector<EventHub::Token> tokens_;
  std::map<std::string, bool> results_sent_;
  std::optional<PendingChunk> pending_;
};

}  // namespace examforge
