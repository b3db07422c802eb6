#include "examforge/upload.hpp"

#include <algorithm>

#include "examforge/crypto.hpp"
#include "examforge/error.hpp"
#include "examforge/ocr.hpp"

namespace examforge {

using nlohmann::json;

std::string_view to_string(UploadState s) {
  switch (s) {
    case UploadState::kOpen: return "open";
    case UploadState::kComplete: return "complete";
    case UploadState::kAborted: return "aborted";
    case UploadState::kExpired: return "expired";
  }
  return "unknown";
}

std::string_view to_string(ChunkAck a) { return a == ChunkAck::kAccepted ? "accepted" : "duplicate"; }

std::size_t UploadSession::received_count() const {
  return static_cast<std::size_t>(std::count(received.begin(), received.end(), true));
}

std::size_t UploadSession::expected_length(std::size_t index) const {
  if (index + 1 < total_chunks) return chunk_size;
  return static_cast<std::size_t>(declared_size - static_cast<std::uint64_t>(chunk_size) * (total_chunks - 1));
}

UploadManager::UploadManager(std::shared_ptr<ContentStore> store, JobSubmitter submit,
                             std::shared_ptr<EventHub> events, UploadConfig config, Clock clock)
    : store_(std::move(store)),
      submit_(std::move(submit)),
      events_(events ? std::move(events) : std::make_shared<EventHub>()),
      config_(config),
      clock_(std::move(clock)) {}

UploadSession UploadManager::init_upload(const UploadMeta& meta) {
  if (meta.declared_size == 0) throw Error("empty-document", "declared size is zero");
  if (meta.declared_size > config_.max_upload_size)
    throw Error("too-large", "declared size " + std::to_string(meta.declared_size) + " exceeds limit of " +
                                 std::to_string(config_.max_upload_size) + " bytes");
  if (!is_sha256_hex(meta.declared_sha256)) throw Error("bad-request", "sha256 must be 64 lowercase hex digits");
  if (meta.filename.empty()) throw Error("bad-request", "filename is required");
  if (!store_->course(meta.course_id)) throw Error("unknown-course", "no course " + meta.course_id);

  auto entry = std::make_shared<Entry>();
  UploadSession& s = entry->session;
  s.id = new_id("upl");
  s.filename = meta.filename;
  s.course_id = meta.course_id;
  s.paper = meta.paper;
  s.declared_size = meta.declared_size;
  s.chunk_size = std::clamp(meta.chunk_size.value_or(config_.default_chunk_size), config_.min_chunk_size,
                            config_.max_chunk_size);
  s.total_chunks = static_cast<std::size_t>((meta.declared_size + s.chunk_size - 1) / s.chunk_size);
  s.received.assign(s.total_chunks, false);
  s.declared_sha256 = meta.declared_sha256;
  s.created_at = s.last_activity = clock_();
  entry->chunks.resize(s.total_chunks);

  std::lock_guard lock(mutex_);
  sessions_.emplace(s.id, entry);
  return s;
}

std::shared_ptr<UploadManager::Entry> UploadManager::find(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error("unknown-session", "no upload session " + session_id);
  return it->second;
}

void UploadManager::check_open(Entry& entry) {
  auto& s = entry.session;
  if (s.state == UploadState::kOpen && clock_() - s.last_activity > config_.idle_expiry) {
    s.state = UploadState::kExpired;
    entry.chunks.clear();
  }
  switch (s.state) {
    case UploadState::kOpen: return;
    case UploadState::kExpired: throw Error("session-expired", "upload session expired; start a new one");
    case UploadState::kComplete: throw Error("session-closed", "upload session already completed");
    case UploadState::kAborted: throw Error("session-closed", "upload session was aborted");
  }
}

ChunkAck UploadManager::append_chunk(const std::string& session_id, std::size_t index,
                                     std::span<const std::uint8_t> payload, const std::string& chunk_sha256) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  check_open(*entry);
  auto& s = entry->session;
  if (index >= s.total_chunks)
    throw Error("bad-index", "chunk index " + std::to_string(index) + " outside [0, " +
                                 std::to_string(s.total_chunks) + ")");
  if (payload.size() != s.expected_length(index))
    throw Error("bad-length", "chunk " + std::to_string(index) + " has " + std::to_string(payload.size()) +
                                  " bytes, expected " + std::to_string(s.expected_length(index)));
  if (sha256_hex(payload) != chunk_sha256)
    throw Error("chunk-corrupt", "chunk " + std::to_string(index) + " does not match its hash");
  s.last_activity = clock_();
  if (s.received[index]) return ChunkAck::kDuplicate;
  entry->chunks[index].assign(payload.begin(), payload.end());
  s.received[index] = true;
  const auto got = s.received_count();
  events_->publish(ProgressEvent{s.id, "uploading", static_cast<int>(100 * got / s.total_chunks),
                                 "received chunk " + std::to_string(index) + " (" + std::to_string(got) + "/" +
                                     std::to_string(s.total_chunks) + ")",
                                 s.last_activity});
  return ChunkAck::kAccepted;
}

std::vector<std::size_t> UploadManager::resume_upload(const std::string& session_id) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  check_open(*entry);
  entry->session.last_activity = clock_();
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < entry->session.total_chunks; ++i)
    if (!entry->session.received[i]) missing.push_back(i);
  return missing;
}

CompletedUpload UploadManager::complete_upload(const std::string& session_id) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  check_open(*entry);
  auto& s = entry->session;
  const auto got = s.received_count();
  if (got != s.total_chunks)
    throw Error("incomplete", std::to_string(s.total_chunks - got) + " of " + std::to_string(s.total_chunks) +
                                  " chunks missing");
  Bytes assembled;
  assembled.reserve(static_cast<std::size_t>(s.declared_size));
  for (const auto& c : entry->chunks) assembled.insert(assembled.end(), c.begin(), c.end());
  if (sha256_hex(assembled) != s.declared_sha256) {
    s.state = UploadState::kAborted;
    entry->chunks.clear();
    throw Error("content-corrupt", "assembled file does not match the declared hash");
  }
  CompletedUpload out;
  out.document = store_->put_document(s.filename, sniff_content_type(assembled, s.filename), assembled);
  s.state = UploadState::kComplete;
  entry->chunks.clear();
  if (submit_) out.job_id = submit_(out.document.id, s.course_id, s.paper);
  return out;
}

UploadSession UploadManager::session(const std::string& session_id) {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  return entry->session;
}

std::size_t UploadManager::expire_idle() {
  std::vector<std::shared_ptr<Entry>> all;
  {
    std::lock_guard lock(mutex_);
    for (auto& [id, e] : sessions_) all.push_back(e);
  }
  std::size_t expired = 0;
  for (auto& e : all) {
    std::lock_guard lock(e->mutex);
    if (e->session.state == UploadState::kOpen && clock_() - e->session.last_activity > config_.idle_expiry) {
      e->session.state = UploadState::kExpired;
      e->chunks.clear();
      ++expired;
    }
  }
  return expired;
}

// --- channel protocol ------------------------------------------------------------

ChannelSession::ChannelSession(UploadManager& uploads, std::shared_ptr<EventHub> events, JobOutcomeLookup outcome,
                               Send send, bool binary_frames)
    : uploads_(uploads),
      events_(std::move(events)),
      outcome_(std::move(outcome)),
      send_(std::move(send)),
      binary_frames_(binary_frames) {}

ChannelSession::~ChannelSession() {
  std::vector<EventHub::Token> tokens;
  {
    std::lock_guard lock(state_mutex_);
    tokens.swap(tokens_);
  }
  for (auto t : tokens) events_->unsubscribe(t);
}

void ChannelSession::send_json(const json& message) {
  std::lock_guard lock(send_mutex_);
  send_(message.dump());
}

void ChannelSession::send_error(const std::string& code, const std::string& message, const json& extra) {
  json j = {{"type", "error"}, {"code", code}, {"message", message}};
  if (extra.is_object()) j.update(extra);
  send_json(j);
}

void ChannelSession::open() {
  send_json({{"type", "hello"},
             {"binary", binary_frames_},
             {"chunk_size", uploads_.config().default_chunk_size},
             {"max_upload_size", uploads_.config().max_upload_size}});
}

void ChannelSession::follow(const std::string& id) {
  EventHub::Handler handler;
  if (auto weak = weak_from_this(); !weak.expired()) {
    handler = [weak](const ProgressEvent& e) {
      if (auto self = weak.lock()) self->deliver(e);
    };
  } else {
    handler = [this](const ProgressEvent& e) { deliver(e); };
  }
  auto token = events_->subscribe(id, std::move(handler));
  std::lock_guard lock(state_mutex_);
  tokens_.push_back(token);
}

void ChannelSession::deliver(const ProgressEvent& e) {
  send_json(to_json(e));
  if (is_terminal_stage(e.stage)) maybe_send_result(e.id);
}

void ChannelSession::follow_job(const std::string& job_id) {
  follow(job_id);
  // The job may have finished before the subscription existed.
  maybe_send_result(job_id);
}

void ChannelSession::maybe_send_result(const std::string& job_id) {
  if (!outcome_) return;
  auto o = outcome_(job_id);
  if (!o) return;
  {
    std::lock_guard lock(state_mutex_);
    if (results_sent_[job_id]) return;
    results_sent_[job_id] = true;
  }
  if (o->done)
    send_json({{"type", "result"}, {"job_id", job_id}, {"paper_id", o->paper_id}, {"question_count", o->question_count}});
  else
    send_error(o->failure_code, o->failure_message, {{"job_id", job_id}});
}

void ChannelSession::on_text(std::string_view frame) {
  json message;
  try {
    message = json::parse(frame);
  } catch (const json::exception&) {
    send_error("bad-message", "frame is not valid JSON");
    return;
  }
  if (!message.is_object() || !message.contains("type") || !message["type"].is_string()) {
    send_error("bad-message", "message needs a string \"type\"");
    return;
  }
  try {
    handle(message);
  } catch (const Error& e) {
    json extra = {{"for", message["type"]}};
    if (message.contains("index")) extra["index"] = message["index"];
    send_error(e.code(), e.what(), extra);
  } catch (const json::exception& e) {
    send_error("bad-message", e.what(), {{"for", message["type"]}});
  }
}

void ChannelSession::handle(const json& m) {
  const std::string type = m["type"];
  if (type == "upload.init") {
    UploadMeta meta;
    meta.filename = m.at("filename").get<std::string>();
    meta.declared_size = m.at("size").get<std::uint64_t>();
    meta.declared_sha256 = m.at("sha256").get<std::string>();
    meta.course_id = m.at("course_id").get<std::string>();
    if (m.contains("paper")) meta.paper = {m["paper"].value("title", std::string{}), m["paper"].value("year", 0)};
    if (m.contains("chunk_size")) meta.chunk_size = m["chunk_size"].get<std::size_t>();
    auto s = uploads_.init_upload(meta);
    follow(s.id);
    send_json({{"type", "ack"},
               {"for", type},
               {"session_id", s.id},
               {"chunk_size", s.chunk_size},
               {"total_chunks", s.total_chunks}});
  } else if (type == "upload.chunk") {
    const std::string session_id = m.at("session_id");
    const std::size_t index = m.at("index").get<std::size_t>();
    const std::string sha = m.at("sha256");
    if (!m.contains("data") || m["data"].is_null()) {
      if (!binary_frames_) throw Error("bad-message", "chunk data missing and binary frames are not enabled");
      std::lock_guard lock(state_mutex_);
      pending_ = PendingChunk{session_id, index, sha};
      return;
    }
    auto data = base64_decode(m["data"].get<std::string>());
    if (!data) throw Error("chunk-corrupt", "chunk data is not valid base64");
    const auto ack = uploads_.append_chunk(session_id, index, *data, sha);
    send_json({{"type", "ack"}, {"for", type}, {"session_id", session_id}, {"index", index}, {"status", to_string(ack)}});
  } else if (type == "upload.resume") {
    const std::string session_id = m.at("session_id");
    const auto missing = uploads_.resume_upload(session_id);
    follow(session_id);
    send_json({{"type", "ack"}, {"for", type}, {"session_id", session_id}, {"missing", missing}});
  } else if (type == "upload.complete") {
    const std::string session_id = m.at("session_id");
    const auto done = uploads_.complete_upload(session_id);
    send_json({{"type", "ack"},
               {"for", type},
               {"session_id", session_id},
               {"document_id", done.document.id},
               {"job_id", done.job_id}});
    if (!done.job_id.empty()) follow_job(done.job_id);
  } else {
    throw Error("bad-message", "unknown message type " + type);
  }
}

void ChannelSession::on_binary(std::span<const std::uint8_t> frame) {
  std::optional<PendingChunk> pending;
  {
    std::lock_guard lock(state_mutex_);
    pending.swap(pending_);
  }
  if (!pending) {
    send_error("bad-message", "binary frame without a preceding upload.chunk");
    return;
  }
  if (frame.size() < 4) {
    send_error("bad-message", "binary frame shorter than its index prefix", {{"index", pending->index}});
    return;
  }
  const std::size_t index = (std::size_t{frame[0]} << 24) | (std::size_t{frame[1]} << 16) |
                            (std::size_t{frame[2]} << 8) | std::size_t{frame[3]};
  if (index != pending->index) {
    send_error("bad-index", "binary frame index does not match the announced chunk", {{"index", index}});
    return;
  }
  try {
    const auto ack = uploads_.append_chunk(pending->session_id, index, frame.subspan(4), pending->sha256);
    send_json({{"type", "ack"},
               {"for", "upload.chunk"},
               {"session_id", pending->session_id},
               {"index", index},
               {"status", to_string(ack)}});
  } catch (const Error& e) {
    send_error(e.code(), e.what(), {{"for", "upload.chunk"}, {"index", index}});
  }
}

}  // namespace examforge
