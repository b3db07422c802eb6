#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "examforge/engagement.hpp"
#include "examforge/store.hpp"

namespace examforge {

enum class SyncKind { kMcqResponse, kSaqResponse, kFeedback };
std::string_view to_string(SyncKind k);
std::optional<SyncKind> parse_sync_kind(std::string_view s);

struct SyncOp {
  std::string op_id;  // client-generated idempotency key
  SyncKind kind = SyncKind::kMcqResponse;
  nlohmann::json payload;
  std::optional<Timestamp> client_clock;
  std::string user_id;
};

enum class OpStatus { kApplied, kDuplicate, kRejected };
std::string_view to_string(OpStatus s);

struct OpResult {
  std::string op_id;
  OpStatus status = OpStatus::kApplied;
  std::string reason;  // set when rejected
};

struct Changeset {
  std::string cursor;
  std::vector<Question> upserted;
  std::vector<std::string> retired_ids;  // no longer visible to students
  bool full = false;
};

inline constexpr std::chrono::hours kCursorRetention{24 * 30};

// Parses one wire op; throws Error("bad-request") on a malformed envelope.
SyncOp parse_sync_op(const nlohmann::json& j, const std::string& default_user);
nlohmann::json to_json(const OpResult& r);
nlohmann::json to_json(const Changeset& c);

class SyncService {
 public:
  SyncService(std::shared_ptr<ContentStore> store, std::shared_ptr<Engagement> engagement);

  // Applies ops in order. Only applied ops are remembered, so a rejected op
  // is evaluated again if the client replays it.
  std::vector<OpResult> push(const std::string& principal_user_id, const std::vector<SyncOp>& ops);
  // No cursor: full sync of every published question.
  Changeset pull(const std::optional<std::string>& cursor);
  // Drops change records older than the retention window.
  void compact();

 private:
  void apply(const SyncOp& op);

  std::shared_ptr<ContentStore> store_;
  std::shared_ptr<Engagement> engagement_;
};

}  // namespace examforge
