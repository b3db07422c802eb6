#include "examforge/sync.hpp"

#include <charconv>
#include <set>

#include "examforge/codec.hpp"
#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

std::string_view to_string(SyncKind k) {
  switch (k) {
    case SyncKind::kMcqResponse: return "mcq-response";
    case SyncKind::kSaqResponse: return "saq-response";
    case SyncKind::kFeedback: return "feedback";
  }
  return "unknown";
}

std::optional<SyncKind> parse_sync_kind(std::string_view s) {
  if (s == "mcq-response") return SyncKind::kMcqResponse;
  if (s == "saq-response") return SyncKind::kSaqResponse;
  if (s == "feedback") return SyncKind::kFeedback;
  return std::nullopt;
}

std::string_view to_string(OpStatus s) {
  switch (s) {
    case OpStatus::kApplied: return "applied";
    case OpStatus::kDuplicate: return "duplicate";
    case OpStatus::kRejected: return "rejected";
  }
  return "rejected";
}

SyncOp parse_sync_op(const json& j, const std::string& default_user) {
  if (!j.is_object()) throw Error("bad-request", "op must be an object");
  SyncOp op;
  if (!j.contains("op_id") || !j["op_id"].is_string() || j["op_id"].get<std::string>().empty())
    throw Error("bad-request", "op_id is required");
  op.op_id = j["op_id"];
  auto kind = j.contains("kind") && j["kind"].is_string() ? parse_sync_kind(j["kind"].get<std::string>()) : std::nullopt;
  if (!kind) throw Error("bad-request", "op " + op.op_id + " has an unknown kind");
  op.kind = *kind;
  op.payload = j.value("payload", json::object());
  if (j.contains("client_clock") && j["client_clock"].is_string())
    op.client_clock = parse_rfc3339(j["client_clock"].get<std::string>());
  op.user_id = j.contains("user_id") && j["user_id"].is_string() ? j["user_id"].get<std::string>() : default_user;
  return op;
}

json to_json(const OpResult& r) {
  json j = {{"op_id", r.op_id}, {"status", to_string(r.status)}};
  if (r.status == OpStatus::kRejected) j["reason"] = r.reason;
  return j;
}

json to_json(const Changeset& c) {
  json upserts = json::array();
  for (const auto& q : c.upserted) upserts.push_back(to_json(q));
  return {{"cursor", c.cursor}, {"full", c.full}, {"upserted", upserts}, {"retired_ids", c.retired_ids}};
}

SyncService::SyncService(std::shared_ptr<ContentStore> store, std::shared_ptr<Engagement> engagement)
    : store_(std::move(store)), engagement_(std::move(engagement)) {}

void SyncService::apply(const SyncOp& op) {
  const json& p = op.payload;
  if (!p.is_object() || !p.contains("question_id") || !p["question_id"].is_string())
    throw Error("invalid-payload", "payload.question_id is required");
  const std::string qid = p["question_id"];
  switch (op.kind) {
    case SyncKind::kMcqResponse:
      if (!p.contains("chosen_index") || !p["chosen_index"].is_number_integer())
        throw Error("invalid-payload", "payload.chosen_index is required");
      engagement_->record_mcq_response(op.user_id, qid, p["chosen_index"].get<int>(), op.client_clock, op.op_id);
      break;
    case SyncKind::kSaqResponse: {
      std::vector<std::string> answers;
      if (p.contains("answers")) {
        if (!p["answers"].is_array()) throw Error("invalid-payload", "payload.answers must be a list");
        for (const auto& a : p["answers"]) {
          if (!a.is_string()) throw Error("invalid-payload", "answers must be strings");
          answers.push_back(a);
        }
      }
      engagement_->record_saq_response(op.user_id, qid, answers, p.value("self_correct", false), op.client_clock,
                                       op.op_id);
      break;
    }
    case SyncKind::kFeedback:
      if (!p.contains("rating") || !p["rating"].is_number_integer())
        throw Error("invalid-payload", "payload.rating is required");
      engagement_->record_feedback(op.user_id, qid, p["rating"].get<int>(),
                                   p.contains("comment") && p["comment"].is_string()
                                       ? std::optional<std::string>(p["comment"].get<std::string>())
                                       : std::nullopt,
                                   op.client_clock);
      break;
  }
}

std::vector<OpResult> SyncService::push(const std::string& principal_user_id, const std::vector<SyncOp>& ops) {
  std::vector<OpResult> results;
  results.reserve(ops.size());
  auto& db = store_->db();
  for (const auto& op : ops) {
    OpResult r{op.op_id, OpStatus::kApplied, {}};
    try {
      Transaction tx(db);
      auto seen = db.prepare("SELECT 1 FROM sync_ops WHERE op_id = ?");
      seen.bind_all(op.op_id);
      if (seen.step()) {
        r.status = OpStatus::kDuplicate;
      } else if (op.user_id != principal_user_id) {
        r.status = OpStatus::kRejected;
        r.reason = "forbidden";
      } else {
        seen.reset();
        apply(op);
        db.prepare("INSERT INTO sync_ops (op_id, user_id, kind, client_clock, server_at) VALUES (?, ?, ?, ?, ?)")
            .bind_all(op.op_id, op.user_id, to_string(op.kind),
                      op.client_clock ? std::optional<std::string>(format_rfc3339(*op.client_clock)) : std::nullopt,
                      format_rfc3339(store_->now()))
            .run();
        tx.commit();
      }
    } catch (const Error& e) {
      r.status = OpStatus::kRejected;
      r.reason = e.code();
    }
    results.push_back(std::move(r));
  }
  return results;
}

Changeset SyncService::pull(const std::optional<std::string>& cursor) {
  auto& db = store_->db();
  auto lock = db.lock();
  Changeset cs;
  const auto latest = store_->latest_change_seq();
  cs.cursor = std::to_string(latest);
  if (!cursor || cursor->empty()) {
    cs.full = true;
    cs.upserted = store_->published_questions();
    return cs;
  }
  std::int64_t from = 0;
  const auto* end = cursor->data() + cursor->size();
  const auto [ptr, ec] = std::from_chars(cursor->data(), end, from);
  if (ec != std::errc{} || ptr != end || from < store_->min_change_seq() || from > latest)
    throw Error("cursor-expired", "cursor is unknown or compacted; pull without a cursor");
  std::set<std::string> seen;
  for (const auto& change : store_->changes_after(from)) {
    if (!seen.insert(change.question_id).second) continue;
    auto q = store_->question(change.question_id);
    if (q && q->state == QuestionState::kPublished)
      cs.upserted.push_back(std::move(*q));
    else
      cs.retired_ids.push_back(change.question_id);
  }
  return cs;
}

void SyncService::compact() { store_->compact_changes(store_->now() - kCursorRetention); }

}  // namespace examforge
