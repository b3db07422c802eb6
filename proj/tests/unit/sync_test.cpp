#include <random>

#include <gtest/gtest.h>

#include "examforge/codec.hpp"
#include "examforge/error.hpp"
#include "examforge/sync.hpp"
#include "support.hpp"

using namespace examforge;
using namespace examforge::testing;
using nlohmann::json;

namespace {

struct Rig {
  ManualClock clock;
  std::shared_ptr<ContentStore> store = seeded_store(clock.clock());
  std::shared_ptr<Engagement> eng = std::make_shared<Engagement>(store);
  SyncService sync{store, eng};
  std::vector<std::string> ids = insert_sample_bank(*store);
};

SyncOp mcq(const std::string& op_id, const std::string& qid, int index, const std::string& user = "usr-student-1") {
  return {op_id, SyncKind::kMcqResponse, {{"question_id", qid}, {"chosen_index", index}}, std::nullopt, user};
}

std::vector<OpStatus> statuses(const std::vector<OpResult>& rs) {
  std::vector<OpStatus> out;
  for (const auto& r : rs) out.push_back(r.status);
  return out;
}

// Client-side replica of published content.
struct Replica {
  std::optional<std::string> cursor;
  std::map<std::string, std::string> content;  // id -> serialized question

  void apply(const Changeset& cs) {
    if (cs.full) content.clear();
    for (const auto& q : cs.upserted) content[q.id] = to_json(q).dump();
    for (const auto& id : cs.retired_ids) content.erase(id);
    cursor = cs.cursor;
  }
  void pull(SyncService& sync) {
    try {
      apply(sync.pull(cursor));
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), "cursor-expired");
      cursor.reset();
      apply(sync.pull(cursor));
    }
  }
};

std::map<std::string, std::string> server_content(ContentStore& store) {
  std::map<std::string, std::string> out;
  for (const auto& q : store.published_questions()) out[q.id] = to_json(q).dump();
  return out;
}

int engagement_rows(ContentStore& store) {
  return static_cast<int>(store.count_rows("user_mcq_responses") + store.count_rows("user_saq_responses") +
                          store.count_rows("question_feedbacks") + store.count_rows("analytics"));
}

}  // namespace

TEST(Push, AppliedThenDuplicate) {
  Rig rig;
  const std::vector<SyncOp> batch = {
      mcq("op-1", rig.ids[0], 0),
      mcq("op-2", rig.ids[1], 1),
      {"op-3", SyncKind::kFeedback, {{"question_id", rig.ids[0]}, {"rating", 4}}, at("2025-06-01T11:00:00.000Z"),
       "usr-student-1"},
  };
  EXPECT_EQ(statuses(rig.sync.push("usr-student-1", batch)),
            (std::vector<OpStatus>{OpStatus::kApplied, OpStatus::kApplied, OpStatus::kApplied}));
  const int rows = engagement_rows(*rig.store);
  const auto progress = rig.eng->progress("usr-student-1", "cpt-cardio").attempted;
  EXPECT_EQ(statuses(rig.sync.push("usr-student-1", batch)),
            (std::vector<OpStatus>{OpStatus::kDuplicate, OpStatus::kDuplicate, OpStatus::kDuplicate}));
  EXPECT_EQ(engagement_rows(*rig.store), rows);
  EXPECT_EQ(rig.eng->progress("usr-student-1", "cpt-cardio").attempted, progress);
  auto st = rig.store->db().prepare("SELECT client_clock, server_at FROM sync_ops WHERE op_id = 'op-3'");
  ASSERT_TRUE(st.step());
  EXPECT_EQ(st.text(0), "2025-06-01T11:00:00.000Z");
  EXPECT_EQ(st.text(1), "2025-06-01T12:00:00.000Z");
}

TEST(Push, RejectionIsIsolated) {
  Rig rig;
  rig.store->set_question_state(rig.ids[1], QuestionState::kRetired);
  const auto r = rig.sync.push("usr-student-1", {mcq("a", rig.ids[0], 0), mcq("b", rig.ids[1], 0),
                                                 mcq("c", rig.ids[2], 9), mcq("d", rig.ids[3], 0),
                                                 {"e", SyncKind::kFeedback, {{"question_id", rig.ids[0]}}, {}, "usr-student-1"},
                                                 mcq("f", rig.ids[0], 1, "usr-student-2")});
  EXPECT_EQ(statuses(r), (std::vector<OpStatus>{OpStatus::kApplied, OpStatus::kRejected, OpStatus::kRejected,
                                                OpStatus::kApplied, OpStatus::kRejected, OpStatus::kRejected}));
  EXPECT_EQ(r[1].reason, "not-available");
  EXPECT_EQ(r[2].reason, "bad-choice");
  EXPECT_EQ(r[4].reason, "invalid-payload");
  EXPECT_EQ(r[5].reason, "forbidden");
  EXPECT_EQ(rig.store->count_rows("user_mcq_responses"), 2);
  // a rejected op is re-evaluated on replay
  rig.store->set_question_state(rig.ids[1], QuestionState::kPublished);
  EXPECT_EQ(rig.sync.push("usr-student-1", {mcq("b", rig.ids[1], 0)})[0].status, OpStatus::kApplied);
}

TEST(Push, SaqAndFeedbackLastWriteWins) {
  Rig rig;
  const auto saq = rig.store->insert_question_bank({make_saq("Explain.", {{"a", 2}})}, "crs-med101", {"S", 2023},
                                                   std::nullopt);
  const auto r = rig.sync.push(
      "usr-student-1",
      {{"s1", SyncKind::kSaqResponse, {{"question_id", saq.question_ids[0]}, {"answers", {"x"}}, {"self_correct", true}}, {}, "usr-student-1"},
       {"f1", SyncKind::kFeedback, {{"question_id", rig.ids[0]}, {"rating", 2}}, at("2025-06-01T11:00:00.000Z"), "usr-student-1"},
       {"f2", SyncKind::kFeedback, {{"question_id", rig.ids[0]}, {"rating", 5}, {"comment", "fixed"}}, at("2025-06-01T10:00:00.000Z"), "usr-student-1"}});
  EXPECT_EQ(statuses(r), (std::vector<OpStatus>{OpStatus::kApplied, OpStatus::kApplied, OpStatus::kApplied}));
  auto st = rig.store->db().prepare("SELECT rating, comment FROM question_feedbacks");
  ASSERT_TRUE(st.step());
  EXPECT_EQ(st.integer(0), 5);  // receipt order, not client clock
  EXPECT_EQ(st.text(1), "fixed");
}

TEST(ParseSyncOp, Envelope) {
  const auto op = parse_sync_op(json::parse(R"({"op_id":"x","kind":"mcq-response","payload":{"question_id":"q","chosen_index":1},
                                              "client_clock":"2025-06-01T10:00:00Z"})"),
                                "usr-student-1");
  EXPECT_EQ(op.user_id, "usr-student-1");
  EXPECT_EQ(op.kind, SyncKind::kMcqResponse);
  EXPECT_EQ(op.client_clock, at("2025-06-01T10:00:00.000Z"));
  for (const char* bad : {R"([])", R"({"kind":"mcq-response"})", R"({"op_id":"","kind":"mcq-response"})",
                          R"({"op_id":"x","kind":"dance"})"}) {
    try {
      parse_sync_op(json::parse(bad), "u");
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "bad-request");
    }
  }
}

TEST(Pull, FullLatestAndVisibility) {
  Rig rig;
  const auto full = rig.sync.pull(std::nullopt);
  EXPECT_TRUE(full.full);
  EXPECT_EQ(full.upserted.size(), 4u);
  const auto same = rig.sync.pull(full.cursor);
  EXPECT_TRUE(same.upserted.empty());
  EXPECT_TRUE(same.retired_ids.empty());
  EXPECT_EQ(same.cursor, full.cursor);

  rig.store->set_question_state(rig.ids[2], QuestionState::kFlagged);
  const auto next = rig.sync.pull(full.cursor);
  EXPECT_EQ(next.retired_ids, std::vector<std::string>{rig.ids[2]});
  EXPECT_TRUE(next.upserted.empty());
  EXPECT_GT(std::stoll(next.cursor), std::stoll(full.cursor));

  Replica replica;
  replica.apply(full);
  replica.apply(next);
  replica.apply(next);  // replaying a changeset is a no-op
  EXPECT_EQ(replica.content, server_content(*rig.store));
  const auto j = to_json(next);
  EXPECT_EQ(j["retired_ids"][0], rig.ids[2]);
  EXPECT_EQ(j["full"], false);
}

TEST(Pull, UnknownOrCompactedCursor) {
  Rig rig;
  for (const std::string bad : {"abc", "-1", "999999", "12x"}) {
    try {
      rig.sync.pull(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "cursor-expired");
    }
  }
  const auto old = rig.sync.pull(std::nullopt).cursor;
  rig.clock.advance(std::chrono::hours(24 * 31));
  rig.store->set_question_state(rig.ids[0], QuestionState::kFlagged);
  rig.sync.compact();
  EXPECT_EQ(rig.sync.pull(old).retired_ids, std::vector<std::string>{rig.ids[0]});  // at the cut: still complete
  try {
    rig.sync.pull(std::to_string(std::stoll(old) - 1));
    ADD_FAILURE() << "compacted cursor accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "cursor-expired");
  }
  const auto fresh = rig.sync.pull(std::nullopt);
  EXPECT_EQ(fresh.upserted.size(), 3u);
  EXPECT_TRUE(rig.sync.pull(fresh.cursor).upserted.empty());
}

TEST(Sync, ConvergenceUnderRandomSchedules) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    Rig rig;
    std::vector<Replica> clients(3);
    std::vector<std::string> ids = rig.ids;
    int op_counter = 0;
    for (int step = 0; step < 120; ++step) {
      const auto action = rng() % 6;
      if (action == 0) {
        auto q = make_mcq("Trial " + std::to_string(trial) + " q" + std::to_string(step) + "?", {"a", "b"}, 0);
        auto r = rig.store->insert_question_bank({q}, "crs-med101", {"Extra", 2020}, std::nullopt);
        ids.push_back(r.question_ids[0]);
      } else if (action == 1) {
        const auto states = {QuestionState::kPublished, QuestionState::kFlagged, QuestionState::kRetired};
        rig.store->set_question_state(ids[rng() % ids.size()], *(states.begin() + rng() % 3));
      } else if (action == 2) {
        rig.clock.advance(std::chrono::hours(24 * (rng() % 20)));
        rig.sync.compact();
      } else if (action == 3) {
        const auto user = "usr-student-" + std::to_string(1 + rng() % 3);
        std::vector<SyncOp> batch;
        for (int k = 0; k < 3; ++k)
          batch.push_back(mcq("op-" + std::to_string(op_counter++ % 50), ids[rng() % ids.size()],
                              static_cast<int>(rng() % 3), user));
        rig.sync.push(user, batch);
      } else {
        clients[rng() % clients.size()].pull(rig.sync);
      }
    }
    const auto truth = server_content(*rig.store);
    for (auto& c : clients) {
      c.pull(rig.sync);
      EXPECT_EQ(c.content, truth);
    }
  }
}

TEST(Sync, ExactlyOnceUnderReplays) {
  Rig rig;
  std::vector<SyncOp> batch;
  for (int i = 0; i < 20; ++i) batch.push_back(mcq("r" + std::to_string(i), rig.ids[i % 4], i % 3));
  rig.sync.push("usr-student-1", batch);
  const int once = engagement_rows(*rig.store);
  const auto progress = rig.eng->progress("usr-student-1");
  for (int n = 0; n < 3; ++n) rig.sync.push("usr-student-1", batch);
  EXPECT_EQ(engagement_rows(*rig.store), once);
  const auto after = rig.eng->progress("usr-student-1");
  ASSERT_EQ(after.size(), progress.size());
  for (size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].attempted, progress[i].attempted);
}

TEST(Sync, OfflineRoundTripEqualsOnline) {
  std::vector<SyncOp> ops;
  auto build = [&](const std::vector<std::string>& ids) {
    ops.clear();
    for (int i = 0; i < 12; ++i) ops.push_back(mcq("off-" + std::to_string(i), ids[i % 4], i % 3));
    ops.push_back({"off-fb", SyncKind::kFeedback, {{"question_id", ids[0]}, {"rating", 3}}, {}, "usr-student-1"});
  };
  Rig online;
  build(online.ids);
  for (const auto& op : ops) online.sync.push("usr-student-1", {op});
  Rig offline;
  build(offline.ids);
  offline.sync.push("usr-student-1", ops);
  EXPECT_EQ(engagement_rows(*online.store), engagement_rows(*offline.store));
  const auto a = online.eng->progress("usr-student-1");
  const auto b = offline.eng->progress("usr-student-1");
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].attempted, b[i].attempted);
    EXPECT_EQ(a[i].correct, b[i].correct);
  }
}
