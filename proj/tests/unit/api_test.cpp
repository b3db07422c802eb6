#include <set>

#include <gtest/gtest.h>

#include "examforge/api.hpp"
#include "examforge/error.hpp"
#include "support.hpp"

using namespace examforge;
using namespace examforge::testing;
using nlohmann::json;

namespace {

struct Rig {
  ManualClock clock;
  std::shared_ptr<ContentStore> store = seeded_store(clock.clock());
  std::shared_ptr<Engagement> eng = std::make_shared<Engagement>(store);
  std::vector<std::string> ids = insert_sample_bank(*store);
  std::unique_ptr<Api> api;

  Rig() {
    ApiContext ctx;
    ctx.store = store;
    ctx.engagement = eng;
    ctx.sync = std::make_shared<SyncService>(store, eng);
    ctx.tokens = TokenTable::load(fixtures_dir() / "tokens.json");
    api = std::make_unique<Api>(std::move(ctx));
  }

  ApiResponse call(const std::string& method, const std::string& target, const std::string& token = "",
                   const json& body = nullptr, std::map<std::string, std::string> headers = {}) {
    ApiRequest req;
    req.method = method;
    split_target(target, req.path, req.query);
    if (!token.empty()) headers["authorization"] = "Bearer " + token;
    req.headers = std::move(headers);
    if (!body.is_null()) req.body = body.dump();
    return api->route(req);
  }
  json get(const std::string& target, const std::string& token = "dev-student-1") {
    return json::parse(call("GET", target, token).body);
  }
  std::string paper() { return store->question(ids[0])->past_paper_id; }
};

}  // namespace

TEST(Api, HealthNeedsNoToken) {
  Rig rig;
  const auto r = rig.call("GET", "/health");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(json::parse(r.body)["status"], "ok");
  EXPECT_FALSE(r.headers.at("x-request-id").empty());
}

TEST(Api, AuthErrors) {
  Rig rig;
  EXPECT_EQ(rig.call("GET", "/courses").status, 401);
  EXPECT_EQ(rig.call("GET", "/courses", "forged").status, 401);
  ApiRequest raw{"GET", "/courses", {}, {{"authorization", "Basic dev-student-1"}}, ""};
  EXPECT_EQ(rig.api->route(raw).status, 401);
  const auto r = rig.call("GET", "/courses", "forged");
  const auto body = json::parse(r.body);
  EXPECT_EQ(body["code"], "unauthenticated");
  EXPECT_EQ(body["request_id"], r.headers.at("x-request-id"));
}

TEST(Api, StatusMapping) {
  Rig rig;
  EXPECT_EQ(rig.call("GET", "/nowhere", "dev-student-1").status, 404);
  EXPECT_EQ(rig.call("DELETE", "/courses", "dev-student-1").status, 405);
  EXPECT_EQ(rig.call("GET", "/papers/pp_missing/questions", "dev-student-1").status, 404);
  EXPECT_EQ(rig.call("POST", "/questions/" + rig.ids[0] + "/flags", "dev-student-1", {{"reason", "x"}}).status, 403);
  EXPECT_EQ(rig.call("POST", "/questions/" + rig.ids[0] + "/responses", "dev-student-1", {{"chosen_index", 9}}).status,
            422);
  EXPECT_EQ(rig.call("GET", "/questions?page_size=101", "dev-student-1").status, 422);
  ApiRequest bad{"POST", "/questions/" + rig.ids[0] + "/feedback", {}, {{"authorization", "Bearer dev-student-1"}},
                 "{nope"};
  EXPECT_EQ(rig.api->route(bad).status, 422);
  const auto f = json::parse(rig.call("POST", "/questions/" + rig.ids[0] + "/flags", "dev-faculty-1",
                                      {{"reason", "typo"}}).body);
  EXPECT_EQ(rig.call("POST", "/flags/" + f["id"].get<std::string>() + "/resolve", "dev-faculty-1",
                     {{"outcome", "republish"}}).status, 200);
  EXPECT_EQ(rig.call("POST", "/flags/" + f["id"].get<std::string>() + "/resolve", "dev-faculty-1",
                     {{"outcome", "republish"}}).status, 409);
  EXPECT_EQ(status_for("cursor-expired"), 409);
  EXPECT_EQ(status_for("store-busy"), 503);
}

TEST(Api, PaperQuestionsRespectVisibility) {
  Rig rig;
  rig.store->set_question_state(rig.ids[3], QuestionState::kFlagged);
  const auto student = rig.get("/papers/" + rig.paper() + "/questions");
  EXPECT_EQ(student["total"], 3);
  for (const auto& q : student["items"]) EXPECT_EQ(q["state"], "published");
  EXPECT_EQ(rig.get("/papers/" + rig.paper() + "/questions", "dev-faculty-1")["total"], 4);
  EXPECT_EQ(rig.call("GET", "/questions/" + rig.ids[3], "dev-student-1").status, 404);
  EXPECT_EQ(rig.call("GET", "/questions/" + rig.ids[3], "dev-faculty-1").status, 200);
  const auto paged = rig.get("/papers/" + rig.paper() + "/questions?page=2&page_size=2");
  EXPECT_EQ(paged["items"].size(), 1u);
  EXPECT_EQ(paged["page"], 2);
}

TEST(Api, CoursesByInstitution) {
  Rig rig;
  EXPECT_EQ(rig.get("/courses")["items"].size(), 5u);
  const auto kihs = rig.get("/courses?institution=inst-kihs")["items"];
  std::set<std::string> codes;
  for (const auto& c : kihs) codes.insert(c["code"].get<std::string>());
  EXPECT_EQ(codes, (std::set<std::string>{"MED101", "MED102"}));
}

TEST(Api, ResponsesFeedbackAndProgress) {
  Rig rig;
  const auto r = rig.call("POST", "/questions/" + rig.ids[0] + "/responses", "dev-student-1",
                          {{"kind", "mcq"}, {"chosen_index", 0}});
  EXPECT_EQ(r.status, 201);
  EXPECT_EQ(json::parse(r.body)["correct"], true);
  EXPECT_EQ(rig.call("POST", "/questions/" + rig.ids[0] + "/feedback", "dev-student-1",
                     {{"rating", 5}, {"comment", "good"}}).status, 201);
  const auto progress = rig.get("/progress")["items"];
  ASSERT_EQ(progress.size(), 1u);
  EXPECT_EQ(progress[0]["concept_id"], "cpt-cardio");
  EXPECT_EQ(progress[0]["mastery"], 1.0);
}

TEST(Api, GzipAboveThreshold) {
  Rig rig;
  const auto plain = rig.call("GET", "/questions", "dev-student-1");
  ASSERT_GT(plain.body.size(), kCompressThreshold);
  EXPECT_FALSE(plain.headers.count("content-encoding"));
  const auto zipped = rig.call("GET", "/questions", "dev-student-1", nullptr, {{"accept-encoding", "gzip, br"}});
  EXPECT_EQ(zipped.headers.at("content-encoding"), "gzip");
  EXPECT_LT(zipped.body.size(), plain.body.size());
  EXPECT_EQ(json::parse(gzip_decompress(zipped.body))["total"], json::parse(plain.body)["total"]);
  const auto small = rig.call("GET", "/health", "", nullptr, {{"accept-encoding", "gzip"}});
  EXPECT_FALSE(small.headers.count("content-encoding"));
}

TEST(Api, PageCapBoundsListPayloads) {
  Rig rig;
  std::vector<Question> many;
  for (int i = 0; i < 130; ++i) many.push_back(make_mcq("Bulk question " + std::to_string(i) + "?", {"a", "b"}, 0));
  rig.store->insert_question_bank(many, "crs-med101", {"Bulk", 2022}, std::nullopt);
  const auto all = rig.get("/questions?page_size=100");
  EXPECT_EQ(all["total"], 134);
  EXPECT_EQ(all["items"].size(), 100u);
  EXPECT_EQ(rig.get("/questions")["items"].size(), 20u);
}

TEST(Api, SyncRoundTrip) {
  Rig rig;
  const json ops = {{"ops",
                     {{{"op_id", "a1"}, {"kind", "mcq-response"}, {"payload", {{"question_id", rig.ids[0]}, {"chosen_index", 0}}}},
                      {{"op_id", "a2"}, {"kind", "bogus"}},
                      {{"op_id", "a3"}, {"kind", "feedback"}, {"payload", {{"question_id", rig.ids[1]}, {"rating", 4}}},
                       {"client_clock", "2025-06-01T09:00:00Z"}}}}};
  const auto first = json::parse(rig.call("POST", "/sync/push", "dev-student-1", ops).body)["results"];
  ASSERT_EQ(first.size(), 3u);
  EXPECT_EQ(first[0]["status"], "applied");
  EXPECT_EQ(first[1]["status"], "rejected");
  EXPECT_EQ(first[1]["reason"], "bad-request");
  EXPECT_EQ(first[2]["status"], "applied");
  const auto again = json::parse(rig.call("POST", "/sync/push", "dev-student-1", ops["ops"]).body)["results"];
  EXPECT_EQ(again[0]["status"], "duplicate");
  EXPECT_EQ(again[2]["status"], "duplicate");

  const auto full = rig.get("/sync/pull");
  EXPECT_EQ(full["upserted"].size(), 4u);
  EXPECT_EQ(full["full"], true);
  const auto same = rig.get("/sync/pull?cursor=" + full["cursor"].get<std::string>());
  EXPECT_TRUE(same["upserted"].empty());
  EXPECT_EQ(rig.call("GET", "/sync/pull?cursor=bogus", "dev-student-1").status, 409);
  EXPECT_EQ(rig.call("POST", "/sync/push", "dev-student-1", {{"nope", 1}}).status, 422);
}

TEST(Api, AnalyticsForStaff) {
  Rig rig;
  rig.clock.set(at("2025-06-03T12:00:00.000Z"));
  rig.eng->record_study_event("usr-student-1", at("2025-06-01T10:00:00.000Z"));
  rig.eng->record_study_event("usr-student-1", at("2025-06-02T10:00:00.000Z"));
  rig.eng->record_study_event("usr-student-2", at("2025-06-02T11:00:00.000Z"));
  rig.eng->record_feedback("usr-student-1", rig.ids[0], 5, std::nullopt, at("2025-06-02T10:00:00.000Z"));
  EXPECT_EQ(rig.call("GET", "/analytics/dau?from=2025-06-02&to=2025-06-02", "dev-student-1").status, 403);
  const auto dau = rig.get("/analytics/dau?from=2025-06-02&to=2025-06-02&baseline_from=2025-06-01&baseline_to=2025-06-01",
                           "dev-admin-1");
  EXPECT_EQ(dau["series"][0]["dau"], 2);
  EXPECT_EQ(dau["baseline"]["series"][0]["date"], "2025-06-01");
  EXPECT_DOUBLE_EQ(dau["percent_change"].get<double>(), 100.0);
  const auto sat = rig.get("/analytics/satisfaction?from=2025-06-01&to=2025-06-30", "dev-faculty-1");
  EXPECT_EQ(sat["fraction_satisfied"], 1.0);
  EXPECT_EQ(sat["histogram"]["5"], 1);
  const auto proc = rig.get("/analytics/processing?from=2025-06-01&to=2025-06-30", "dev-faculty-1");
  EXPECT_TRUE(proc["median_seconds"].is_null());
  EXPECT_EQ(rig.call("GET", "/analytics/dau?from=2025-06-02", "dev-admin-1").status, 422);
  EXPECT_EQ(rig.call("GET", "/analytics/dau?from=2025-06-09&to=2025-06-02", "dev-admin-1").status, 422);
}

TEST(Api, ExportIsStaffOnlyAndCanonical) {
  Rig rig;
  EXPECT_EQ(rig.call("GET", "/papers/" + rig.paper() + "/export", "dev-student-1").status, 403);
  const auto r = rig.call("GET", "/papers/" + rig.paper() + "/export", "dev-faculty-1");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, rig.store->export_bank(rig.paper()));
}

TEST(Api, SplitTargetDecodes) {
  std::string path;
  std::map<std::string, std::string> q;
  split_target("/papers/a%20b/questions?x=1&y=%2Fz&flag", path, q);
  EXPECT_EQ(path, "/papers/a b/questions");
  EXPECT_EQ(q["x"], "1");
  EXPECT_EQ(q["y"], "/z");
  EXPECT_TRUE(q.count("flag"));
  EXPECT_EQ(url_decode("a+b%41"), "a bA");
}

TEST(Api, TokenTableValidation) {
  EXPECT_THROW(TokenTable::from_json(json::parse(R"({"t": {"role": "student"}})")), Error);
  EXPECT_THROW(TokenTable::from_json(json::parse(R"({"t": {"user_id": "u", "role": "wizard"}})")), Error);
  const auto t = TokenTable::from_json(json::parse(R"({"t": {"user_id": "u", "role": "admin"}})"));
  EXPECT_EQ(t.lookup("t")->role, Role::kAdmin);
  EXPECT_FALSE(t.lookup("x"));
}
