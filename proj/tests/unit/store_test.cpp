#include <random>

#include <gtest/gtest.h>

#include "examforge/error.hpp"
#include "examforge/store.hpp"
#include "support.hpp"

using namespace examforge;
using namespace examforge::testing;

namespace {

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

std::vector<Question> four_drafts() {
  return {make_mcq("One?", {"a", "b"}, 0), make_mcq("Two?", {"a", "b"}, 1), make_saq("Three.", {{"part", 2}}),
          make_mcq("Four?", {"a", "b", "c"}, 2)};
}

}  // namespace

TEST(InsertBank, CountsAndReplay) {
  auto store = seeded_store();
  const auto first = store->insert_question_bank(four_drafts(), "crs-med101", {"Paper", 2023}, std::nullopt);
  EXPECT_EQ(first.question_ids.size(), 4u);
  EXPECT_EQ(first.newly_inserted, 4);
  EXPECT_EQ(store->count_rows("past_papers"), 1);
  const auto rows = store->count_rows("questions");
  const auto second = store->insert_question_bank(four_drafts(), "crs-med101", {"Paper", 2023}, std::nullopt);
  EXPECT_EQ(second.question_ids, first.question_ids);
  EXPECT_EQ(second.past_paper_id, first.past_paper_id);
  EXPECT_EQ(second.newly_inserted, 0);
  EXPECT_EQ(store->count_rows("questions"), rows);
  EXPECT_EQ(store->count_rows("mcq_choices"), 7);
}

TEST(InsertBank, MissingConceptIsAtomic) {
  auto store = seeded_store();
  auto drafts = four_drafts();
  drafts[3].concept_ids = {"cpt-does-not-exist"};
  EXPECT_EQ(code_of([&] { store->insert_question_bank(drafts, "crs-med101", {"Paper", 2023}, std::nullopt); }),
            "integrity-violation");
  EXPECT_EQ(store->count_rows("questions"), 0);
  EXPECT_EQ(store->count_rows("past_papers"), 0);
  EXPECT_EQ(code_of([&] { store->insert_question_bank(four_drafts(), "crs-nope", {"Paper", 2023}, std::nullopt); }),
            "integrity-violation");
}

TEST(InsertBank, InvalidQuestionIsRejected) {
  auto store = seeded_store();
  auto drafts = four_drafts();
  drafts[0].choices[1].is_correct = true;
  EXPECT_EQ(code_of([&] { store->insert_question_bank(drafts, "crs-med101", {"Paper", 2023}, std::nullopt); }),
            "integrity-violation");
  EXPECT_EQ(store->count_rows("questions"), 0);
}

TEST(InsertBank, FingerprintUniquePerCourseNotGlobal) {
  auto store = seeded_store();
  auto q = make_mcq("Shared classic?", {"a", "b"}, 0);
  store->insert_question_bank({q}, "crs-med101", {"P", 2023}, std::nullopt);
  q.course_id = "crs-pha201";
  const auto other = store->insert_question_bank({q}, "crs-pha201", {"P", 2023}, std::nullopt);
  EXPECT_EQ(other.newly_inserted, 1);
  EXPECT_EQ(store->count_rows("questions"), 2);
}

TEST(PastPaper, YearBoundsAndUpsert) {
  ManualClock clock;
  auto store = seeded_store(clock.clock());
  EXPECT_EQ(code_of([&] { store->upsert_past_paper("crs-med101", {"P", 1899}, std::nullopt); }), "invalid-paper");
  EXPECT_EQ(code_of([&] { store->upsert_past_paper("crs-med101", {"P", 2027}, std::nullopt); }), "invalid-paper");
  const auto a = store->upsert_past_paper("crs-med101", {"P", 2026}, std::nullopt);
  const auto doc = store->put_document("p.pdf", "application/pdf", Bytes{'%', 'P', 'D', 'F'});
  const auto b = store->upsert_past_paper("crs-med101", {"P", 2026}, doc.id);
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(store->past_paper(a.id)->source_document_id, doc.id);
}

TEST(Query, VisibilityRule) {
  auto store = seeded_store();
  const auto ids = insert_sample_bank(*store);
  store->insert_question_bank({make_mcq("Fifth?", {"a", "b"}, 0)}, "crs-med101", {"Sample Paper", 2023}, std::nullopt);
  const auto page = store->query_questions({.course_id = "crs-med101"}, Role::kFaculty);
  ASSERT_EQ(page.total, 5);
  store->set_question_state(page.items[4].id, QuestionState::kFlagged);
  EXPECT_EQ(store->query_questions({.course_id = "crs-med101"}, Role::kStudent).total, 4);
  EXPECT_EQ(store->query_questions({.course_id = "crs-med101"}, Role::kFaculty).total, 5);
  EXPECT_EQ(store->query_questions({.course_id = "crs-med101", .state = QuestionState::kFlagged}, Role::kStudent).total,
            0);
}

TEST(Query, EmptyCourseAndPaging) {
  auto store = seeded_store();
  const auto empty = store->query_questions({.course_id = "crs-pat301"}, Role::kStudent);
  EXPECT_EQ(empty.total, 0);
  EXPECT_TRUE(empty.items.empty());
  const auto ids = insert_sample_bank(*store);
  const auto p1 = store->query_questions({.course_id = "crs-med101", .page = 1, .page_size = 3}, Role::kStudent);
  const auto p2 = store->query_questions({.course_id = "crs-med101", .page = 2, .page_size = 3}, Role::kStudent);
  ASSERT_EQ(p1.items.size(), 3u);
  ASSERT_EQ(p2.items.size(), 1u);
  EXPECT_EQ(p1.items[0].id, ids[0]);
  EXPECT_EQ(p2.items[0].id, ids[3]);
  EXPECT_EQ(p1.items[1].choices.size(), 4u);
  EXPECT_EQ(code_of([&] { store->query_questions({.page_size = 101}, Role::kStudent); }), "page-too-large");
  EXPECT_EQ(store->query_questions({.page_size = 100}, Role::kStudent).total, 4);
}

TEST(Query, InstitutionAndConceptFilters) {
  auto store = seeded_store();
  insert_sample_bank(*store);
  auto q = make_mcq("Pharm?", {"a", "b"}, 0, "crs-pha201", "cpt-antimicrobials");
  store->insert_question_bank({q}, "crs-pha201", {"P", 2023}, std::nullopt);
  EXPECT_EQ(store->query_questions({.institution_id = "inst-kihs"}, Role::kStudent).total, 4);
  EXPECT_EQ(store->query_questions({.institution_id = "inst-lakeside"}, Role::kStudent).total, 5);
  EXPECT_EQ(store->query_questions({.concept_id = "cpt-antimicrobials"}, Role::kStudent).total, 1);
}

TEST(Export, CanonicalAndEmpty) {
  auto store = seeded_store();
  insert_sample_bank(*store);
  const auto paper = store->query_questions({}, Role::kFaculty).items[0].past_paper_id;
  const auto a = store->export_bank(paper);
  EXPECT_EQ(a, store->export_bank(paper));
  EXPECT_EQ(a.back(), '\n');
  EXPECT_EQ(a.find('\r'), std::string::npos);
  EXPECT_EQ(a.find("q_"), std::string::npos);  // no ids
  const auto doc = nlohmann::json::parse(a);
  EXPECT_EQ(doc["bank_version"], 1);
  ASSERT_EQ(doc["questions"].size(), 4u);
  for (size_t i = 1; i < 4; ++i)
    EXPECT_LT(doc["questions"][i - 1]["fingerprint"].get<std::string>(), doc["questions"][i]["fingerprint"].get<std::string>());

  const auto empty = store->upsert_past_paper("crs-med102", {"Empty", 2020}, std::nullopt);
  EXPECT_TRUE(nlohmann::json::parse(store->export_bank(empty.id))["questions"].empty());
  EXPECT_EQ(code_of([&] { (void)store->export_bank("pp_missing"); }), "unknown-paper");
}

TEST(Export, IndependentOfInsertionOrderAndIds) {
  auto s1 = seeded_store();
  auto s2 = seeded_store();
  auto drafts = four_drafts();
  s1->insert_question_bank(drafts, "crs-med101", {"Paper", 2023}, std::nullopt);
  std::reverse(drafts.begin(), drafts.end());
  s2->insert_question_bank(drafts, "crs-med101", {"Paper", 2023}, std::nullopt);
  const auto p1 = s1->query_questions({}, Role::kFaculty).items[0].past_paper_id;
  const auto p2 = s2->query_questions({}, Role::kFaculty).items[0].past_paper_id;
  EXPECT_EQ(s1->export_bank(p1), s2->export_bank(p2));
}

TEST(Import, OwnExportAndFreshStore) {
  auto store = seeded_store();
  insert_sample_bank(*store);
  const auto paper = store->query_questions({}, Role::kFaculty).items[0].past_paper_id;
  const auto bank = store->export_bank(paper);
  const auto again = store->import_bank(bank, "crs-med101");
  EXPECT_EQ(again.inserted, 0);
  EXPECT_EQ(again.skipped, 4);
  EXPECT_EQ(again.past_paper_id, paper);

  auto fresh = seeded_store();
  const auto r = fresh->import_bank(bank, "crs-med101");
  EXPECT_EQ(r.inserted, 4);
  EXPECT_EQ(r.skipped, 0);
  EXPECT_EQ(fresh->export_bank(r.past_paper_id), bank);
}

TEST(Import, TruncatedAndInvalid) {
  auto store = seeded_store();
  insert_sample_bank(*store);
  const auto paper = store->query_questions({}, Role::kFaculty).items[0].past_paper_id;
  const auto bank = store->export_bank(paper);

  auto fresh = seeded_store();
  EXPECT_EQ(code_of([&] { fresh->import_bank(bank.substr(0, bank.size() / 2), "crs-med101"); }), "bad-interchange");
  EXPECT_EQ(code_of([&] { fresh->import_bank(R"({"bank_version": 2, "paper": {}, "questions": []})", "crs-med101"); }),
            "bad-interchange");
  EXPECT_EQ(fresh->count_rows("questions"), 0);

  auto doc = nlohmann::json::parse(bank);
  doc["questions"][2]["choices"][0]["correct"] = true;
  doc["questions"][2]["choices"][1]["correct"] = true;
  doc["questions"].push_back(nlohmann::json::parse(R"({"kind":"mcq","stem":"New?","concepts":["Brand New Concept"],
    "choices":[{"text":"a","correct":true},{"text":"b","correct":false}],"fingerprint":""})"));
  EXPECT_EQ(code_of([&] { fresh->import_bank(doc.dump(), "crs-med101"); }), "invalid-content");
  EXPECT_EQ(fresh->count_rows("questions"), 0);
  EXPECT_FALSE(fresh->concept_by_name("Brand New Concept"));
  EXPECT_EQ(code_of([&] { fresh->import_bank(bank, "crs-nope"); }), "unknown-course");
}

TEST(Import, RejectsTamperedFingerprint) {
  auto store = seeded_store();
  insert_sample_bank(*store);
  auto doc = nlohmann::json::parse(store->export_bank(store->query_questions({}, Role::kFaculty).items[0].past_paper_id));
  doc["questions"][0]["stem"] = "Edited stem without a new fingerprint?";
  auto fresh = seeded_store();
  EXPECT_EQ(code_of([&] { fresh->import_bank(doc.dump(), "crs-med101"); }), "invalid-content");
}

TEST(Concepts, CycleRejectedAndEnsureCaseInsensitive) {
  auto store = seeded_store();
  EXPECT_EQ(code_of([&] { store->put_concept({"cpt-cardio", "Cardiovascular physiology", "cpt-cardio-ep"}); }),
            "concept-cycle");
  EXPECT_EQ(code_of([&] { store->put_concept({"cpt-self", "Self", "cpt-self"}); }), "concept-cycle");
  EXPECT_EQ(store->ensure_concept("RENAL PHYSIOLOGY").id, "cpt-renal");
  const auto made = store->ensure_concept("Neuroanatomy");
  EXPECT_EQ(store->ensure_concept("neuroanatomy").id, made.id);
  EXPECT_EQ(store->default_concept("crs-med101").id, store->default_concept("crs-med101").id);
}

TEST(ChangeFeed, RecordsInsertsAndStateChanges) {
  auto store = seeded_store();
  EXPECT_EQ(store->latest_change_seq(), 0);
  const auto ids = insert_sample_bank(*store);
  const auto after_insert = store->latest_change_seq();
  EXPECT_EQ(store->changes_after(0).size(), 4u);
  store->set_question_state(ids[1], QuestionState::kFlagged);
  const auto changes = store->changes_after(after_insert);
  ASSERT_EQ(changes.size(), 1u);
  EXPECT_EQ(changes[0].question_id, ids[1]);
  EXPECT_EQ(store->published_questions().size(), 3u);
  EXPECT_EQ(code_of([&] { store->set_question_state("q_missing", QuestionState::kRetired); }), "unknown-question");
}

TEST(Integrity, RandomOperationsKeepStoreClean) {
  auto store = seeded_store();
  std::mt19937 rng(21);
  const std::vector<std::string> courses = {"crs-med101", "crs-med102", "crs-pha201"};
  for (int i = 0; i < 150; ++i) {
    const auto& course = courses[rng() % courses.size()];
    const int op = static_cast<int>(rng() % 4);
    try {
      if (op == 0) {
        std::vector<Question> qs;
        for (int k = 0; k < 3; ++k)
          qs.push_back(make_mcq("Q" + std::to_string(rng() % 40) + "?", {"a", "b", "c"}, static_cast<int>(rng() % 3),
                                course, rng() % 7 == 0 ? "cpt-missing" : "cpt-renal"));
        store->insert_question_bank(qs, course, {"Paper " + std::to_string(rng() % 3), 2020}, std::nullopt);
      } else if (op == 1) {
        auto page = store->query_questions({.course_id = course, .page_size = 100}, Role::kFaculty);
        if (!page.items.empty())
          store->set_question_state(page.items[rng() % page.items.size()].id,
                                    static_cast<QuestionState>(rng() % 4));
      } else if (op == 2) {
        auto page = store->query_questions({.course_id = course, .page_size = 100}, Role::kFaculty);
        if (!page.items.empty()) {
          auto bank = store->export_bank(page.items[0].past_paper_id);
          store->import_bank(bank, courses[rng() % courses.size()]);
        }
      } else {
        store->import_bank("{\"bank_version\":1,\"paper\":", course);
      }
    } catch (const Error&) {
    }
    ASSERT_TRUE(store->check_integrity().empty()) << "after op " << i << ": " << store->check_integrity().front();
  }
}

TEST(Documents, StoredWithHashAndArtifacts) {
  auto store = seeded_store();
  const Bytes data = {'%', 'P', 'D', 'F', '-', '1'};
  const auto d = store->put_document("a.pdf", "application/pdf", data);
  EXPECT_EQ(d.sha256, sha256_hex(data));
  EXPECT_EQ(store->document_bytes(d.id), data);
  store->put_artifact(d.id, "job_1", "layout", "{}");
  store->put_artifact(d.id, "job_1", "layout", "{\"v\":2}");
  EXPECT_EQ(store->latest_artifact("job_1", "layout"), "{\"v\":2}");
  EXPECT_EQ(store->artifacts("job_1", "layout").size(), 2u);
  EXPECT_FALSE(store->latest_artifact("job_1", "synthesis"));
  EXPECT_EQ(code_of([&] { (void)store->document_bytes("doc_missing"); }), "unknown-document");
}
