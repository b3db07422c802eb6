#include <random>

#include <gtest/gtest.h>

#include "examforge/model.hpp"
#include "support.hpp"

using namespace examforge;
using namespace examforge::testing;

TEST(NormalizeText, SpecExamples) {
  EXPECT_EQ(normalize_text("What  is   X?"), "what is x");
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text("  Amoxicillin.  "), "amoxicillin");
}

TEST(NormalizeText, ComposesBeforeComparing) {
  // "e" + combining acute vs precomposed "é"
  EXPECT_EQ(normalize_text("Cafe\xCC\x81"), normalize_text("Caf\xC3\xA9"));
  EXPECT_EQ(normalize_text("\xC3\x89NALAPRIL"), "\xC3\xA9nalapril");
}

TEST(NormalizeText, KeepsInnerPunctuation) {
  EXPECT_EQ(normalize_text("(beta-1) blockers, e.g. atenolol!"), "beta-1) blockers, e.g. atenolol");
  EXPECT_EQ(normalize_text("\t\n  ..."), "");
}

TEST(NormalizeText, IdempotentOnRandomStrings) {
  std::mt19937 rng(7);
  const std::vector<std::string> alphabet = {"a", "Z", " ", "  ", "\t", "\n", ".", "?", "!", "-", "(", ")", "\xC3\xA9",
                                             "e\xCC\x81", "\xCE\xA3", "\xC3\x9F", "1", "\xE2\x80\x94", "\xC2\xA0"};
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 24);
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    for (int n = len(rng); n > 0; --n) s += alphabet[pick(rng)];
    const auto once = normalize_text(s);
    ASSERT_EQ(normalize_text(once), once) << "input: " << s;
  }
}

TEST(Fingerprint, WhitespaceAndCaseInsensitive) {
  auto a = make_mcq("Which drug is a beta blocker?", {"Atenolol", "Amlodipine"}, 0);
  auto b = make_mcq("  which DRUG is a   beta blocker ", {"atenolol.", "AMLODIPINE"}, 0);
  EXPECT_EQ(question_fingerprint(a), question_fingerprint(b));
}

TEST(Fingerprint, ExcludedFieldsDoNotContribute) {
  auto a = make_mcq("Which drug is a beta blocker?", {"Atenolol", "Amlodipine"}, 0);
  const auto base = question_fingerprint(a);
  auto b = a;
  b.provenance.confidence = 0.2;
  b.id = "q_other";
  b.past_paper_id = "pp_x";
  b.course_id = "crs-other";
  b.concept_ids = {"cpt-x", "cpt-y"};
  b.state = QuestionState::kRetired;
  b.explanation = "because";
  b.provenance.generator = Generator::kModel;
  b.provenance.created_at = at("2001-01-01T00:00:00.000Z");
  b.provenance.source_document_id = "doc_1";
  EXPECT_EQ(question_fingerprint(b), base);
  // choice order and correctness are not part of the recipe either
  std::swap(b.choices[0].text, b.choices[1].text);
  EXPECT_EQ(question_fingerprint(b), base);
  // content fields are
  b.stem += " now";
  EXPECT_NE(question_fingerprint(b), base);
}

TEST(Fingerprint, MatchesIndependentReference) {
  const auto cases = nlohmann::json::parse(read_file(fixtures_dir() / "reference_fingerprints.json"));
  ASSERT_GE(cases.size(), 4u);
  for (const auto& c : cases) {
    Question q;
    q.stem = c["stem"];
    if (c["kind"] == "mcq") {
      q.kind = QuestionKind::kMcq;
      int i = 0;
      for (const auto& t : c["choices"]) q.choices.push_back({i++, t.get<std::string>(), false});
    } else {
      q.kind = QuestionKind::kSaq;
      int i = 0;
      for (const auto& t : c["parts"]) q.parts.push_back({i++, t.get<std::string>(), "", 1});
    }
    EXPECT_EQ(normalize_text(q.stem), c["normalized_stem"].get<std::string>()) << c["name"];
    EXPECT_EQ(question_fingerprint(q), c["fingerprint"].get<std::string>()) << c["name"];
  }
}

TEST(ValidateQuestion, SpecExamples) {
  EXPECT_TRUE(validate_question(make_mcq("Stem?", {"A", "B", "C", "D"}, 2)).ok());
  auto none = make_mcq("Stem?", {"A", "B", "C", "D"}, -1);
  EXPECT_TRUE(validate_question(none).has("no-correct-choice"));
  auto saq = make_saq("Describe shock.", {});
  EXPECT_TRUE(validate_question(saq).has("saq-no-parts"));
}

TEST(ValidateQuestion, EveryViolationClass) {
  struct Case {
    const char* code;
    Question q;
  };
  std::vector<Case> cases;
  auto base = make_mcq("Stem?", {"A", "B", "C"}, 0);
  {
    auto q = base;
    q.stem = " ?! ";
    cases.push_back({"empty-stem", q});
  }
  {
    auto q = base;
    q.concept_ids.clear();
    cases.push_back({"no-concepts", q});
  }
  {
    auto q = base;
    q.provenance.confidence = 1.5;
    cases.push_back({"bad-confidence", q});
  }
  cases.push_back({"too-few-choices", make_mcq("Stem?", {"Only"}, 0)});
  cases.push_back({"too-many-choices", make_mcq("Stem?", {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11"}, 0)});
  {
    auto q = base;
    q.choices[1].is_correct = true;
    cases.push_back({"multiple-correct-choices", q});
  }
  cases.push_back({"duplicate-choice-text", make_mcq("Stem?", {"Atenolol", "atenolol.", "C"}, 0)});
  cases.push_back({"empty-choice-text", make_mcq("Stem?", {"A", " ", "C"}, 0)});
  {
    auto q = base;
    q.choices[2].index = 5;
    cases.push_back({"non-contiguous-choice-index", q});
  }
  {
    auto q = base;
    q.parts.push_back({0, "x", "", 1});
    cases.push_back({"parts-on-mcq", q});
  }
  {
    auto q = make_saq("Describe.", {{"a", 1}});
    q.choices.push_back({0, "x", true});
    cases.push_back({"choices-on-saq", q});
  }
  cases.push_back({"bad-marks", make_saq("Describe.", {{"part", 0}})});
  cases.push_back({"empty-part-prompt", make_saq("Describe.", {{"", 2}})});
  {
    auto q = make_saq("Describe.", {{"a", 1}, {"b", 1}});
    q.parts[1].index = 3;
    cases.push_back({"non-contiguous-part-index", q});
  }
  {
    auto q = base;
    q.fingerprint = std::string(64, '0');
    cases.push_back({"fingerprint-mismatch", q});
  }
  for (const auto& c : cases) {
    const auto r = validate_question(c.q);
    EXPECT_FALSE(r.ok()) << c.code;
    EXPECT_TRUE(r.has(c.code)) << c.code;
  }
}

TEST(ValidateQuestion, ChoiceBoundsInclusive) {
  EXPECT_TRUE(validate_question(make_mcq("Stem?", {"A", "B"}, 1)).ok());
  EXPECT_TRUE(validate_question(make_mcq("Stem?", {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"}, 9)).ok());
}

TEST(Enums, RoundTrip) {
  for (auto k : {QuestionKind::kMcq, QuestionKind::kSaq}) EXPECT_EQ(parse_question_kind(to_string(k)), k);
  for (auto s : {QuestionState::kDraft, QuestionState::kPublished, QuestionState::kFlagged, QuestionState::kRetired})
    EXPECT_EQ(parse_question_state(to_string(s)), s);
  for (auto g : {Generator::kRuleBased, Generator::kModel, Generator::kManual}) EXPECT_EQ(parse_generator(to_string(g)), g);
  for (auto r : {Role::kStudent, Role::kFaculty, Role::kAdmin}) EXPECT_EQ(parse_role(to_string(r)), r);
  EXPECT_FALSE(parse_role("root"));
}
