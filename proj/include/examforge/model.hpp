#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "examforge/time.hpp"

namespace examforge {

enum class QuestionKind { kMcq, kSaq };
enum class QuestionState { kDraft, kPublished, kFlagged, kRetired };
enum class Generator { kRuleBased, kModel, kManual };
enum class Role { kStudent, kFaculty, kAdmin };

std::string_view to_string(QuestionKind k);
std::string_view to_string(QuestionState s);
std::string_view to_string(Generator g);
std::string_view to_string(Role r);
std::optional<QuestionKind> parse_question_kind(std::string_view s);
std::optional<QuestionState> parse_question_state(std::string_view s);
std::optional<Generator> parse_generator(std::string_view s);
std::optional<Role> parse_role(std::string_view s);

struct Institution {
  std::string id;
  std::string name;
  std::string country_code;
};

struct Course {
  std::string id;
  std::string code;
  std::string title;
  std::set<std::string> institution_ids;
};

struct Concept {
  std::string id;
  std::string name;
  std::optional<std::string> parent_id;
};

struct PastPaper {
  std::string id;
  std::string course_id;
  int year = 0;
  std::string title;
  std::optional<std::string> source_document_id;
};

struct UserAccount {
  std::string id;
  Role role = Role::kStudent;
  std::string institution_id;
  std::string display_name;
};

struct Provenance {
  std::string source_document_id;
  Generator generator = Generator::kManual;
  double confidence = 1.0;
  Timestamp created_at{};
};

struct McqChoice {
  int index = 0;
  std::string text;
  bool is_correct = false;
};

struct SaqPart {
  int index = 0;
  std::string prompt;
  std::string expected_answer;
  int marks = 1;
};

// A question together with its children (choices for MCQ, parts for SAQ).
struct Question {
  std::string id;
  QuestionKind kind = QuestionKind::kMcq;
  std::string stem;
  std::optional<std::string> explanation;
  std::string past_paper_id;
  std::string course_id;
  std::vector<std::string> concept_ids;
  QuestionState state = QuestionState::kDraft;
  Provenance provenance;
  std::string fingerprint;
  std::vector<McqChoice> choices;
  std::vector<SaqPart> parts;

  [[nodiscard]] std::optional<int> correct_index() const;
};

inline constexpr int kMinChoices = 2;
inline constexpr int kMaxChoices = 10;

// Lowercased, NFC-composed, whitespace collapsed, edge whitespace and
// punctuation stripped. Idempotent.
std::string normalize_text(std::string_view s);

// Hex SHA-256 over normalized stem followed by the sorted normalized
// choice texts (MCQ) or part prompts (SAQ). Ids, timestamps, provenance and
// lifecycle state never contribute.
std::string question_fingerprint(const Question& q);

struct ValidationReport {
  std::vector<std::string> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] bool has(std::string_view code) const;
};

// Content invariants only. Whether past paper, course and concept ids
// resolve is a store-level check (see ContentStore::check_integrity).
ValidationReport validate_question(const Question& q);

}  // namespace examforge
