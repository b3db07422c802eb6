#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "examforge/crypto.hpp"
#include "examforge/model.hpp"
#include "examforge/sqlite.hpp"
#include "examforge/time.hpp"

namespace examforge {

inline constexpr int kMaxPageSize = 100;
inline constexpr int kBankVersion = 1;

struct PaperMeta {
  std::string title;
  int year = 0;
};

struct DocumentRecord {
  std::string id;
  std::string filename;
  std::string content_type;
  std::uint64_t size = 0;
  std::string sha256;
  Timestamp created_at{};
};

struct QuestionFilter {
  std::optional<std::string> institution_id;
  std::optional<std::string> course_id;
  std::optional<std::string> concept_id;
  std::optional<std::string> past_paper_id;
  std::optional<QuestionState> state;
  int page = 1;  // 1-based
  int page_size = 20;
};

struct QuestionPage {
  std::vector<Question> items;
  std::int64_t total = 0;
  int page = 1;
  int page_size = 0;
};

struct InsertedBank {
  std::string past_paper_id;
  std::vector<std::string> question_ids;
  int newly_inserted = 0;
};

struct ImportResult {
  std::string past_paper_id;
  int inserted = 0;
  int skipped = 0;
};

struct ContentChange {
  std::int64_t seq = 0;
  std::string question_id;
};

// Creates every table of the relational model if missing. Safe to call on
// every open.
void bootstrap_schema(Database& db);

// Relational persistence for catalog, documents, audit artifacts and
// question banks, plus the canonical .bank.json interchange format.
class ContentStore {
 public:
  explicit ContentStore(std::shared_ptr<Database> db, Clock clock = system_clock());

  [[nodiscard]] Database& db() { return *db_; }
  [[nodiscard]] const std::shared_ptr<Database>& shared_db() const { return db_; }
  [[nodiscard]] Timestamp now() const { return clock_(); }

  // Catalog.
  void put_institution(const Institution& inst);
  [[nodiscard]] std::optional<Institution> institution(const std::string& id);
  void put_course(const Course& course);
  [[nodiscard]] std::optional<Course> course(const std::string& id);
  [[nodiscard]] std::optional<Course> course_by_code(const std::string& code);
  [[nodiscard]] std::vector<Course> courses(const std::optional<std::string>& institution_id = std::nullopt);
  // Rejects parent links that would form a cycle ("concept-cycle").
  void put_concept(const Concept& c);
  [[nodiscard]] std::optional<Concept> concept_by_id(const std::string& id);
  [[nodiscard]] std::optional<Concept> concept_by_name(const std::string& name);
  // Case-insensitive match on name; creates the concept when absent.
  Concept ensure_concept(const std::string& name);
  // The concept questions fall back to when none is named: one per course,
  // named after the course title (or code).
  Concept default_concept(const std::string& course_id);
  void put_user(const UserAccount& user);
  [[nodiscard]] std::optional<UserAccount> user(const std::string& id);
  PastPaper upsert_past_paper(const std::string& course_id, const PaperMeta& meta,
                              const std::optional<std::string>& source_document_id);
  [[nodiscard]] std::optional<PastPaper> past_paper(const std::string& id);

  // Documents and the audit trail of intermediate outputs.
  DocumentRecord put_document(const std::string& filename, const std::string& content_type,
                              std::span<const std::uint8_t> content);
  [[nodiscard]] std::optional<DocumentRecord> document(const std::string& id);
  [[nodiscard]] Bytes document_bytes(const std::string& id);
  void put_artifact(const std::string& document_id, const std::string& job_id, const std::string& kind,
                    const std::string& content);
  [[nodiscard]] std::optional<std::string> latest_artifact(const std::string& job_id, const std::string& kind);
  [[nodiscard]] std::vector<std::string> artifacts(const std::string& job_id, const std::string& kind);

  // Question banks.
  InsertedBank insert_question_bank(const std::vector<Question>& accepted, const std::string& course_id,
                                    const PaperMeta& paper, const std::optional<std::string>& document_id,
                                    QuestionState initial_state = QuestionState::kPublished);
  [[nodiscard]] QuestionPage query_questions(const QuestionFilter& filter, Role viewer);
  [[nodiscard]] std::optional<Question> question(const std::string& id);
  [[nodiscard]] std::set<std::string> course_fingerprints(const std::string& course_id,
                                                          const std::optional<std::string>& exclude_document_id = {});
  void set_question_state(const std::string& question_id, QuestionState state);
  [[nodiscard]] std::int64_t count_rows(std::string_view table);

  // Interchange.
  [[nodiscard]] std::string export_bank(const std::string& past_paper_id);
  ImportResult import_bank(std::string_view document, const std::string& course_id);

  // Content change feed backing offline pull.
  [[nodiscard]] std::int64_t latest_change_seq();
  [[nodiscard]] std::int64_t min_change_seq();
  [[nodiscard]] std::vector<ContentChange> changes_after(std::int64_t seq);
  [[nodiscard]] std::vector<Question> published_questions();
  // Drops change records older than `older_than`; cursors before the
  // compaction point become invalid.
  void compact_changes(Timestamp older_than);

  // Full-table scan of referential and content invariants; empty when clean.
  [[nodiscard]] std::vector<std::string> check_integrity();

 private:
  void record_change(const std::string& question_id, std::string_view change);
  Question load_question(Statement& row);
  void load_children(Question& q);
  std::string insert_question_row(const Question& q, const std::string& paper_id, QuestionState state,
                                  Timestamp created_at);

  std::shared_ptr<Database> db_;
  Clock clock_;
};

}  // namespace examforge
