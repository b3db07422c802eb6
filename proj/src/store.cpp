#include "examforge/store.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

namespace {

constexpr std::string_view kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta (
  key TEXT PRIMARY KEY,
  value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS roles (name TEXT PRIMARY KEY);
INSERT OR IGNORE INTO roles (name) VALUES ('student'), ('faculty'), ('admin');
CREATE TABLE IF NOT EXISTS institutions (
  id TEXT PRIMARY KEY,
  name TEXT NOT NULL CHECK (length(name) > 0),
  country_code TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS users (
  id TEXT PRIMARY KEY,
  role TEXT NOT NULL REFERENCES roles(name),
  institution_id TEXT REFERENCES institutions(id),
  display_name TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS courses (
  id TEXT PRIMARY KEY,
  code TEXT NOT NULL CHECK (length(code) > 0),
  title TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS institution_courses (
  institution_id TEXT NOT NULL REFERENCES institutions(id),
  course_id TEXT NOT NULL REFERENCES courses(id),
  PRIMARY KEY (institution_id, course_id)
);
CREATE TABLE IF NOT EXISTS concepts (
  id TEXT PRIMARY KEY,
  name TEXT NOT NULL CHECK (length(name) > 0),
  name_key TEXT NOT NULL UNIQUE,
  parent_id TEXT REFERENCES concepts(id)
);
CREATE TABLE IF NOT EXISTS documents (
  id TEXT PRIMARY KEY,
  filename TEXT NOT NULL,
  content_type TEXT NOT NULL,
  size INTEGER NOT NULL,
  sha256 TEXT NOT NULL,
  content BLOB NOT NULL,
  created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit_artifacts (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  document_id TEXT NOT NULL REFERENCES documents(id),
  job_id TEXT NOT NULL,
  kind TEXT NOT NULL,
  content TEXT NOT NULL,
  created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS audit_by_job ON audit_artifacts (job_id, kind, seq);
CREATE TABLE IF NOT EXISTS past_papers (
  id TEXT PRIMARY KEY,
  course_id TEXT NOT NULL REFERENCES courses(id),
  year INTEGER NOT NULL,
  title TEXT NOT NULL,
  source_document_id TEXT REFERENCES documents(id),
  UNIQUE (course_id, title, year)
);
CREATE TABLE IF NOT EXISTS questions (
  id TEXT PRIMARY KEY,
  kind TEXT NOT NULL CHECK (kind IN ('mcq', 'saq')),
  stem TEXT NOT NULL,
  explanation TEXT,
  past_paper_id TEXT NOT NULL REFERENCES past_papers(id),
  course_id TEXT NOT NULL REFERENCES courses(id),
  state TEXT NOT NULL CHECK (state IN ('draft', 'published', 'flagged', 'retired')),
  source_document_id TEXT REFERENCES documents(id),
  generator TEXT NOT NULL,
  confidence REAL NOT NULL CHECK (confidence >= 0 AND confidence <= 1),
  created_at TEXT NOT NULL,
  fingerprint TEXT NOT NULL,
  UNIQUE (course_id, fingerprint)
);
CREATE INDEX IF NOT EXISTS questions_by_paper ON questions (past_paper_id, created_at, id);
CREATE INDEX IF NOT EXISTS questions_by_course ON questions (course_id, created_at, id);
CREATE TABLE IF NOT EXISTS question_concepts (
  question_id TEXT NOT NULL REFERENCES questions(id),
  concept_id TEXT NOT NULL REFERENCES concepts(id),
  PRIMARY KEY (question_id, concept_id)
);
CREATE TABLE IF NOT EXISTS mcq_choices (
  question_id TEXT NOT NULL REFERENCES questions(id),
  idx INTEGER NOT NULL,
  text TEXT NOT NULL,
  is_correct INTEGER NOT NULL,
  PRIMARY KEY (question_id, idx)
);
CREATE TABLE IF NOT EXISTS saq_parts (
  question_id TEXT NOT NULL REFERENCES questions(id),
  idx INTEGER NOT NULL,
  prompt TEXT NOT NULL,
  expected_answer TEXT NOT NULL DEFAULT '',
  marks INTEGER NOT NULL CHECK (marks >= 1),
  PRIMARY KEY (question_id, idx)
);
CREATE TABLE IF NOT EXISTS user_mcq_responses (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  user_id TEXT NOT NULL REFERENCES users(id),
  question_id TEXT NOT NULL REFERENCES questions(id),
  chosen_index INTEGER NOT NULL,
  correct INTEGER NOT NULL,
  at TEXT NOT NULL,
  session_id TEXT,
  op_id TEXT
);
CREATE TABLE IF NOT EXISTS user_saq_responses (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  user_id TEXT NOT NULL REFERENCES users(id),
  question_id TEXT NOT NULL REFERENCES questions(id),
  answers TEXT NOT NULL,
  self_correct INTEGER NOT NULL,
  at TEXT NOT NULL,
  session_id TEXT,
  op_id TEXT
);
CREATE TABLE IF NOT EXISTS user_study_sessions (
  id TEXT PRIMARY KEY,
  user_id TEXT NOT NULL REFERENCES users(id),
  started_at TEXT NOT NULL,
  last_event_at TEXT NOT NULL,
  event_count INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS sessions_by_user ON user_study_sessions (user_id, last_event_at);
CREATE TABLE IF NOT EXISTS user_study_times (
  user_id TEXT NOT NULL REFERENCES users(id),
  day TEXT NOT NULL,
  seconds INTEGER NOT NULL,
  PRIMARY KEY (user_id, day)
);
CREATE TABLE IF NOT EXISTS analytics (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  user_id TEXT NOT NULL,
  event TEXT NOT NULL,
  question_id TEXT,
  at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS analytics_by_time ON analytics (at);
CREATE TABLE IF NOT EXISTS question_feedbacks (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  user_id TEXT NOT NULL REFERENCES users(id),
  question_id TEXT NOT NULL REFERENCES questions(id),
  rating INTEGER NOT NULL CHECK (rating BETWEEN 1 AND 5),
  comment TEXT,
  at TEXT NOT NULL,
  client_at TEXT,
  UNIQUE (user_id, question_id)
);
CREATE TABLE IF NOT EXISTS flags (
  id TEXT PRIMARY KEY,
  question_id TEXT NOT NULL REFERENCES questions(id),
  raised_by TEXT NOT NULL REFERENCES users(id),
  reason TEXT NOT NULL,
  state TEXT NOT NULL CHECK (state IN ('open', 'resolved-republished', 'resolved-retired')),
  at TEXT NOT NULL,
  resolved_at TEXT,
  resolved_by TEXT REFERENCES users(id)
);
CREATE TABLE IF NOT EXISTS user_concept_progress (
  user_id TEXT NOT NULL REFERENCES users(id),
  concept_id TEXT NOT NULL REFERENCES concepts(id),
  attempted INTEGER NOT NULL,
  correct INTEGER NOT NULL CHECK (correct >= 0 AND correct <= attempted),
  PRIMARY KEY (user_id, concept_id)
);
CREATE TABLE IF NOT EXISTS jobs (
  id TEXT PRIMARY KEY,
  document_id TEXT NOT NULL REFERENCES documents(id),
  course_id TEXT NOT NULL REFERENCES courses(id),
  paper_title TEXT NOT NULL,
  paper_year INTEGER NOT NULL,
  state TEXT NOT NULL,
  attempts TEXT NOT NULL,
  timestamps TEXT NOT NULL,
  failure TEXT,
  result TEXT
);
CREATE TABLE IF NOT EXISTS job_events (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  job_id TEXT NOT NULL REFERENCES jobs(id),
  stage TEXT NOT NULL,
  percent INTEGER NOT NULL,
  log TEXT NOT NULL,
  at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sync_ops (
  op_id TEXT PRIMARY KEY,
  user_id TEXT NOT NULL,
  kind TEXT NOT NULL,
  client_clock TEXT,
  server_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS content_changes (
  seq INTEGER PRIMARY KEY AUTOINCREMENT,
  question_id TEXT NOT NULL,
  change TEXT NOT NULL,
  at TEXT NOT NULL
);
INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', '1'), ('min_change_seq', '0');
)sql";

std::string lower_key(const std::string& name) { return normalize_text(name); }

json question_to_interchange(const Question& q, const std::vector<std::string>& concept_names) {
  json j;
  j["kind"] = to_string(q.kind);
  j["stem"] = q.stem;
  if (q.explanation) j["explanation"] = *q.explanation;
  j["concepts"] = concept_names;
  j["generator"] = to_string(q.provenance.generator);
  j["confidence"] = q.provenance.confidence;
  j["fingerprint"] = q.fingerprint;
  if (q.kind == QuestionKind::kMcq) {
    json choices = json::array();
    for (const auto& c : q.choices) choices.push_back({{"text", c.text}, {"correct", c.is_correct}});
    j["choices"] = std::move(choices);
  } else {
    json parts = json::array();
    for (const auto& p : q.parts)
      parts.push_back({{"prompt", p.prompt}, {"expected_answer", p.expected_answer}, {"marks", p.marks}});
    j["parts"] = std::move(parts);
  }
  return j;
}

}  // namespace

void bootstrap_schema(Database& db) {
  auto lock = db.lock();
  db.exec(kSchema);
}

ContentStore::ContentStore(std::shared_ptr<Database> db, Clock clock) : db_(std::move(db)), clock_(std::move(clock)) {
  bootstrap_schema(*db_);
}

// --- catalog ---------------------------------------------------------------

void ContentStore::put_institution(const Institution& inst) {
  if (inst.name.empty()) throw Error("invalid-institution", "institution name must be non-empty");
  auto lock = db_->lock();
  db_->prepare(
         "INSERT INTO institutions (id, name, country_code) VALUES (?, ?, ?) "
         "ON CONFLICT(id) DO UPDATE SET name = excluded.name, country_code = excluded.country_code")
      .bind_all(inst.id, inst.name, inst.country_code)
      .run();
}

std::optional<Institution> ContentStore::institution(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, name, country_code FROM institutions WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return Institution{st.text(0), st.text(1), st.text(2)};
}

void ContentStore::put_course(const Course& course) {
  if (course.code.empty()) throw Error("invalid-course", "course code must be non-empty");
  Transaction tx(*db_);
  db_->prepare(
         "INSERT INTO courses (id, code, title) VALUES (?, ?, ?) "
         "ON CONFLICT(id) DO UPDATE SET code = excluded.code, title = excluded.title")
      .bind_all(course.id, course.code, course.title)
      .run();
  for (const auto& inst : course.institution_ids)
    db_->prepare("INSERT OR IGNORE INTO institution_courses (institution_id, course_id) VALUES (?, ?)")
        .bind_all(inst, course.id)
        .run();
  tx.commit();
}

std::optional<Course> ContentStore::course(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, code, title FROM courses WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  Course c{st.text(0), st.text(1), st.text(2), {}};
  auto links = db_->prepare("SELECT institution_id FROM institution_courses WHERE course_id = ?");
  links.bind(1, id);
  while (links.step()) c.institution_ids.insert(links.text(0));
  return c;
}

std::optional<Course> ContentStore::course_by_code(const std::string& code) {
  std::string id;
  {
    auto lock = db_->lock();
    auto st = db_->prepare("SELECT id FROM courses WHERE code = ? ORDER BY id LIMIT 1");
    st.bind(1, code);
    if (!st.step()) return std::nullopt;
    id = st.text(0);
  }
  return course(id);
}

std::vector<Course> ContentStore::courses(const std::optional<std::string>& institution_id) {
  std::vector<std::string> ids;
  {
    auto lock = db_->lock();
    auto st = institution_id
                  ? db_->prepare(
                        "SELECT c.id FROM courses c JOIN institution_courses ic ON ic.course_id = c.id "
                        "WHERE ic.institution_id = ? ORDER BY c.code, c.id")
                  : db_->prepare("SELECT id FROM courses ORDER BY code, id");
    if (institution_id) st.bind(1, *institution_id);
    while (st.step()) ids.push_back(st.text(0));
  }
  std::vector<Course> out;
  for (const auto& id : ids)
    if (auto c = course(id)) out.push_back(std::move(*c));
  return out;
}

void ContentStore::put_concept(const Concept& c) {
  if (c.name.empty()) throw Error("invalid-concept", "concept name must be non-empty");
  Transaction tx(*db_);
  // Walk up from the proposed parent; reaching c.id means a cycle.
  std::optional<std::string> cursor = c.parent_id;
  int guard = 0;
  while (cursor) {
    if (*cursor == c.id) throw Error("concept-cycle", "concept parent chain would form a cycle");
    auto st = db_->prepare("SELECT parent_id FROM concepts WHERE id = ?");
    st.bind(1, *cursor);
    if (!st.step()) throw Error("integrity-violation", "unknown parent concept " + *cursor);
    cursor = st.opt_text(0);
    if (++guard > 100000) throw Error("concept-cycle", "concept hierarchy too deep");
  }
  db_->prepare(
         "INSERT INTO concepts (id, name, name_key, parent_id) VALUES (?, ?, ?, ?) "
         "ON CONFLICT(id) DO UPDATE SET name = excluded.name, name_key = excluded.name_key, "
         "parent_id = excluded.parent_id")
      .bind_all(c.id, c.name, lower_key(c.name), c.parent_id)
      .run();
  tx.commit();
}

std::optional<Concept> ContentStore::concept_by_id(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, name, parent_id FROM concepts WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return Concept{st.text(0), st.text(1), st.opt_text(2)};
}

std::optional<Concept> ContentStore::concept_by_name(const std::string& name) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, name, parent_id FROM concepts WHERE name_key = ?");
  st.bind(1, lower_key(name));
  if (!st.step()) return std::nullopt;
  return Concept{st.text(0), st.text(1), st.opt_text(2)};
}

Concept ContentStore::ensure_concept(const std::string& name) {
  if (lower_key(name).empty()) throw Error("invalid-concept", "concept name must be non-empty");
  Transaction tx(*db_);
  if (auto existing = concept_by_name(name)) {
    tx.commit();
    return *existing;
  }
  Concept c{new_id("cpt"), name, std::nullopt};
  db_->prepare("INSERT INTO concepts (id, name, name_key, parent_id) VALUES (?, ?, ?, NULL)")
      .bind_all(c.id, c.name, lower_key(c.name))
      .run();
  tx.commit();
  return c;
}

Concept ContentStore::default_concept(const std::string& course_id) {
  auto c = course(course_id);
  if (!c) throw Error("unknown-course", "unknown course " + course_id);
  return ensure_concept(c->title.empty() ? c->code : c->title);
}

void ContentStore::put_user(const UserAccount& user) {
  auto lock = db_->lock();
  db_->prepare(
         "INSERT INTO users (id, role, institution_id, display_name) VALUES (?, ?, ?, ?) "
         "ON CONFLICT(id) DO UPDATE SET role = excluded.role, institution_id = excluded.institution_id, "
         "display_name = excluded.display_name")
      .bind_all(user.id, std::string(to_string(user.role)),
                user.institution_id.empty() ? std::optional<std::string>{} : std::optional(user.institution_id),
                user.display_name)
      .run();
}

std::optional<UserAccount> ContentStore::user(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, role, institution_id, display_name FROM users WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return UserAccount{st.text(0), parse_role(st.text(1)).value_or(Role::kStudent), st.opt_text(2).value_or(""),
                     st.text(3)};
}

PastPaper ContentStore::upsert_past_paper(const std::string& course_id, const PaperMeta& meta,
                                          const std::optional<std::string>& source_document_id) {
  const int max_year = static_cast<int>(std::chrono::year_month_day{utc_day(now())}.year()) + 1;
  if (meta.year < 1900 || meta.year > max_year)
    throw Error("invalid-paper", "paper year " + std::to_string(meta.year) + " outside [1900, " +
                                     std::to_string(max_year) + "]");
  if (meta.title.empty()) throw Error("invalid-paper", "paper title must be non-empty");
  Transaction tx(*db_);
  auto find = db_->prepare(
      "SELECT id, source_document_id FROM past_papers WHERE course_id = ? AND title = ? AND year = ?");
  find.bind_all(course_id, meta.title, meta.year);
  if (find.step()) {
    PastPaper p{find.text(0), course_id, meta.year, meta.title, find.opt_text(1)};
    if (!p.source_document_id && source_document_id) {
      db_->prepare("UPDATE past_papers SET source_document_id = ? WHERE id = ?")
          .bind_all(*source_document_id, p.id)
          .run();
      p.source_document_id = source_document_id;
    }
    tx.commit();
    return p;
  }
  PastPaper p{new_id("pp"), course_id, meta.year, meta.title, source_document_id};
  db_->prepare("INSERT INTO past_papers (id, course_id, year, title, source_document_id) VALUES (?, ?, ?, ?, ?)")
      .bind_all(p.id, p.course_id, p.year, p.title, p.source_document_id)
      .run();
  tx.commit();
  return p;
}

std::optional<PastPaper> ContentStore::past_paper(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, course_id, year, title, source_document_id FROM past_papers WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return PastPaper{st.text(0), st.text(1), static_cast<int>(st.integer(2)), st.text(3), st.opt_text(4)};
}

// --- documents & audit -------------------------------------------------------

DocumentRecord ContentStore::put_document(const std::string& filename, const std::string& content_type,
                                          std::span<const std::uint8_t> content) {
  DocumentRecord d{new_id("doc"), filename, content_type, content.size(), sha256_hex(content), now()};
  auto lock = db_->lock();
  auto st = db_->prepare(
      "INSERT INTO documents (id, filename, content_type, size, sha256, content, created_at) "
      "VALUES (?, ?, ?, ?, ?, ?, ?)");
  st.bind_all(d.id, d.filename, d.content_type, static_cast<std::int64_t>(d.size), d.sha256);
  st.bind_blob(6, content);
  st.bind(7, format_rfc3339(d.created_at));
  st.run();
  return d;
}

std::optional<DocumentRecord> ContentStore::document(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT id, filename, content_type, size, sha256, created_at FROM documents WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return DocumentRecord{st.text(0), st.text(1), st.text(2), static_cast<std::uint64_t>(st.integer(3)), st.text(4),
                        parse_rfc3339(st.text(5)).value_or(Timestamp{})};
}

Bytes ContentStore::document_bytes(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT content FROM documents WHERE id = ?");
  st.bind(1, id);
  if (!st.step()) throw Error("unknown-document", "unknown document " + id);
  return st.blob(0);
}

void ContentStore::put_artifact(const std::string& document_id, const std::string& job_id, const std::string& kind,
                                const std::string& content) {
  auto lock = db_->lock();
  db_->prepare(
         "INSERT INTO audit_artifacts (document_id, job_id, kind, content, created_at) VALUES (?, ?, ?, ?, ?)")
      .bind_all(document_id, job_id, kind, content, format_rfc3339(now()))
      .run();
}

std::optional<std::string> ContentStore::latest_artifact(const std::string& job_id, const std::string& kind) {
  auto lock = db_->lock();
  auto st = db_->prepare(
      "SELECT content FROM audit_artifacts WHERE job_id = ? AND kind = ? ORDER BY seq DESC LIMIT 1");
  st.bind_all(job_id, kind);
  if (!st.step()) return std::nullopt;
  return st.text(0);
}

std::vector<std::string> ContentStore::artifacts(const std::string& job_id, const std::string& kind) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT content FROM audit_artifacts WHERE job_id = ? AND kind = ? ORDER BY seq");
  st.bind_all(job_id, kind);
  std::vector<std::string> out;
  while (st.step()) out.push_back(st.text(0));
  return out;
}

// --- questions ---------------------------------------------------------------

void ContentStore::record_change(const std::string& question_id, std::string_view change) {
  db_->prepare("INSERT INTO content_changes (question_id, change, at) VALUES (?, ?, ?)")
      .bind_all(question_id, change, format_rfc3339(now()))
      .run();
}

std::string ContentStore::insert_question_row(const Question& q, const std::string& paper_id, QuestionState state,
                                              Timestamp created_at) {
  const std::string id = new_id("q");
  const auto& prov = q.provenance;
  db_->prepare(
         "INSERT INTO questions (id, kind, stem, explanation, past_paper_id, course_id, state, source_document_id, "
         "generator, confidence, created_at, fingerprint) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)")
      .bind_all(id, to_string(q.kind), q.stem, q.explanation, paper_id, q.course_id, to_string(state),
                prov.source_document_id.empty() ? std::optional<std::string>{}
                                                : std::optional(prov.source_document_id),
                to_string(prov.generator), prov.confidence, format_rfc3339(created_at), q.fingerprint)
      .run();
  for (const auto& cid : q.concept_ids)
    db_->prepare("INSERT OR IGNORE INTO question_concepts (question_id, concept_id) VALUES (?, ?)")
        .bind_all(id, cid)
        .run();
  for (const auto& c : q.choices)
    db_->prepare("INSERT INTO mcq_choices (question_id, idx, text, is_correct) VALUES (?, ?, ?, ?)")
        .bind_all(id, c.index, c.text, c.is_correct)
        .run();
  for (const auto& p : q.parts)
    db_->prepare("INSERT INTO saq_parts (question_id, idx, prompt, expected_answer, marks) VALUES (?, ?, ?, ?, ?)")
        .bind_all(id, p.index, p.prompt, p.expected_answer, p.marks)
        .run();
  record_change(id, "insert");
  return id;
}

InsertedBank ContentStore::insert_question_bank(const std::vector<Question>& accepted, const std::string& course_id,
                                                const PaperMeta& paper,
                                                const std::optional<std::string>& document_id,
                                                QuestionState initial_state) {
  Transaction tx(*db_);
  if (!course(course_id)) throw Error("integrity-violation", "unknown course " + course_id);
  for (const auto& q : accepted) {
    if (q.course_id != course_id) throw Error("integrity-violation", "question belongs to another course");
    for (const auto& cid : q.concept_ids)
      if (!concept_by_id(cid)) throw Error("integrity-violation", "unknown concept " + cid);
    if (auto report = validate_question(q); !report.ok())
      throw Error("integrity-violation", "question fails validation: " + report.violations.front());
  }
  InsertedBank out;
  out.past_paper_id = upsert_past_paper(course_id, paper, document_id).id;
  const Timestamp created = now();
  for (const auto& q : accepted) {
    const std::string fp = q.fingerprint.empty() ? question_fingerprint(q) : q.fingerprint;
    auto existing = db_->prepare("SELECT id FROM questions WHERE course_id = ? AND fingerprint = ?");
    existing.bind_all(course_id, fp);
    if (existing.step()) {
      out.question_ids.push_back(existing.text(0));
      continue;
    }
    Question copy = q;
    copy.fingerprint = fp;
    out.question_ids.push_back(insert_question_row(copy, out.past_paper_id, initial_state, created));
    ++out.newly_inserted;
  }
  tx.commit();
  return out;
}

Question ContentStore::load_question(Statement& row) {
  Question q;
  q.id = row.text(0);
  q.kind = parse_question_kind(row.text(1)).value_or(QuestionKind::kMcq);
  q.stem = row.text(2);
  q.explanation = row.opt_text(3);
  q.past_paper_id = row.text(4);
  q.course_id = row.text(5);
  q.state = parse_question_state(row.text(6)).value_or(QuestionState::kDraft);
  q.provenance.source_document_id = row.opt_text(7).value_or("");
  q.provenance.generator = parse_generator(row.text(8)).value_or(Generator::kManual);
  q.provenance.confidence = row.real(9);
  q.provenance.created_at = parse_rfc3339(row.text(10)).value_or(Timestamp{});
  q.fingerprint = row.text(11);
  return q;
}

void ContentStore::load_children(Question& q) {
  auto concepts = db_->prepare("SELECT concept_id FROM question_concepts WHERE question_id = ? ORDER BY concept_id");
  concepts.bind(1, q.id);
  while (concepts.step()) q.concept_ids.push_back(concepts.text(0));
  auto choices = db_->prepare("SELECT idx, text, is_correct FROM mcq_choices WHERE question_id = ? ORDER BY idx");
  choices.bind(1, q.id);
  while (choices.step())
    q.choices.push_back({static_cast<int>(choices.integer(0)), choices.text(1), choices.integer(2) != 0});
  auto parts = db_->prepare(
      "SELECT idx, prompt, expected_answer, marks FROM saq_parts WHERE question_id = ? ORDER BY idx");
  parts.bind(1, q.id);
  while (parts.step())
    q.parts.push_back({static_cast<int>(parts.integer(0)), parts.text(1), parts.text(2),
                       static_cast<int>(parts.integer(3))});
}

namespace {
constexpr std::string_view kQuestionColumns =
    "q.id, q.kind, q.stem, q.explanation, q.past_paper_id, q.course_id, q.state, q.source_document_id, "
    "q.generator, q.confidence, q.created_at, q.fingerprint";
}

std::optional<Question> ContentStore::question(const std::string& id) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT " + std::string(kQuestionColumns) + " FROM questions q WHERE q.id = ?");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  Question q = load_question(st);
  load_children(q);
  return q;
}

QuestionPage ContentStore::query_questions(const QuestionFilter& filter, Role viewer) {
  if (filter.page_size > kMaxPageSize)
    throw Error("page-too-large", "page_size must be at most " + std::to_string(kMaxPageSize));
  if (filter.page_size < 1 || filter.page < 1) throw Error("bad-request", "page and page_size must be positive");

  std::optional<QuestionState> state = filter.state;
  if (viewer == Role::kStudent) {
    if (state && *state != QuestionState::kPublished) return QuestionPage{{}, 0, filter.page, filter.page_size};
    state = QuestionState::kPublished;
  }

  std::string where = " WHERE 1 = 1";
  std::vector<std::string> args;
  if (filter.institution_id) {
    where += " AND q.course_id IN (SELECT course_id FROM institution_courses WHERE institution_id = ?)";
    args.push_back(*filter.institution_id);
  }
  if (filter.course_id) {
    where += " AND q.course_id = ?";
    args.push_back(*filter.course_id);
  }
  if (filter.concept_id) {
    where += " AND q.id IN (SELECT question_id FROM question_concepts WHERE concept_id = ?)";
    args.push_back(*filter.concept_id);
  }
  if (filter.past_paper_id) {
    where += " AND q.past_paper_id = ?";
    args.push_back(*filter.past_paper_id);
  }
  if (state) {
    where += " AND q.state = ?";
    args.emplace_back(to_string(*state));
  }

  auto lock = db_->lock();
  QuestionPage page{{}, 0, filter.page, filter.page_size};
  {
    auto count = db_->prepare("SELECT COUNT(*) FROM questions q" + where);
    for (size_t i = 0; i < args.size(); ++i) count.bind(static_cast<int>(i + 1), args[i]);
    count.step();
    page.total = count.integer(0);
  }
  auto st = db_->prepare("SELECT " + std::string(kQuestionColumns) + " FROM questions q" + where +
                         " ORDER BY q.created_at, q.id LIMIT ? OFFSET ?");
  int i = 1;
  for (const auto& a : args) st.bind(i++, a);
  st.bind(i++, filter.page_size);
  st.bind(i, static_cast<std::int64_t>(filter.page - 1) * filter.page_size);
  while (st.step()) page.items.push_back(load_question(st));
  for (auto& q : page.items) load_children(q);
  return page;
}

std::set<std::string> ContentStore::course_fingerprints(const std::string& course_id,
                                                        const std::optional<std::string>& exclude_document_id) {
  auto lock = db_->lock();
  auto st = exclude_document_id
                ? db_->prepare(
                      "SELECT fingerprint FROM questions WHERE course_id = ? AND "
                      "(source_document_id IS NULL OR source_document_id <> ?)")
                : db_->prepare("SELECT fingerprint FROM questions WHERE course_id = ?");
  st.bind(1, course_id);
  if (exclude_document_id) st.bind(2, *exclude_document_id);
  std::set<std::string> out;
  while (st.step()) out.insert(st.text(0));
  return out;
}

void ContentStore::set_question_state(const std::string& question_id, QuestionState state) {
  Transaction tx(*db_);
  db_->prepare("UPDATE questions SET state = ? WHERE id = ?").bind_all(to_string(state), question_id).run();
  if (db_->changes() == 0) throw Error("unknown-question", "unknown question " + question_id);
  record_change(question_id, to_string(state));
  tx.commit();
}

std::int64_t ContentStore::count_rows(std::string_view table) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT COUNT(*) FROM " + std::string(table));
  st.step();
  return st.integer(0);
}

// --- interchange ---------------------------------------------------------------

std::string ContentStore::export_bank(const std::string& past_paper_id) {
  auto lock = db_->lock();
  auto paper = past_paper(past_paper_id);
  if (!paper) throw Error("unknown-paper", "unknown past paper " + past_paper_id);
  auto crs = course(paper->course_id);

  std::vector<std::string> ids;
  {
    auto st = db_->prepare("SELECT id FROM questions WHERE past_paper_id = ? AND state <> 'retired'");
    st.bind(1, past_paper_id);
    while (st.step()) ids.push_back(st.text(0));
  }
  std::vector<std::pair<std::string, json>> items;
  for (const auto& id : ids) {
    auto q = question(id);
    std::vector<std::string> names;
    for (const auto& cid : q->concept_ids)
      if (auto c = concept_by_id(cid)) names.push_back(c->name);
    std::sort(names.begin(), names.end());
    items.emplace_back(q->fingerprint, question_to_interchange(*q, names));
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  json doc;
  doc["bank_version"] = kBankVersion;
  doc["course"] = {{"code", crs ? crs->code : ""}, {"title", crs ? crs->title : ""}};
  doc["paper"] = {{"title", paper->title}, {"year", paper->year}};
  doc["questions"] = json::array();
  for (auto& [fp, item] : items) doc["questions"].push_back(std::move(item));
  // nlohmann's default object type is ordered by key, which gives sorted keys.
  return doc.dump(2) + "\n";
}

namespace {

struct InterchangeItem {
  Question question;
  std::vector<std::string> concept_names;
};

InterchangeItem parse_interchange_item(const json& j) {
  InterchangeItem item;
  Question& q = item.question;
  auto kind = parse_question_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error("bad-interchange", "unknown question kind");
  q.kind = *kind;
  q.stem = j.at("stem").get<std::string>();
  if (j.contains("explanation") && !j["explanation"].is_null()) q.explanation = j["explanation"].get<std::string>();
  item.concept_names = j.at("concepts").get<std::vector<std::string>>();
  q.provenance.generator = parse_generator(j.value("generator", std::string("manual"))).value_or(Generator::kManual);
  q.provenance.confidence = j.value("confidence", 1.0);
  q.fingerprint = j.at("fingerprint").get<std::string>();
  if (q.kind == QuestionKind::kMcq) {
    int idx = 0;
    for (const auto& c : j.at("choices"))
      q.choices.push_back({idx++, c.at("text").get<std::string>(), c.at("correct").get<bool>()});
  } else {
    int idx = 0;
    for (const auto& p : j.at("parts"))
      q.parts.push_back({idx++, p.at("prompt").get<std::string>(), p.value("expected_answer", std::string{}),
                         p.at("marks").get<int>()});
  }
  return item;
}

}  // namespace

ImportResult ContentStore::import_bank(std::string_view document, const std::string& course_id) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::exception& e) {
    throw Error("bad-interchange", std::string("interchange document does not parse: ") + e.what());
  }
  std::vector<InterchangeItem> items;
  PaperMeta meta;
  try {
    if (!doc.is_object() || doc.value("bank_version", 0) != kBankVersion)
      throw Error("bad-interchange", "unsupported or missing bank_version");
    meta.title = doc.at("paper").at("title").get<std::string>();
    meta.year = doc.at("paper").at("year").get<int>();
    for (const auto& j : doc.at("questions")) items.push_back(parse_interchange_item(j));
  } catch (const json::exception& e) {
    throw Error("bad-interchange", std::string("malformed interchange document: ") + e.what());
  }

  Transaction tx(*db_);
  if (!course(course_id)) throw Error("unknown-course", "unknown course " + course_id);
  for (auto& item : items) {
    item.question.course_id = course_id;
    for (const auto& name : item.concept_names) item.question.concept_ids.push_back(ensure_concept(name).id);
    if (item.question.concept_ids.empty()) item.question.concept_ids.push_back(default_concept(course_id).id);
    auto report = validate_question(item.question);
    if (!report.ok())
      throw Error("invalid-content", "interchange item fails validation: " + report.violations.front());
  }
  ImportResult result;
  try {
    result.past_paper_id = upsert_past_paper(course_id, meta, std::nullopt).id;
  } catch (const Error& e) {
    throw Error("invalid-content", e.what());
  }
  const Timestamp created = now();
  for (auto& item : items) {
    auto existing = db_->prepare("SELECT 1 FROM questions WHERE course_id = ? AND fingerprint = ?");
    existing.bind_all(course_id, item.question.fingerprint);
    if (existing.step()) {
      ++result.skipped;
      continue;
    }
    insert_question_row(item.question, result.past_paper_id, QuestionState::kPublished, created);
    ++result.inserted;
  }
  tx.commit();
  return result;
}

// --- change feed -------------------------------------------------------------

std::int64_t ContentStore::latest_change_seq() {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT COALESCE(MAX(seq), 0) FROM content_changes");
  st.step();
  return std::max(st.integer(0), min_change_seq());
}

std::int64_t ContentStore::min_change_seq() {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT value FROM meta WHERE key = 'min_change_seq'");
  if (!st.step()) return 0;
  return std::stoll(st.text(0));
}

std::vector<ContentChange> ContentStore::changes_after(std::int64_t seq) {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT seq, question_id FROM content_changes WHERE seq > ? ORDER BY seq");
  st.bind(1, seq);
  std::vector<ContentChange> out;
  while (st.step()) out.push_back({st.integer(0), st.text(1)});
  return out;
}

std::vector<Question> ContentStore::published_questions() {
  auto lock = db_->lock();
  auto st = db_->prepare("SELECT " + std::string(kQuestionColumns) +
                         " FROM questions q WHERE q.state = 'published' ORDER BY q.created_at, q.id");
  std::vector<Question> out;
  while (st.step()) out.push_back(load_question(st));
  for (auto& q : out) load_children(q);
  return out;
}

void ContentStore::compact_changes(Timestamp older_than) {
  Transaction tx(*db_);
  auto st = db_->prepare("SELECT COALESCE(MAX(seq), 0) FROM content_changes WHERE at < ?");
  st.bind(1, format_rfc3339(older_than));
  st.step();
  const auto cut = st.integer(0);
  if (cut > min_change_seq()) {
    db_->prepare("DELETE FROM content_changes WHERE seq <= ?").bind(1, cut).run();
    db_->prepare("UPDATE meta SET value = ? WHERE key = 'min_change_seq'").bind(1, std::to_string(cut)).run();
  }
  tx.commit();
}

// --- integrity ---------------------------------------------------------------

std::vector<std::string> ContentStore::check_integrity() {
  auto lock = db_->lock();
  std::vector<std::string> problems;
  auto scalar_check = [&](std::string_view sql, const std::string& label) {
    auto st = db_->prepare(sql);
    while (st.step()) problems.push_back(label + ": " + st.text(0));
  };
  scalar_check("SELECT id FROM questions WHERE past_paper_id NOT IN (SELECT id FROM past_papers)",
               "question with unresolved past paper");
  scalar_check("SELECT id FROM questions WHERE course_id NOT IN (SELECT id FROM courses)",
               "question with unresolved course");
  scalar_check("SELECT id FROM questions WHERE id NOT IN (SELECT question_id FROM question_concepts)",
               "question without concept");
  scalar_check("SELECT question_id FROM question_concepts WHERE concept_id NOT IN (SELECT id FROM concepts)",
               "question linked to unresolved concept");
  scalar_check(
      "SELECT q.id FROM questions q WHERE q.kind = 'mcq' AND "
      "(SELECT COUNT(*) FROM mcq_choices c WHERE c.question_id = q.id AND c.is_correct = 1) <> 1",
      "mcq without exactly one correct choice");
  scalar_check("SELECT course_id || '/' || fingerprint FROM questions GROUP BY course_id, fingerprint "
               "HAVING COUNT(*) > 1",
               "duplicate fingerprint");
  scalar_check("SELECT id FROM past_papers WHERE course_id NOT IN (SELECT id FROM courses)",
               "past paper with unresolved course");

  std::vector<std::string> ids;
  {
    auto st = db_->prepare("SELECT id FROM questions");
    while (st.step()) ids.push_back(st.text(0));
  }
  for (const auto& id : ids) {
    auto q = question(id);
    auto report = validate_question(*q);
    if (!report.ok()) problems.push_back("question " + id + " violates " + report.violations.front());
  }
  {
    auto st = db_->prepare("PRAGMA foreign_key_check");
    while (st.step()) problems.push_back("foreign key violation in " + st.text(0));
  }
  return problems;
}

}  // namespace examforge
