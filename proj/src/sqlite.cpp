#include "examforge/sqlite.hpp"

#include <sqlite3.h>

#include "examforge/error.hpp"

namespace examforge {

Statement::Statement(Database& db, std::string_view sql) : db_(&db), stmt_(nullptr) {
  const int rc = sqlite3_prepare_v2(db.handle(), sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr);
  if (rc != SQLITE_OK) db.fail(rc, sql);
}

Statement::~Statement() {
  if (stmt_ != nullptr) sqlite3_finalize(stmt_);
}

Statement::Statement(Statement&& other) noexcept : db_(other.db_), stmt_(other.stmt_) { other.stmt_ = nullptr; }

Statement& Statement::bind(int idx, std::string_view v) {
  sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
  return *this;
}

Statement& Statement::bind(int idx, std::int64_t v) {
  sqlite3_bind_int64(stmt_, idx, v);
  return *this;
}

Statement& Statement::bind(int idx, double v) {
  sqlite3_bind_double(stmt_, idx, v);
  return *this;
}

Statement& Statement::bind(int idx, std::nullptr_t) {
  sqlite3_bind_null(stmt_, idx);
  return *this;
}

Statement& Statement::bind(int idx, const std::optional<std::string>& v) {
  return v ? bind(idx, std::string_view(*v)) : bind(idx, nullptr);
}

Statement& Statement::bind_blob(int idx, std::span<const std::uint8_t> v) {
  sqlite3_bind_blob64(stmt_, idx, v.data(), v.size(), SQLITE_TRANSIENT);
  return *this;
}

bool Statement::step() {
  const int rc = sqlite3_step(stmt_);
  if (rc == SQLITE_ROW) return true;
  if (rc == SQLITE_DONE) return false;
  db_->fail(rc, sqlite3_sql(stmt_));
}

void Statement::run() {
  while (step()) {
  }
}

void Statement::reset() {
  sqlite3_reset(stmt_);
  sqlite3_clear_bindings(stmt_);
}

bool Statement::is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

std::string Statement::text(int col) const {
  const auto* p = sqlite3_column_text(stmt_, col);
  const int n = sqlite3_column_bytes(stmt_, col);
  return p == nullptr ? std::string{} : std::string(reinterpret_cast<const char*>(p), static_cast<size_t>(n));
}

std::optional<std::string> Statement::opt_text(int col) const {
  if (is_null(col)) return std::nullopt;
  return text(col);
}

std::int64_t Statement::integer(int col) const { return sqlite3_column_int64(stmt_, col); }

double Statement::real(int col) const { return sqlite3_column_double(stmt_, col); }

std::vector<std::uint8_t> Statement::blob(int col) const {
  const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
  const int n = sqlite3_column_bytes(stmt_, col);
  return p == nullptr ? std::vector<std::uint8_t>{} : std::vector<std::uint8_t>(p, p + n);
}

Database::Database(std::string path) : path_(std::move(path)) {}

std::shared_ptr<Database> Database::open(const std::string& path) {
  std::shared_ptr<Database> db(new Database(path));
  const int rc = sqlite3_open_v2(path.c_str(), &db->db_,
                                 SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db->db_ ? sqlite3_errmsg(db->db_) : "out of memory";
    throw Error("store-unavailable", "cannot open store '" + path + "': " + msg);
  }
  sqlite3_busy_timeout(db->db_, 5000);
  db->exec("PRAGMA foreign_keys = ON");
  if (path != ":memory:" && !path.empty()) db->exec("PRAGMA journal_mode = WAL");
  db->exec("PRAGMA synchronous = NORMAL");
  return db;
}

Database::~Database() {
  if (db_ != nullptr) sqlite3_close_v2(db_);
}

void Database::exec(std::string_view sql) {
  std::string copy(sql);
  char* err = nullptr;
  const int rc = sqlite3_exec(db_, copy.c_str(), nullptr, nullptr, &err);
  if (rc != SQLITE_OK) {
    std::string msg = err ? err : "";
    sqlite3_free(err);
    fail(rc, msg);
  }
}

std::int64_t Database::last_insert_rowid() const { return sqlite3_last_insert_rowid(db_); }

int Database::changes() const { return sqlite3_changes(db_); }

void Database::fail(int rc, std::string_view context) {
  const std::string msg = std::string(sqlite3_errmsg(db_)) + " [" + std::string(context.substr(0, 120)) + "]";
  if ((rc & 0xff) == SQLITE_CONSTRAINT) throw Error("integrity-violation", msg);
  if ((rc & 0xff) == SQLITE_BUSY || (rc & 0xff) == SQLITE_LOCKED) throw Error("store-busy", msg, true);
  throw Error("store-error", msg);
}

Transaction::Transaction(Database& db) : db_(db), lock_(db.mutex_), depth_(db.tx_depth_) {
  if (depth_ == 0)
    db_.exec("BEGIN IMMEDIATE");
  else
    db_.exec("SAVEPOINT sp" + std::to_string(depth_));
  ++db_.tx_depth_;
}

Transaction::~Transaction() {
  if (done_) return;
  try {
    if (depth_ == 0) {
      db_.exec("ROLLBACK");
    } else {
      db_.exec("ROLLBACK TO sp" + std::to_string(depth_));
      db_.exec("RELEASE sp" + std::to_string(depth_));
    }
  } catch (...) {
  }
  --db_.tx_depth_;
}

void Transaction::commit() {
  if (depth_ == 0)
    db_.exec("COMMIT");
  else
    db_.exec("RELEASE sp" + std::to_string(depth_));
  done_ = true;
  --db_.tx_depth_;
}

}  // namespace examforge
