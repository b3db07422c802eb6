#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;
struct sqlite3_stmt;

namespace examforge {

class Database;

class Statement {
 public:
  Statement(Database& db, std::string_view sql);
  ~Statement();
  Statement(Statement&& other) noexcept;
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  Statement& operator=(Statement&&) = delete;

  Statement& bind(int idx, std::string_view v);
  Statement& bind(int idx, const std::string& v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, const char* v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, std::int64_t v);
  Statement& bind(int idx, int v) { return bind(idx, static_cast<std::int64_t>(v)); }
  Statement& bind(int idx, bool v) { return bind(idx, static_cast<std::int64_t>(v ? 1 : 0)); }
  Statement& bind(int idx, double v);
  Statement& bind(int idx, std::nullptr_t);
  Statement& bind(int idx, const std::optional<std::string>& v);
  Statement& bind_blob(int idx, std::span<const std::uint8_t> v);

  template <typename... Args>
  Statement& bind_all(const Args&... args) {
    int i = 1;
    (bind(i++, args), ...);
    return *this;
  }

  // true while a row is available.
  bool step();
  // Runs to completion; for statements without result rows.
  void run();
  void reset();

  [[nodiscard]] bool is_null(int col) const;
  [[nodiscard]] std::string text(int col) const;
  [[nodiscard]] std::optional<std::string> opt_text(int col) const;
  [[nodiscard]] std::int64_t integer(int col) const;
  [[nodiscard]] double real(int col) const;
  [[nodiscard]] std::vector<std::uint8_t> blob(int col) const;

 private:
  Database* db_;
  sqlite3_stmt* stmt_;
};

// One connection, serialized by a recursive mutex. Transactions nest via
// savepoints.
class Database {
 public:
  static std::shared_ptr<Database> open(const std::string& path);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  void exec(std::string_view sql);
  Statement prepare(std::string_view sql) { return Statement(*this, sql); }

  [[nodiscard]] std::unique_lock<std::recursive_mutex> lock() { return std::unique_lock(mutex_); }
  [[nodiscard]] std::int64_t last_insert_rowid() const;
  [[nodiscard]] int changes() const;
  [[nodiscard]] const std::string& path() const { return path_; }

  sqlite3* handle() { return db_; }

  // Throws examforge::Error translated from the current sqlite error.
  [[noreturn]] void fail(int rc, std::string_view context);

 private:
  friend class Transaction;
  explicit Database(std::string path);

  sqlite3* db_ = nullptr;
  std::string path_;
  std::recursive_mutex mutex_;
  int tx_depth_ = 0;
};

class Transaction {
 public:
  explicit Transaction(Database& db);
  ~Transaction();
  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;

  void commit();

 private:
  Database& db_;
  std::unique_lock<std::recursive_mutex> lock_;
  int depth_;
  bool done_ = false;
};

}  // namespace examforge
