#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "examforge/engagement.hpp"
#include "examforge/pipeline.hpp"
#include "examforge/store.hpp"
#include "examforge/sync.hpp"

namespace examforge {

inline constexpr std::size_t kCompressThreshold = 1024;

struct Principal {
  std::string user_id;
  Role role = Role::kStudent;
};

// Static bearer-token table: {"<token>": {"user_id": "...", "role": "faculty"}}.
class TokenTable {
 public:
  static TokenTable from_json(const nlohmann::json& j);
  static TokenTable load(const std::filesystem::path& path);
  void add(const std::string& token, Principal principal);
  [[nodiscard]] std::optional<Principal> lookup(const std::string& token) const;
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }

 private:
  std::map<std::string, Principal> tokens_;
};

struct ApiRequest {
  std::string method;
  std::string path;  // without the query string
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lowercase names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::map<std::string, std::string> headers;
  std::string body;
};

// Splits "/a/b?x=1&y=%20" into a decoded path and query map.
void split_target(std::string_view target, std::string& path, std::map<std::string, std::string>& query);
std::string url_decode(std::string_view s);
std::string gzip_compress(std::string_view data);
std::string gzip_decompress(std::string_view data);
// HTTP status for an error code.
int status_for(const std::string& code);

struct ApiContext {
  std::shared_ptr<ContentStore> store;
  std::shared_ptr<Engagement> engagement;
  std::shared_ptr<SyncService> sync;
  std::shared_ptr<Pipeline> pipeline;  // optional; enables /jobs
  TokenTable tokens;
  std::string version = "0.1.0";
};

// Transport-independent request router. Every response carries
// X-Request-Id; errors use {code, message, request_id}.
class Api {
 public:
  explicit Api(ApiContext context);
  ApiResponse route(const ApiRequest& request);
  [[nodiscard]] const ApiContext& context() const { return ctx_; }
  // Resolves an Authorization header value.
  [[nodiscard]] std::optional<Principal> authenticate(const std::string& authorization) const;

 private:
  nlohmann::json dispatch(const ApiRequest& req, const std::string& request_id, int& status);

  ApiContext ctx_;
};

}  // namespace examforge
