#pragma once

#include <chrono>
#include <map>
#include <string>
#include <string_view>

namespace examforge {

struct HttpReply {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;  // lowercase names
};

struct HttpCall {
  std::string method = "POST";
  std::string url;  // absolute http:// or https:// URL
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
  std::size_t max_response_bytes = 0;  // 0 = unlimited
};

// Blocking HTTP(S) request. Transport failures surface as
// Error("provider-unavailable", retryable), read timeouts as
// Error("provider-timeout", retryable) and an oversized body as
// Error("provider-bad-response").
HttpReply http_request(const HttpCall& call);

// Maps a non-2xx status onto the provider error vocabulary and throws.
[[noreturn]] void throw_for_status(const HttpReply& reply, std::string_view provider);

}  // namespace examforge
