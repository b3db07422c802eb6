#include "examforge/http_client.hpp"

#include <algorithm>
#include <cctype>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "examforge/error.hpp"

namespace examforge {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("provider-misconfigured", "endpoint is not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

HttpReply http_request(const HttpCall& call) {
  const auto target = split_url(call.url);
  httplib::Client client(target.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(call.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(call.timeout - secs);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_follow_location(true);

  httplib::Headers headers;
  for (const auto& [k, v] : call.headers) headers.emplace(k, v);

  std::string body;
  bool too_large = false;
  auto receiver = [&](const char* data, size_t len) {
    if (call.max_response_bytes != 0 && body.size() + len > call.max_response_bytes) {
      too_large = true;
      return false;
    }
    body.append(data, len);
    return true;
  };

  httplib::Result res{nullptr, httplib::Error::Unknown};
  if (call.method == "GET") {
    res = client.Get(target.path, headers, receiver);
  } else {
    httplib::Request req;
    req.method = call.method;
    req.path = target.path;
    req.headers = headers;
    req.body = call.body;
    req.set_header("Content-Type", call.content_type);
    req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) { return receiver(data, len); };
    res = client.send(req);
  }

  if (too_large)
    throw Error("provider-bad-response", "provider response exceeds " + std::to_string(call.max_response_bytes) + " bytes");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write) {
      throw Error("provider-timeout", "provider did not answer within the deadline (" + httplib::to_string(err) + ")",
                  true);
    }
    throw Error("provider-unavailable", "provider unreachable: " + httplib::to_string(err), true);
  }
  HttpReply reply;
  reply.status = res->status;
  reply.body = std::move(body);
  for (const auto& [k, v] : res->headers) reply.headers[lower(k)] = v;
  return reply;
}

void throw_for_status(const HttpReply& reply, std::string_view provider) {
  const std::string where = std::string(provider) + " returned HTTP " + std::to_string(reply.status);
  if (reply.status == 408 || reply.status == 504) throw Error("provider-timeout", where, true);
  if (reply.status == 429 || reply.status >= 500) throw Error("provider-unavailable", where, true);
  throw Error("provider-bad-response", where);
}

}  // namespace examforge
