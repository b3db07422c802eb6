#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>

#include "examforge/api.hpp"
#include "examforge/upload.hpp"

namespace examforge {

struct ServerOptions {
  std::string bind_addr = "127.0.0.1:8080";  // port 0 picks a free port
  int threads = 4;
  std::size_t max_body_bytes = 8 * 1024 * 1024;
};

// "host:port"; throws Error("bad-config") when malformed.
std::pair<std::string, unsigned short> parse_bind_addr(std::string_view addr);

// HTTP routes and the /ws upload channel on one port.
class Server {
 public:
  Server(Api& api, UploadManager& uploads, std::shared_ptr<EventHub> events, JobOutcomeLookup outcome,
         ServerOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start();
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();
  [[nodiscard]] unsigned short port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace examforge
