#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "examforge/time.hpp"

namespace examforge {

// stage: uploading | ocr | generating | inserting | done | failed
struct ProgressEvent {
  std::string id;  // upload session or job id
  std::string stage;
  int percent = 0;
  std::string log;
  Timestamp at{};
};

bool is_terminal_stage(const std::string& stage);
nlohmann::json to_json(const ProgressEvent& e);

// In-process fan-out of progress events. Subscribers are called on the
// publishing thread, in publish order per id.
class EventHub {
 public:
  using Handler = std::function<void(const ProgressEvent&)>;
  using Token = std::uint64_t;

  // An empty id subscribes to every event.
  Token subscribe(const std::string& id, Handler handler);
  void unsubscribe(Token token);
  void publish(const ProgressEvent& event);

 private:
  struct Subscription {
    std::string id;
    Handler handler;
  };
  std::mutex mutex_;
  std::map<Token, Subscription> subs_;
  Token next_ = 1;
};

}  // namespace examforge
