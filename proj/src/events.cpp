#include "examforge/events.hpp"

#include <vector>

namespace examforge {

bool is_terminal_stage(const std::string& stage) { return stage == "done" || stage == "failed"; }

nlohmann::json to_json(const ProgressEvent& e) {
  return {{"type", "progress"},  {"id", e.id},   {"stage", e.stage},
          {"percent", e.percent}, {"log", e.log}, {"ts", format_rfc3339(e.at)}};
}

EventHub::Token EventHub::subscribe(const std::string& id, Handler handler) {
  std::lock_guard lock(mutex_);
  const Token t = next_++;
  subs_.emplace(t, Subscription{id, std::move(handler)});
  return t;
}

void EventHub::unsubscribe(Token token) {
  std::lock_guard lock(mutex_);
  subs_.erase(token);
}

void EventHub::publish(const ProgressEvent& event) {
  std::vector<Handler> targets;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [token, sub] : subs_)
      if (sub.id.empty() || sub.id == event.id) targets.push_back(sub.handler);
  }
  for (const auto& h : targets) h(event);
}

}  // namespace examforge
