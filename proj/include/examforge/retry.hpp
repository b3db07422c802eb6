#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "examforge/error.hpp"

namespace examforge {

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

// Backoff schedule between attempts; attempts = delays.size() + 1.
struct RetryPolicy {
  std::vector<std::chrono::milliseconds> delays{std::chrono::seconds(1), std::chrono::seconds(4),
                                                std::chrono::seconds(16)};
  Sleeper sleep = real_sleeper();
};

// Calls fn until it succeeds, throws a non-retryable Error, or the schedule
// is exhausted (the last retryable Error is rethrown).
template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  for (size_t attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (!e.retryable() || attempt >= policy.delays.size()) throw;
      policy.sleep(policy.delays[attempt]);
    }
  }
}

}  // namespace examforge
