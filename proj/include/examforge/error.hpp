#pragma once

#include <stdexcept>
#include <string>

namespace examforge {

// Every failure that crosses a module boundary carries a stable, kebab-case
// code ("unknown-course", "provider-unavailable", ...). The code is what
// callers and wire protocols switch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, bool retryable = false)
      : std::runtime_error(message), code_(std::move(code)), retryable_(retryable) {}

  [[nodiscard]] const std::string& code() const noexcept { return code_; }
  [[nodiscard]] bool retryable() const noexcept { return retryable_; }

 private:
  std::string code_;
  bool retryable_;
};

}  // namespace examforge
