#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace entdiff {

// Runtime error carrying a stable machine-parseable category. The CLI prints
// failures as a single line "error:<category>: <message>" and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

inline Error config_error(const std::string& msg) { return Error("config", msg); }
inline Error io_error(const std::string& msg) { return Error("io", msg); }
inline Error usage_error(const std::string& msg) { return Error("usage", msg); }
inline Error mismatch_error(const std::string& msg) { return Error("mismatch", msg); }

inline Error csv_error(std::size_t line, const std::string& msg) {
  return Error("csv", "line " + std::to_string(line) + ": " + msg);
}

}  // namespace entdiff
