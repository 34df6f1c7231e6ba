#pragma once

#include <stdexcept>
#include <string>

namespace vrc {

// Violated precondition (shape mismatch, k > N, empty cloud, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad or inconsistent configuration (unknown activation, impossible
// output resolution, invalid run config).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value produced during a forward pass or training step.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DataErrorCode {
  io,
  parse,
  version_mismatch,
  truncated_blob,
  count_mismatch,
  empty_view,
};

inline const char* to_string(DataErrorCode code) {
  switch (code) {
    case DataErrorCode::io: return "io";
    case DataErrorCode::parse: return "parse";
    case DataErrorCode::version_mismatch: return "version_mismatch";
    case DataErrorCode::truncated_blob: return "truncated_blob";
    case DataErrorCode::count_mismatch: return "count_mismatch";
    case DataErrorCode::empty_view: return "empty_view";
  }
  return "unknown";
}

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  DataErrorCode code() const noexcept { return code_; }

 private:
  DataErrorCode code_;
};

#define VRC_REQUIRE(cond, msg)                                        \
  do {                                                                \
    if (!(cond)) throw ::vrc::ContractError(std::string(msg));        \
  } while (0)

}  // namespace vrc
