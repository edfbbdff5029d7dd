#pragma once

#include <stdexcept>
#include <string>

namespace clickseg {

enum class ErrorCode {
  InvalidArgument = 1,
  Io,
  Format,
  Shape,
  NotFound,
  AlreadyCorrect,
  Numeric,
  State,
  Internal,
};

// All library failures are reported as clickseg::Error; the C API maps the
// code onto cseg_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace clickseg
