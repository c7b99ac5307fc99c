#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace evpanel {

enum class ErrorCode {
  config,         // bad configuration / parameter values
  data,           // malformed or inconsistent input data
  dimension,      // shape mismatch between objects
  domain,         // value outside the admissible region of a transform
  singular,       // numerically singular matrix (Cholesky failure)
  rank_deficient, // collinear regressor matrix
  io,             // file system failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {
inline void str_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void str_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  str_append(os, rest...);
}
}  // namespace detail

// cat("unit ", 3, " failed") -> "unit 3 failed"
template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::str_append(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(ErrorCode code, const Args&... args) {
  throw Error(code, cat(args...));
}

template <typename... Args>
void require(bool cond, ErrorCode code, const Args&... args) {
  if (!cond) fail(code, args...);
}

}  // namespace evpanel
