#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace svq {

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

namespace detail {
template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

}  // namespace svq

// Runtime contract check; the message should name the operation and the
// offending values.
#define SVQ_CHECK(cond, ...)                            \
  do {                                                  \
    if (!(cond)) ::svq::fail(::svq::detail::cat(__VA_ARGS__)); \
  } while (0)
