#pragma once

#include <stdexcept>
#include <string>

namespace gcr {

// Error categories line up with the CLI exit codes:
// usage -> 1, data -> 2, non-convergence -> 3, numerical -> 4.
enum class ErrorKind { Usage = 0, Data = 1, NonConvergence = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_) + 1; }

  const char* category() const noexcept {
    switch (kind_) {
      case ErrorKind::Usage: return "usage";
      case ErrorKind::Data: return "data";
      case ErrorKind::NonConvergence: return "nonconvergence";
      case ErrorKind::Numerical: return "numerical";
    }
    return "numerical";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) {
  throw Error(ErrorKind::Usage, msg);
}
[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void fail_nonconvergence(const std::string& msg) {
  throw Error(ErrorKind::NonConvergence, msg);
}
[[noreturn]] inline void fail_numerical(const std::string& msg) {
  throw Error(ErrorKind::Numerical, msg);
}

}  // namespace gcr
