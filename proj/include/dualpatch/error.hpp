#pragma once

#include <stdexcept>
#include <string>

namespace dualpatch {

enum class ErrorKind {
  InvalidArgument,
  Config,
  Io,
  Detector,
  Numeric,
  State,
};

// Every failure raised by the core carries a kind; the C layer maps it onto
// a status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dualpatch
