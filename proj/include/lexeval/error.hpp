#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lexeval {

// Error categories map onto CLI exit codes: usage=1, data=2, backend=3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(what) {}
  BackendError(const std::string& what, std::vector<std::string> attempts)
      : Error(what), attempts_(std::move(attempts)) {}

  const std::vector<std::string>& attempts() const { return attempts_; }

 private:
  std::vector<std::string> attempts_;
};

}  // namespace lexeval
