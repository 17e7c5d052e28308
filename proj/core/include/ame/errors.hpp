#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ame {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Two weight maps disagree on names, shapes or dtypes.
class SchemaMismatch : public Error {
 public:
  SchemaMismatch(std::string tensor, const std::string& what)
      : Error(what), tensor_(std::move(tensor)) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// Invalid configuration or parameter values. Carries every violation found,
// not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& violation)
      : ConfigError(std::vector<std::string>{violation}) {}

  const std::vector<std::string>& violations() const noexcept {
    return violations_;
  }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

}  // namespace ame
