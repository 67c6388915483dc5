#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hopqa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Network or server-side failure. Callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend rejected the request (4xx, policy refusal). Never retried.
class RefusalError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Token streams from two scoring calls (or context and echo) disagree.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> fields)
      : Error(join(fields)), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  static std::string join(const std::vector<std::string>& fields) {
    std::string out = "validation failed:";
    for (const auto& f : fields) out += " " + f + ";";
    return out;
  }
  std::vector<std::string> fields_;
};

}  // namespace hopqa
