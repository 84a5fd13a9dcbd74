#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bytet5 {

// Base for every error the toolkit raises. `kind()` is a stable short tag
// used in the CLI's machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& message) : Error("argument", message) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& message) : Error("range", message) {}
};

// Malformed corruption pair or checkpoint container.
class StructureError : public Error {
 public:
  explicit StructureError(const std::string& message) : Error("structure", message) {}
};

class SpecError : public Error {
 public:
  explicit SpecError(const std::string& message) : Error("spec", message) {}
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, long step)
      : Error("training", message), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message) : Error("transport", message) {}
};

class VerdictError : public Error {
 public:
  explicit VerdictError(const std::string& message) : Error("verdict", message) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& message) : Error("consistency", message) {}
};

// Invalid configuration; one diagnostic per offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics)
      : Error("config", join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration";
    for (const auto& item : items) {
      out += "; " + item;
    }
    return out;
  }

  std::vector<std::string> diagnostics_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace bytet5
