#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phasediff {

// Precondition on a parameter or input was violated.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A simulated path produced a non-finite value.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (step " + std::to_string(index) + ")"),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Configuration could not be parsed or validated. Carries the offending key
// and, when known, the 1-based line in the source file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : std::runtime_error(format(what, key, line)), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& what, const std::string& key, int line) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!key.empty()) out += key + ": ";
    return out + what;
  }

  std::string key_;
  int line_;
};

}  // namespace phasediff
