#pragma once

#include <stdexcept>
#include <string>

namespace wbary {

// Argument outside a mathematical domain (e.g. a nonpositive density fed to a log).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Two fields or a field and a mesh disagree in size.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value produced during an iterative computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ResourceLimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Configuration or input-file problems. The message names the offending
// field or line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wbary
