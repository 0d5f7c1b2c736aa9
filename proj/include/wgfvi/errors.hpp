#pragma once

#include <stdexcept>
#include <string>

namespace wgfvi {

// Input outside the mathematical domain of an operation (non-SPD matrix,
// non-positive threshold, tangent outside the injectivity domain, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical state lost positive-definiteness during integration or
// iteration. Carries the step index at which the failure was detected.
class DegeneracyError : public std::runtime_error {
 public:
  DegeneracyError(const std::string& what, long step = -1)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not defined for the given configuration (e.g. a 2-d only helper
// called in higher dimension).
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wgfvi
