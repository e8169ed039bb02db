#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sasmpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Thrown when a documented precondition does not hold.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Offline synthesis could not produce the requested artifact.
class DesignFailure : public std::runtime_error {
 public:
  explicit DesignFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent configuration (files, schedules, options).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void demand(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace sasmpc
