#pragma once

#include <stdexcept>
#include <string>

namespace ewfsqd {

/// Exit-code family an error maps to at the CLI boundary.
enum class ErrorKind { Validation, Solver, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::Validation,
              line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

/// A named invariant failed on load or on a config value.
class ValidationError : public Error {
 public:
  ValidationError(std::string invariant, const std::string& what)
      : Error(ErrorKind::Validation, invariant + ": " + what),
        invariant_(std::move(invariant)) {}
  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(ErrorKind::Solver, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class DegeneracyError : public Error {
 public:
  explicit DegeneracyError(const std::string& what)
      : Error(ErrorKind::Solver, what) {}
};

/// Matrix logarithm on the branch cut (orthogonal matrix with eigenvalue -1).
class BranchError : public Error {
 public:
  explicit BranchError(const std::string& what)
      : Error(ErrorKind::Validation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// Any error raised while processing one cluster, tagged with where it happened.
class StageError : public Error {
 public:
  StageError(ErrorKind kind, std::string cluster, std::string stage, const std::string& what)
      : Error(kind, "cluster " + cluster + ", stage " + stage + ": " + what),
        cluster_(std::move(cluster)),
        stage_(std::move(stage)) {}
  const std::string& cluster() const noexcept { return cluster_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string cluster_, stage_;
};

}  // namespace ewfsqd
