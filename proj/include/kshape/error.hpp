#pragma once

#include <stdexcept>
#include <string>

namespace kshape {

// Categories map onto CLI exit codes: config 2, data 3, compute 4.
enum class ErrorKind { kConfig = 2, kData = 3, kCompute = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class ComputeError : public Error {
 public:
  explicit ComputeError(const std::string& what) : Error(ErrorKind::kCompute, what) {}
};

/// Raised by tensor ops when operand shapes disagree.
class ShapeError : public ComputeError {
 public:
  explicit ShapeError(const std::string& what) : ComputeError(what) {}
};

/// Training produced a NaN or Inf.
class DivergenceError : public ComputeError {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : ComputeError(what), epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace kshape
