#pragma once

#include <stdexcept>
#include <string>

namespace clover {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error("index error: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

// Raised when a loss turns non-finite mid-training. Carries enough context to
// point at the offending batch.
struct TrainingDiverged : std::runtime_error {
  TrainingDiverged(const std::string& msg, int epoch_, int batch_)
      : std::runtime_error(msg), epoch(epoch_), batch(batch_) {}
  int epoch;
  int batch;
};

}  // namespace clover
