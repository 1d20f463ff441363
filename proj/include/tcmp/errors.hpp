#pragma once

#include <stdexcept>
#include <string>

namespace tcmp {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller handed us arguments that violate an operation's preconditions.
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

// An object was used in a way its lifecycle forbids (e.g. backward twice).
struct InvalidState : Error {
  explicit InvalidState(const std::string& msg) : Error(msg) {}
};

// A checkpoint file is unreadable: bad magic, wrong version, truncated.
struct CorruptCheckpoint : Error {
  explicit CorruptCheckpoint(const std::string& msg) : Error(msg) {}
};

// A linear-algebra step lost positive (semi-)definiteness or invertibility.
struct NumericDegeneracy : Error {
  explicit NumericDegeneracy(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss.
struct DivergedTraining : Error {
  explicit DivergedTraining(const std::string& msg, long batch_index)
      : Error(msg), batch(batch_index) {}
  long batch;
};

// A text file did not parse; carries the 1-based offending line.
struct ParseError : Error {
  ParseError(const std::string& msg, long line_number)
      : Error(msg + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  long line;
};

// A metric is undefined for the given inputs (e.g. zero ground-truth boxes).
struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& msg) : Error(msg) {}
};

}  // namespace tcmp
