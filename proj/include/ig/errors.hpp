#pragma once

#include <stdexcept>
#include <string>

namespace ig {

/// Input rejected by a precondition or invariant check.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed on-disk record; carries file/line context in the message.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Content-level failure while producing data (e.g. packing did not converge).
class GenerationError : public std::runtime_error {
public:
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Network-level failure talking to an external service.
class TransportError : public std::runtime_error {
public:
  explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss or other unrecoverable condition inside a training step.
class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ig
