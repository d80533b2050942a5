#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace disco {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ZeroVector : public Error {
public:
  ZeroVector() : Error("cannot normalize a zero vector") {}
};

class DimensionMismatch : public Error {
public:
  DimensionMismatch(std::size_t a, std::size_t b)
      : Error("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class MissingQuality : public Error {
public:
  explicit MissingQuality(const std::string& image_id)
      : Error("image '" + image_id + "' has no quality score but the quality weight is positive") {}
};

class EmptyDataset : public Error {
public:
  EmptyDataset() : Error("metrics require at least one image") {}
};

class LengthMismatch : public Error {
public:
  LengthMismatch(std::size_t a, std::size_t b)
      : Error("length mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class NonFiniteGradient : public Error {
public:
  NonFiniteGradient(std::size_t component, std::string what)
      : Error("non-finite gradient in component " + std::to_string(component) + " (" + what + ")"),
        component_(component) {}
  std::size_t component() const noexcept { return component_; }

private:
  std::size_t component_;
};

class DegenerateVariance : public Error {
public:
  explicit DegenerateVariance(double t)
      : Error("marginal variance vanishes at t=" + std::to_string(t)) {}
};

class ZeroNoise : public Error {
public:
  ZeroNoise() : Error("transition has zero noise and therefore no density") {}
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Raised while reading interchange files; carries the 1-based line number.
class InputError : public Error {
public:
  InputError(std::size_t line, const std::string& kind, const std::string& reason)
      : Error(kind + " at line " + std::to_string(line) + ": " + reason), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class SchemaError : public InputError {
public:
  SchemaError(std::size_t line, const std::string& reason) : InputError(line, "SchemaError", reason) {}
};

class NormError : public InputError {
public:
  NormError(std::size_t line, double norm)
      : InputError(line, "NormError", "embedding norm " + std::to_string(norm) + " is not 1"),
        norm_(norm) {}
  double norm() const noexcept { return norm_; }

private:
  double norm_;
};

class GroupInconsistency : public Error {
public:
  explicit GroupInconsistency(const std::string& prompt_id)
      : Error("GroupInconsistency: images of prompt '" + prompt_id + "' disagree on target_count"),
        prompt_id_(prompt_id) {}
  const std::string& prompt_id() const noexcept { return prompt_id_; }

private:
  std::string prompt_id_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace disco
