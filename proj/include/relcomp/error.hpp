#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relcomp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent input data (files, configs, arguments). CLI exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class MissingWordError : public InputError {
 public:
  explicit MissingWordError(std::string word)
      : InputError("word not in vocabulary: '" + word + "'"), word_(std::move(word)) {}

  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

class ZeroVarianceError : public InputError {
 public:
  explicit ZeroVarianceError(std::size_t dimension)
      : InputError("dimension " + std::to_string(dimension) + " has zero variance"),
        dimension_(dimension) {}

  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. CLI exit code 3.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace relcomp
