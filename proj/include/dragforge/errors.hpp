#pragma once

#include <stdexcept>
#include <string>

namespace dragforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Shape parameters that cannot produce a closed, non-degenerate body.
class DegenerateShapeError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

/// The obstacle mask is incompatible with the flow domain (e.g. touches the inlet).
class GeometryError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SingularFitError : public Error {
 public:
  using Error::Error;
};

class ScheduleExhaustedError : public Error {
 public:
  using Error::Error;
};

class NoViableRunError : public Error {
 public:
  using Error::Error;
};

class InfeasibleConstraintError : public Error {
 public:
  using Error::Error;
};

}  // namespace dragforge
