#pragma once

#include <stdexcept>
#include <string>

namespace avdf {

enum class ErrorKind { Config, Input, Numerical, Shape, State };

// Base for every error raised by the library. The kind selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

enum class InputErrorCode {
  MissingFile,
  UnsupportedEncoding,
  EmptyAudio,
  WrongColumnCount,
  NonFinite,
  EmptyFile,
  Malformed,
  TooShort,
  Io,
};

class InputError : public Error {
 public:
  InputError(InputErrorCode code, const std::string& what) : Error(ErrorKind::Input, what), code_(code) {}
  InputErrorCode code() const noexcept { return code_; }

 private:
  InputErrorCode code_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(ErrorKind::State, what) {}
};

// 0 ok, 2 config, 3 input, 4 numerical.
inline int exit_code(const Error& e) noexcept {
  switch (e.kind()) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Input:
      return 3;
    case ErrorKind::Numerical:
    case ErrorKind::Shape:
    case ErrorKind::State:
      return 4;
  }
  return 4;
}

}  // namespace avdf
