#pragma once

#include <stdexcept>
#include <string>

namespace cyclereg {

// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// A loss term or intermediate became NaN/Inf. The message names the term.
class NumericsError : public Error {
 public:
  using Error::Error;
};

// Requested more pyramid levels than the grid can be halved.
class PyramidTooCoarse : public Error {
 public:
  using Error::Error;
};

}  // namespace cyclereg
