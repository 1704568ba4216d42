#pragma once

#include <stdexcept>
#include <string>

namespace cvar {

// Each error family maps to one CLI exit code (see tools/cvar_main.cpp).

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cvar
