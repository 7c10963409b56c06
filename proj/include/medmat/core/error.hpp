#pragma once

#include <stdexcept>
#include <string>

namespace medmat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class ArityError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class VersionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };

}  // namespace medmat
