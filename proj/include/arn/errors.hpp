#pragma once

#include <stdexcept>
#include <string>

namespace arn {

// Every failure raised by the library derives from ArnError so callers can
// catch the family once and still discriminate by concrete type.
class ArnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ArnError {
 public:
  using ArnError::ArnError;
};

class RankError : public ArnError {
 public:
  using ArnError::ArnError;
};

class DomainError : public ArnError {
 public:
  using ArnError::ArnError;
};

class NumericsError : public ArnError {
 public:
  using ArnError::ArnError;
};

class SupportError : public ArnError {
 public:
  using ArnError::ArnError;
};

class VocabError : public ArnError {
 public:
  using ArnError::ArnError;
};

class ConfigError : public ArnError {
 public:
  using ArnError::ArnError;
};

class EmptyInputError : public ArnError {
 public:
  using ArnError::ArnError;
};

class EncodingError : public ArnError {
 public:
  using ArnError::ArnError;
};

class IoError : public ArnError {
 public:
  using ArnError::ArnError;
};

}  // namespace arn
