#pragma once

#include <stdexcept>
#include <string>

namespace mc {

// Base for every error raised by the engine. Callers that only need a
// one-line diagnostic can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
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

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

// Precondition broken by the caller (wrong schema, advancing an ended
// session, empty statistic input, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace mc
