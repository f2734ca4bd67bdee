#pragma once

#include <stdexcept>
#include <string>

namespace prunescope {

// Base for every error the library raises. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestionError : public Error { public: using Error::Error; };
class SchemaError : public Error { public: using Error::Error; };
class LookupError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class ConstructionError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class ComparisonError : public Error { public: using Error::Error; };
class ScheduleExhaustedError : public Error { public: using Error::Error; };

class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace prunescope
