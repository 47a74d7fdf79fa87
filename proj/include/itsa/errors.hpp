#pragma once

#include <stdexcept>
#include <string>

namespace itsa {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad inputs: malformed files, inconsistent panels, invalid options.
// The CLI maps these to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Estimation broke down on otherwise valid inputs: singular systems,
// rank-deficient designs, non-stationary iterates. CLI exit code 3.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingObservation : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateDesign : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SegmentTooShort : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AllSegmentsTooShort : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BandwidthTooLarge : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidOrder : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonStationary : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInput : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ZeroVariance : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class RankDeficient : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class SingularSystem : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class NonStationaryIterate : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class CholeskyFailure : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace itsa
