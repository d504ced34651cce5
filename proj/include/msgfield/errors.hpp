#pragma once

#include <stdexcept>
#include <string>

namespace msgfield {

// Base class for every error thrown by this library. Catching MsgFieldError
// is enough to contain anything we raise on purpose.
struct MsgFieldError : std::runtime_error {
  explicit MsgFieldError(const std::string& what) : std::runtime_error(what) {}
};

struct DomainError : MsgFieldError {
  using MsgFieldError::MsgFieldError;
};

struct InvalidCamera : DomainError {
  using DomainError::DomainError;
};

struct DegenerateQuaternion : DomainError {
  using DomainError::DomainError;
};

// Splat projection whose homogeneous depth term is numerically unusable.
struct DegenerateProjection : DomainError {
  using DomainError::DomainError;
};

struct DimMismatch : DomainError {
  using DomainError::DomainError;
};

struct ShapeMismatch : DomainError {
  using DomainError::DomainError;
};

struct ImageTooSmall : DomainError {
  using DomainError::DomainError;
};

struct TooFewPrimitives : DomainError {
  using DomainError::DomainError;
};

struct UnknownTimestep : DomainError {
  using DomainError::DomainError;
};

struct EmptyObject : DomainError {
  using DomainError::DomainError;
};

struct EmptyTable : DomainError {
  using DomainError::DomainError;
};

struct ConflictingLabels : DomainError {
  using DomainError::DomainError;
};

struct NotRigidMode : DomainError {
  using DomainError::DomainError;
};

struct NoDynamicPrimitives : DomainError {
  using DomainError::DomainError;
};

struct MissingObservation : DomainError {
  using DomainError::DomainError;
};

// Backward pass invoked against a forward cache that no longer matches the
// scene/camera it was produced from.
struct StaleForward : DomainError {
  using DomainError::DomainError;
};

struct SynthSpecError : DomainError {
  using DomainError::DomainError;
};

// Requested operation word exists in the command grammar but has no
// implementation (e.g. manipulation verbs other than grasp/place).
struct NotImplementedError : DomainError {
  using DomainError::DomainError;
};

struct IoError : MsgFieldError {
  using MsgFieldError::MsgFieldError;
};

struct ParseError : IoError {
  ParseError(const std::string& what, int line)
      : IoError(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
  explicit ParseError(const std::string& what) : IoError(what), line_number(-1) {}
  int line_number;
};

struct VersionMismatch : IoError {
  using IoError::IoError;
};

}  // namespace msgfield
