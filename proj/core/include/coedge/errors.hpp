#pragma once

#include <stdexcept>
#include <string>

namespace coedge {

// LUT lookup hit a key outside the configured space.
struct MissingEntryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation requires a valid architecture and got violations instead.
struct InvalidArchitectureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// MAPE against a non-positive ground truth.
struct ZeroTruthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training loss or weights left the finite range.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Table-mode accuracy oracle has no entry for the architecture.
struct MissingAccuracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// No zoo member satisfies the runtime budgets.
struct NoFeasibleArchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON input does not match the declared schema (missing/unknown fields).
struct JsonSchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WireError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : WireError {
  using WireError::WireError;
};
struct BadVersionError : WireError {
  using WireError::WireError;
};
struct TruncatedPayloadError : WireError {
  using WireError::WireError;
};

struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HandshakeError : EngineError {
  using EngineError::EngineError;
};

}  // namespace coedge
