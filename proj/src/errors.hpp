#pragma once

#include <stdexcept>
#include <string>

namespace falcon {

// Error taxonomy for the whole library. The C API maps each type onto a
// falcon_status code and the CLI maps those onto exit codes, so new failure
// modes should reuse one of these rather than invent a new type.

// Caller passed a value outside the operation's contract (empty dataset,
// epochs < 1, unknown class name, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Object violates its own structural invariants (topology/weight shape
// mismatch, route to a missing node, bad activation table).
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed external data (PPM, CIFAR, manifest, model file). Messages name
// the byte offset of the defect where one is known.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss. The message names the epoch.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cost-table calibration cannot reach the requested split.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem trouble (missing file, unwritable directory).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace falcon
