#pragma once

#include <stdexcept>
#include <string>

namespace introspect {

// Base class for every error this library throws. Subclasses follow the
// failure vocabulary used across the modules so callers can map them to
// process exit codes (see tools/).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or internally inconsistent network architecture.
class SpecError : public Error { public: using Error::Error; };

// Dimension mismatch between tensors, parameter vectors or batches.
class ShapeError : public Error { public: using Error::Error; };

// Backward called with a forward state it cannot consume.
class StateError : public Error { public: using Error::Error; };

// Flat parameter index outside [0, param_count).
class IndexError : public Error { public: using Error::Error; };

// Corrupt or foreign file content (bad magic, checksum, truncation).
class FormatError : public Error { public: using Error::Error; };

// An operation that needs at least one sample got none.
class EmptyDataset : public Error { public: using Error::Error; };

// Snapshot recorded twice for the same step.
class DuplicateStep : public Error { public: using Error::Error; };

// Exact-step lookup found no snapshot.
class MissingSnapshot : public Error { public: using Error::Error; };

// A step or interval falls outside what the run recorded or allows.
class RangeError : public Error { public: using Error::Error; };

// Degenerate least-squares system (duplicate or constant abscissae).
class FitError : public Error { public: using Error::Error; };

// Non-finite value where a finite one is required.
class NumericError : public Error { public: using Error::Error; };

// Invalid experiment configuration; message names the offending field.
class ConfigError : public Error { public: using Error::Error; };

// Training produced a non-finite loss. Partial artifacts are preserved.
class DivergenceError : public Error { public: using Error::Error; };

// Filesystem-level failure (open, read, write).
class IoError : public Error { public: using Error::Error; };

}  // namespace introspect
