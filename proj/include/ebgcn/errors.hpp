#pragma once

#include <stdexcept>

namespace ebgcn {

// File/directory access failures (missing bundle files, unwritable paths).
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk content does not match the declared layout (byte-count mismatch,
// bad magic, malformed meta).
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// In-memory data violates a dataset invariant (label out of range,
// overlapping splits, unsorted edges).
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller passed an argument outside the documented domain.
struct argument_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation produced a non-finite value.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An API usage contract was broken (mismatched lengths, detector reuse
// after firing, cache/params mismatch).
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ebgcn
