#ifndef QDISTILL_ERRORS_HPP
#define QDISTILL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qdistill {

// Invalid configuration values (bad qubit count, tau <= 0, empty dataset...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension or index-range mismatch between values that must agree.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated structural contract of a circuit or gate description.
struct StructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input vector with (near-)zero norm where a direction is required.
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file contents (bad magic, truncated record, unparseable field).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A lookup table does not cover all required keys.
struct CoverageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation called on an object in the wrong state (e.g. unfitted basis).
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failure while reading or writing artifacts.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace qdistill

#endif
