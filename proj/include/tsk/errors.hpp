#pragma once

#include <stdexcept>
#include <string>

namespace tsk {

// Error categories map onto the CLI exit codes:
//   UsageError -> 1, DataError -> 2, SolverError -> 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad command line, malformed config file, conflicting options.
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (sequences, labels, artifacts).
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical solver failed to produce a usable result.
class SolverError : public Error {
public:
    using Error::Error;
};

} // namespace tsk
