#pragma once

#include <stdexcept>
#include <string>

namespace farsign {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// Exact certification would enumerate more subsets than the configured cap.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (IDX files, traces, matrices).
class DataError : public Error {
public:
    using Error::Error;
};

// Run-time fault: non-finite state, staleness contract violated.
class Fault : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace farsign
