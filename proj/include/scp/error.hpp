#pragma once

#include <stdexcept>
#include <string>

namespace scp {

// Bad arguments, shapes or data supplied by the caller. The CLI maps this to exit code 1.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A file on disk is missing, corrupt or in an unknown format. Also a user error.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite value.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace scp
