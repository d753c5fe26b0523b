#pragma once

#include <stdexcept>
#include <string>

namespace causalseg {

/// Bad input from the caller: missing files, malformed data, inconsistent
/// configuration. The CLI maps it to exit code 2.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A training step produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace causalseg
