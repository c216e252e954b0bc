#pragma once

#include <stdexcept>
#include <string>

namespace dmn {

// User-facing failures: bad files, bad flags, inconsistent inputs. CLI exit code 1.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failures: singular systems, non-convergence, divergence. CLI exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace dmn
