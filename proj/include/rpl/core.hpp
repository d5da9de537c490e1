#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>

namespace rpl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Malformed or out-of-contract input (dimension mismatch, bad parameter, NaN data).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The requested operation is undefined for the given loss or kernel.
class UnsupportedOperation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A numerical routine produced a result outside its verified tolerance.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Warnings go to stderr unless silenced; tests silence them.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();
/// Redirects warnings (nullptr = stderr); returns the previous target.
std::ostream* set_warning_stream(std::ostream* stream);

}  // namespace rpl
