#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace seqphase {

using Count = std::int64_t;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Reduce an angle to the canonical half-open range (-pi, pi].
inline double wrap_phase(double x)
{
    double r = std::remainder(x, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

/// Signed minor-arc difference a - b, in (-pi, pi].
inline double wrapped_difference(double a, double b)
{
    return wrap_phase(a - b);
}

inline double wrapped_distance(double a, double b)
{
    return std::abs(wrapped_difference(a, b));
}

} // namespace seqphase
