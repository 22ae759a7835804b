#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "expface/error.hpp"

namespace expface {

inline constexpr double kPi = std::numbers::pi;

/// Derivatives of T are evaluated on [kAngleEpsilon, pi - kAngleEpsilon].
/// ExpFace's derivative diverges at 0 for m < 1.
inline constexpr double kAngleEpsilon = 1e-7;

/// Inputs may stray outside [0, pi] by this much (rounding) and are clamped.
inline constexpr double kAngleSlack = 1e-9;

/// An angle in radians, guaranteed to lie in [0, pi].
class Angle {
public:
    constexpr Angle() = default;

    /// Throws DomainError when `radians` is outside [0, pi] by more than
    /// kAngleSlack; values inside the slack are clamped.
    explicit Angle(double radians) {
        if (!(radians >= -kAngleSlack && radians <= kPi + kAngleSlack)) {
            throw DomainError("angle " + std::to_string(radians) +
                              " rad outside [0, pi]");
        }
        value_ = std::clamp(radians, 0.0, kPi);
    }

    constexpr double radians() const noexcept { return value_; }

    friend constexpr auto operator<=>(const Angle&, const Angle&) = default;

private:
    double value_ = 0.0;
};

/// Clamps theta away from both endpoints for derivative evaluation.
inline double margin_domain(Angle theta) noexcept {
    return std::clamp(theta.radians(), kAngleEpsilon, kPi - kAngleEpsilon);
}

}  // namespace expface
