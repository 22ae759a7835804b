#pragma once

#include <cmath>

#include "expface/angle.hpp"
#include "expface/loss_spec.hpp"

namespace expface {

namespace detail {

/// SphereFace branch index k = floor(m * theta / pi).
inline double sphereface_branch(double m, double theta) noexcept {
    return std::floor(m * theta / kPi);
}

inline double sign_of_branch(double k) noexcept {
    return std::fmod(k, 2.0) == 0.0 ? 1.0 : -1.0;
}

/// T(theta) for an already-clamped theta; no validation.
inline double similarity_unchecked(const LossSpec& spec, double theta) noexcept {
    const double m = spec.margin;
    switch (spec.family) {
        case Family::Plain:
            return std::cos(theta);
        case Family::SphereFace: {
            const double k = sphereface_branch(m, theta);
            return sign_of_branch(k) * std::cos(m * theta) - 2.0 * k;
        }
        case Family::CosFace:
            return std::cos(theta) - m;
        case Family::ArcFace:
            return std::cos(theta + m);
        case Family::ExpFaceNaive:
            return std::cos(std::pow(theta, m));
        case Family::ExpFace:
            // shrink to [0,1], exponentiate, expand back to [0, pi]
            return std::cos(kPi * std::pow(theta / kPi, m));
    }
    return std::cos(theta);
}

}  // namespace detail

/// Margin-embedded similarity T(theta) between a feature and its positive
/// class center.
///
///   Plain         cos(theta)
///   SphereFace    (-1)^k cos(m theta) - 2k,   k = floor(m theta / pi)
///   CosFace       cos(theta) - m
///   ArcFace       cos(theta + m)
///   ExpFaceNaive  cos(theta^m)
///   ExpFace       cos(pi (theta / pi)^m)
///
/// Evaluated on the closed interval, so T(0) and T(pi) are exact; only
/// derivatives use the clamped domain. Throws ConfigError for an invalid spec.
inline double similarity(const LossSpec& spec, Angle theta) {
    validate(spec);
    return detail::similarity_unchecked(spec, theta.radians());
}

}  // namespace expface
