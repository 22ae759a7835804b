#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "expface/angle.hpp"
#include "expface/error.hpp"
#include "expface/gradient.hpp"
#include "expface/loss_spec.hpp"
#include "expface/root_finding.hpp"
#include "expface/similarity.hpp"

namespace expface {

// ---------------------------------------------------------------------------
// Monotone branch of T

/// Right end of the decreasing branch of T that starts at theta = 0.
///
/// ArcFace turns upward at pi - m; the naive ExpFace form with m > 1 wraps
/// past pi at theta = pi^(1/m). Every other family is non-increasing on
/// the whole of [0, pi].
inline double monotone_branch_end(const LossSpec& spec) {
    switch (spec.family) {
        case Family::ArcFace:
            return kPi - spec.margin;
        case Family::ExpFaceNaive:
            return spec.margin > 1.0 ? std::pow(kPi, 1.0 / spec.margin) : kPi;
        default:
            return kPi;
    }
}

/// Smallest theta on the monotone branch with T(theta) = y, by bisection.
inline std::optional<double> inverse_similarity_bisect(const LossSpec& spec, double y) {
    validate(spec);
    auto t_of = [&](double theta) { return detail::similarity_unchecked(spec, theta); };
    return bisect_decreasing(t_of, 0.0, monotone_branch_end(spec), y);
}

/// Same inverse in closed form.
inline std::optional<double> inverse_similarity_closed_form(const LossSpec& spec, double y) {
    validate(spec);
    const double m = spec.margin;
    auto in_unit = [](double v) { return v >= -1.0 && v <= 1.0; };
    switch (spec.family) {
        case Family::Plain:
            if (!in_unit(y)) return std::nullopt;
            return std::acos(y);
        case Family::CosFace:
            if (!in_unit(y + m)) return std::nullopt;
            return std::acos(y + m);
        case Family::ArcFace: {
            if (!in_unit(y)) return std::nullopt;
            const double theta = std::acos(y) - m;
            if (theta < 0.0) return std::nullopt;
            return theta;
        }
        case Family::ExpFace:
            if (!in_unit(y)) return std::nullopt;
            return kPi * std::pow(std::acos(y) / kPi, 1.0 / m);
        case Family::ExpFaceNaive: {
            if (!in_unit(y)) return std::nullopt;
            const double theta = std::pow(std::acos(y), 1.0 / m);
            if (theta > monotone_branch_end(spec)) return std::nullopt;
            return theta;
        }
        case Family::SphereFace: {
            // On branch k, T(theta) = cos(m theta - k pi) - 2k spans [-1-2k, 1-2k].
            if (y > 1.0) return std::nullopt;
            const double k = std::max(0.0, std::ceil((-1.0 - y) / 2.0));
            const double phi = std::acos(std::clamp(y + 2.0 * k, -1.0, 1.0));
            const double theta = (k * kPi + phi) / m;
            if (theta > kPi) return std::nullopt;
            return theta;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Transition angle

/// Right-hand side of T(theta_trans) = cos b + ln(C - 1) / s.
inline double transition_target(const TransitionContext& ctx) {
    return std::cos(ctx.b.radians()) +
           std::log(static_cast<double>(ctx.class_count) - 1.0) / ctx.scale;
}

/// Angle at which the positive-class probability of the scalar loss is 1/2,
/// i.e. scalar_loss = ln 2. Closed-form inverse of T; nothing when no angle
/// in [0, pi] reaches the target (e.g. CosFace with m >= 1 at the defaults).
inline std::optional<Angle> transition_angle(const LossSpec& spec, const TransitionContext& ctx) {
    validate(ctx);
    if (auto theta = inverse_similarity_closed_form(spec, transition_target(ctx))) {
        return Angle(*theta);
    }
    return std::nullopt;
}

/// Bisection counterpart of transition_angle, used as a cross-check.
inline std::optional<Angle> transition_angle_bisect(const LossSpec& spec,
                                                    const TransitionContext& ctx) {
    validate(ctx);
    if (auto theta = inverse_similarity_bisect(spec, transition_target(ctx))) {
        return Angle(*theta);
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Curve sweeps

struct CurveSample {
    Angle theta;
    double value = 0.0;
    /// Set when the value was borrowed from a neighbouring grid point
    /// (SphereFace breakpoint).
    bool flagged = false;
};

/// Uniform grid of n points on [lo, hi], last point exactly hi.
inline std::vector<double> uniform_grid(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    const double spacing = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + spacing * i;
    out.back() = hi;
    return out;
}

/// Similarity curve on [0, pi], both ends included.
inline std::vector<CurveSample> sweep_similarity(const LossSpec& spec, int grid_size) {
    if (grid_size < 2) throw PreconditionError("sweep_similarity needs grid_size >= 2");
    validate(spec);
    std::vector<CurveSample> out;
    out.reserve(static_cast<std::size_t>(grid_size));
    for (double theta : uniform_grid(0.0, kPi, grid_size)) {
        out.push_back({Angle(theta), similarity(spec, Angle(theta)), false});
    }
    return out;
}

/// dL/dtheta on [eps, pi - eps]. Grid points on a SphereFace breakpoint take
/// the value of the nearest off-breakpoint grid point and are flagged.
inline std::vector<CurveSample> sweep_gradient(const LossSpec& spec, const TransitionContext& ctx,
                                               int grid_size) {
    if (grid_size < 2) throw PreconditionError("sweep_gradient needs grid_size >= 2");
    validate(spec);
    validate(ctx);
    const auto grid = uniform_grid(kAngleEpsilon, kPi - kAngleEpsilon, grid_size);
    const auto n = grid.size();

    auto on_breakpoint = [&](double theta) {
        return spec.family == Family::SphereFace &&
               distance_to_breakpoint(spec.margin, theta) <= kBreakpointTolerance;
    };

    std::vector<CurveSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].theta = Angle(grid[i]);
        if (!on_breakpoint(grid[i])) out[i].value = dL_dtheta(spec, Angle(grid[i]), ctx);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!on_breakpoint(grid[i])) continue;
        for (std::size_t offset = 1; offset < n; ++offset) {
            if (i >= offset && !on_breakpoint(grid[i - offset])) {
                out[i].value = out[i - offset].value;
                break;
            }
            if (i + offset < n && !on_breakpoint(grid[i + offset])) {
                out[i].value = out[i + offset].value;
                break;
            }
        }
        out[i].flagged = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Extrema

struct AngleInterval {
    Angle lo;
    Angle hi;
};

/// Peaks, troughs and sign/monotonicity structure of a sampled curve.
///
/// `maxima`/`minima` are interior turning points. A curve that rises into
/// (or falls away from) the first or last sample has a peak there; those are
/// reported separately in `boundary_maxima`/`boundary_minima`.
struct ExtremaReport {
    std::vector<Angle> maxima;
    std::vector<Angle> minima;
    std::vector<Angle> boundary_maxima;
    std::vector<Angle> boundary_minima;
    std::vector<AngleInterval> negative_intervals;
    std::vector<AngleInterval> monotone_decreasing_intervals;
    std::vector<AngleInterval> monotone_increasing_intervals;

    /// Interior plus boundary peaks.
    std::size_t peak_count() const noexcept { return maxima.size() + boundary_maxima.size(); }
};

/// Differences within this are treated as flat.
inline constexpr double kPlateauTolerance = 1e-12;

inline ExtremaReport analyze_extrema(std::span<const CurveSample> samples) {
    const std::size_t n = samples.size();
    if (n < 3) throw PreconditionError("analyze_extrema needs at least 3 samples");
    for (std::size_t i = 1; i < n; ++i) {
        if (!(samples[i].theta.radians() > samples[i - 1].theta.radians())) {
            throw PreconditionError("analyze_extrema: samples not sorted by theta");
        }
    }

    auto step_sign = [&](std::size_t i) {
        const double d = samples[i + 1].value - samples[i].value;
        if (d > kPlateauTolerance) return 1;
        if (d < -kPlateauTolerance) return -1;
        return 0;
    };
    auto midpoint = [&](std::size_t a, std::size_t b) {
        return Angle(0.5 * (samples[a].theta.radians() + samples[b].theta.radians()));
    };

    ExtremaReport report;

    // Turning points. `flat_begin` is the first sample of the plateau that
    // follows the last non-flat step.
    int last = 0;
    std::size_t flat_begin = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const int sign = step_sign(i);
        if (sign == 0) continue;
        if (last == 0) {
            (sign < 0 ? report.boundary_maxima : report.boundary_minima)
                .push_back(midpoint(flat_begin, i));
        } else if (last > 0 && sign < 0) {
            report.maxima.push_back(midpoint(flat_begin, i));
        } else if (last < 0 && sign > 0) {
            report.minima.push_back(midpoint(flat_begin, i));
        }
        last = sign;
        flat_begin = i + 1;
    }
    if (last > 0) report.boundary_maxima.push_back(midpoint(flat_begin, n - 1));
    if (last < 0) report.boundary_minima.push_back(midpoint(flat_begin, n - 1));

    // Maximal runs of negative values.
    for (std::size_t i = 0; i < n;) {
        if (!(samples[i].value < 0.0)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && samples[j + 1].value < 0.0) ++j;
        report.negative_intervals.push_back({samples[i].theta, samples[j].theta});
        i = j + 1;
    }

    // Maximal runs of strictly decreasing / increasing steps.
    for (std::size_t i = 0; i + 1 < n;) {
        const int sign = step_sign(i);
        if (sign == 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 2 < n && step_sign(j + 1) == sign) ++j;
        auto& runs = sign < 0 ? report.monotone_decreasing_intervals
                              : report.monotone_increasing_intervals;
        runs.push_back({samples[i].theta, samples[j + 1].theta});
        i = j + 1;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Decision-boundary margin

/// One point of the angular margin profile.
///
/// For a sample at angle theta_neg from the negative center, the binary
/// decision boundary sits where T(theta_pos) = cos(theta_neg); the margin is
/// how much closer than theta_neg the sample must be to its positive center.
/// `saturated` marks theta_neg values where even theta_pos = 0 loses
/// (cos(theta_neg) > T(0)); the boundary is then pinned at 0 and the true
/// margin is unbounded.
struct MarginFieldPoint {
    Angle theta_neg;
    Angle theta_pos_boundary;
    double angular_margin = 0.0;
    bool saturated = false;
};

namespace detail {

inline MarginFieldPoint solve_boundary(const LossSpec& spec, Angle theta_neg) {
    const double target = std::cos(theta_neg.radians());
    const double branch_end = monotone_branch_end(spec);
    MarginFieldPoint p;
    p.theta_neg = theta_neg;
    if (target > similarity_unchecked(spec, 0.0)) {
        p.theta_pos_boundary = Angle(0.0);
        p.saturated = true;
    } else if (auto root = inverse_similarity_bisect(spec, target)) {
        p.theta_pos_boundary = Angle(*root);
    } else {
        // T never gets that low on its branch: every theta_pos wins.
        p.theta_pos_boundary = Angle(branch_end);
    }
    p.angular_margin = theta_neg.radians() - p.theta_pos_boundary.radians();
    return p;
}

}  // namespace detail

/// Boundary displacement at one theta_neg, solved by bisection on the
/// monotone branch of T. Nothing when the boundary is unreachable
/// (saturated).
inline std::optional<MarginFieldPoint> boundary_margin(const LossSpec& spec, Angle theta_neg) {
    validate(spec);
    auto p = detail::solve_boundary(spec, theta_neg);
    if (p.saturated) return std::nullopt;
    return p;
}

/// Closed-form boundary position theta_pos for cross-checking bisection;
/// nothing when the family has no closed form or the boundary is pinned.
inline std::optional<double> boundary_position_closed_form(const LossSpec& spec, Angle theta_neg) {
    return inverse_similarity_closed_form(spec, std::cos(theta_neg.radians()));
}

/// boundary_margin over a uniform theta_neg grid on [eps, pi - eps]. Unlike
/// boundary_margin, saturated points are kept (pinned, flagged).
inline std::vector<MarginFieldPoint> margin_field(const LossSpec& spec, int grid_size) {
    if (grid_size < 2) throw PreconditionError("margin_field needs grid_size >= 2");
    validate(spec);
    std::vector<MarginFieldPoint> out;
    out.reserve(static_cast<std::size_t>(grid_size));
    for (double t : uniform_grid(kAngleEpsilon, kPi - kAngleEpsilon, grid_size)) {
        out.push_back(detail::solve_boundary(spec, Angle(t)));
    }
    return out;
}

}  // namespace expface
