#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "expface/angle.hpp"
#include "expface/batch.hpp"
#include "expface/error.hpp"
#include "expface/loss_spec.hpp"
#include "expface/similarity.hpp"

namespace expface {

/// Single-sample reduction of the batch loss: the C-1 negative logits are
/// replaced by C-1 copies of s*cos(b), b being the mean angle to the
/// negative centers.
struct TransitionContext {
    Angle b = Angle(kPi / 2.0);
    int class_count = 10573;  // identities in CASIA-WebFace
    double scale = 64.0;

    friend bool operator==(const TransitionContext&, const TransitionContext&) = default;
};

inline void validate(const TransitionContext& ctx) {
    if (!(ctx.b.radians() > 0.0 && ctx.b.radians() < kPi)) {
        throw ConfigError("context b must lie in (0, pi)");
    }
    if (ctx.class_count < 2) throw ConfigError("context class_count must be >= 2");
    if (!(ctx.scale > 0.0) || !std::isfinite(ctx.scale)) {
        throw ConfigError("context scale must be positive and finite");
    }
}

/// SphereFace derivatives are undefined where the branch index jumps.
inline constexpr double kBreakpointTolerance = 1e-9;

/// Grid points closer than this to a SphereFace breakpoint are skipped by the
/// finite-difference check.
inline constexpr double kBreakpointExclusion = 1e-4;

/// Breakpoints k*pi/m (k >= 1) strictly inside (0, pi).
inline std::vector<double> sphereface_breakpoints(double m) {
    std::vector<double> out;
    for (int k = 1;; ++k) {
        const double t = k * kPi / m;
        if (!(t < kPi)) break;
        out.push_back(t);
    }
    return out;
}

/// Distance from theta to the nearest SphereFace breakpoint inside (0, pi),
/// or +inf when there is none.
inline double distance_to_breakpoint(double m, double theta) {
    double best = HUGE_VAL;
    for (double t : sphereface_breakpoints(m)) best = std::min(best, std::abs(theta - t));
    return best;
}

namespace detail {

enum class AtBreakpoint { Throw, UseLeftPiece };

/// dT/dtheta for an already-clamped theta.
inline double similarity_derivative(const LossSpec& spec, double theta,
                                    AtBreakpoint policy = AtBreakpoint::Throw) {
    const double m = spec.margin;
    switch (spec.family) {
        case Family::Plain:
        case Family::CosFace:
            return -std::sin(theta);
        case Family::SphereFace: {
            double k = sphereface_branch(m, theta);
            const double nearest = std::round(m * theta / kPi);
            if (nearest >= 1.0 && nearest * kPi / m < kPi &&
                std::abs(theta - nearest * kPi / m) <= kBreakpointTolerance) {
                if (policy == AtBreakpoint::Throw) {
                    throw NonDifferentiableError("sphereface T is not differentiable at theta = " +
                                                 std::to_string(theta));
                }
                k = nearest - 1.0;
            }
            return -sign_of_branch(k) * m * std::sin(m * theta);
        }
        case Family::ArcFace:
            return -std::sin(theta + m);
        case Family::ExpFaceNaive:
            return -std::sin(std::pow(theta, m)) * m * std::pow(theta, m - 1.0);
        case Family::ExpFace: {
            const double u = theta / kPi;
            return -std::sin(kPi * std::pow(u, m)) * m * std::pow(u, m - 1.0);
        }
    }
    return -std::sin(theta);
}

inline double softplus(double z) noexcept {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double logistic(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// -s*T + s*cos(b) + ln(C - 1): the softplus argument of the scalar loss.
inline double scalar_loss_argument(double t_value, const TransitionContext& ctx) {
    return -ctx.scale * t_value + ctx.scale * std::cos(ctx.b.radians()) +
           std::log(static_cast<double>(ctx.class_count) - 1.0);
}

}  // namespace detail

/// Analytic dT/dtheta, evaluated at theta clamped to [eps, pi - eps].
/// Throws NonDifferentiableError within 1e-9 of a SphereFace breakpoint.
inline double dT_dtheta(const LossSpec& spec, Angle theta) {
    validate(spec);
    return detail::similarity_derivative(spec, margin_domain(theta));
}

/// L(theta) = ln(1 + exp(-s T(theta) + s cos b + ln(C - 1))).
inline double scalar_loss(const LossSpec& spec, Angle theta, const TransitionContext& ctx) {
    validate(spec);
    validate(ctx);
    const double t_value = detail::similarity_unchecked(spec, theta.radians());
    return detail::softplus(detail::scalar_loss_argument(t_value, ctx));
}

/// dL/dtheta = -s T'(theta) sigma(-s T(theta) + s cos b + ln(C - 1)).
inline double dL_dtheta(const LossSpec& spec, Angle theta, const TransitionContext& ctx) {
    validate(spec);
    validate(ctx);
    const double t = margin_domain(theta);
    const double slope = detail::similarity_derivative(spec, t);
    const double z = detail::scalar_loss_argument(detail::similarity_unchecked(spec, t), ctx);
    return -ctx.scale * slope * detail::logistic(z);
}

struct BatchGradients {
    Eigen::MatrixXd features;  // N x d, d loss / d feature row
    Eigen::MatrixXd centers;   // d x C, d loss / d center column
    double loss = 0.0;
};

/// Exact gradients of batch_loss w.r.t. the raw (unnormalized) features and
/// centers.
///
/// For a raw vector v with unit direction v_hat and partner unit vector w_hat,
/// d cos / d v = (w_hat - (v_hat . w_hat) v_hat) / |v|. The positive logit
/// additionally carries dT/dcos = T'(theta) / (-sin theta), with theta
/// clamped to [eps, pi - eps]. A positive angle sitting on a SphereFace
/// breakpoint uses the left piece's derivative.
inline BatchGradients backward(const BatchInput& in, const LossSpec& spec) {
    validate(spec);
    validate(in);
    const detail::ForwardPass fp = detail::forward(in, spec);
    const auto n = in.features.rows();
    const double s = spec.scale;

    Eigen::MatrixXd dcos = fp.probabilities;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = in.labels[static_cast<std::size_t>(i)];
        dcos(i, y) -= 1.0;
    }
    dcos *= s / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = in.labels[static_cast<std::size_t>(i)];
        const double theta = std::clamp(fp.positive_angles(i), kAngleEpsilon, kPi - kAngleEpsilon);
        const double slope =
            detail::similarity_derivative(spec, theta, detail::AtBreakpoint::UseLeftPiece);
        dcos(i, y) *= slope / -std::sin(theta);
    }

    const Eigen::MatrixXd grad_unit_features = dcos * fp.unit_centers.transpose();  // N x d
    const Eigen::MatrixXd grad_unit_centers = fp.unit_features.transpose() * dcos;   // d x C

    BatchGradients out;
    out.loss = fp.loss;
    out.features.resize(n, in.features.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = fp.unit_features.row(i);
        const auto g = grad_unit_features.row(i);
        out.features.row(i) = (g - g.dot(u) * u) / fp.feature_norms(i);
    }
    out.centers.resize(in.centers.rows(), in.centers.cols());
    for (Eigen::Index j = 0; j < in.centers.cols(); ++j) {
        const auto w = fp.unit_centers.col(j);
        const auto g = grad_unit_centers.col(j);
        out.centers.col(j) = (g - g.dot(w) * w) / fp.center_norms(j);
    }
    return out;
}

/// Central-difference step used for scalar curves.
inline constexpr double kScalarFiniteDifferenceStep = 1e-6;

struct GradientCheckReport {
    std::vector<Angle> grid;
    std::vector<double> analytic;
    std::vector<double> numeric;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

/// |a - b| / max(|a|, |b|), zero when both vanish.
inline double relative_error(double a, double b) noexcept {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Compares dL_dtheta against a central difference of scalar_loss on a
/// uniform grid over [eps, pi - eps].
///
/// The two end points are skipped (no symmetric stencil fits inside the clamp
/// window), as are SphereFace points within 1e-4 of a breakpoint; the step
/// shrinks near the ends so the stencil stays inside [eps, pi - eps].
inline GradientCheckReport finite_diff_check(const LossSpec& spec, const TransitionContext& ctx,
                                             int grid_size) {
    if (grid_size < 3) throw PreconditionError("finite_diff_check needs grid_size >= 3");
    validate(spec);
    validate(ctx);

    const double lo = kAngleEpsilon;
    const double hi = kPi - kAngleEpsilon;
    const double spacing = (hi - lo) / (grid_size - 1);
    GradientCheckReport report;
    for (int i = 1; i + 1 < grid_size; ++i) {
        const double theta = lo + spacing * i;
        if (spec.family == Family::SphereFace &&
            distance_to_breakpoint(spec.margin, theta) < kBreakpointExclusion) {
            continue;
        }
        const double h = std::min({kScalarFiniteDifferenceStep, theta - lo, hi - theta});
        const double numeric = (scalar_loss(spec, Angle(theta + h), ctx) -
                                scalar_loss(spec, Angle(theta - h), ctx)) /
                               (2.0 * h);
        const double analytic = dL_dtheta(spec, Angle(theta), ctx);
        report.grid.push_back(Angle(theta));
        report.analytic.push_back(analytic);
        report.numeric.push_back(numeric);
        report.max_abs_err = std::max(report.max_abs_err, std::abs(analytic - numeric));
        report.max_rel_err = std::max(report.max_rel_err, relative_error(analytic, numeric));
    }
    return report;
}

}  // namespace expface
