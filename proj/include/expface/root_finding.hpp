#pragma once

#include <cmath>
#include <optional>

namespace expface {

/// Solves f(x) = target for a non-increasing f on [lo, hi] by bisection.
///
/// Returns nothing when target lies outside [f(hi), f(lo)]. Iterates until
/// the bracket stops shrinking in double precision, so the result is as
/// accurate as f's evaluation allows (well under 1e-10).
template <typename F>
std::optional<double> bisect_decreasing(F&& f, double lo, double hi, double target) {
    const double f_lo = f(lo);
    const double f_hi = f(hi);
    if (!(target <= f_lo && target >= f_hi)) return std::nullopt;
    if (f_lo == target) return lo;
    if (f_hi == target) return hi;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (f(mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace expface
