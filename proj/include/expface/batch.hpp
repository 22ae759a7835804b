#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "expface/angle.hpp"
#include "expface/error.hpp"
#include "expface/loss_spec.hpp"
#include "expface/similarity.hpp"

namespace expface {

/// Features are rows (N x d), class centers are columns (d x C).
struct BatchInput {
    Eigen::MatrixXd features;
    Eigen::MatrixXd centers;
    std::vector<int> labels;
};

inline void validate(const BatchInput& in) {
    const auto n = in.features.rows();
    const auto d = in.features.cols();
    const auto c = in.centers.cols();
    if (n < 1) throw DomainError("batch needs at least one feature row");
    if (d < 2) throw DomainError("embedding dimension must be >= 2");
    if (c < 2) throw DomainError("need at least two class centers");
    if (in.centers.rows() != d) {
        throw DomainError("centers have dimension " + std::to_string(in.centers.rows()) +
                          ", features have " + std::to_string(d));
    }
    if (static_cast<Eigen::Index>(in.labels.size()) != n) {
        throw DomainError("expected " + std::to_string(n) + " labels, got " +
                          std::to_string(in.labels.size()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = in.labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) {
            throw DomainError("label " + std::to_string(y) + " of row " + std::to_string(i) +
                              " outside [0, " + std::to_string(c) + ")");
        }
        const double norm = in.features.row(i).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw DomainError("feature row " + std::to_string(i) + " has zero or non-finite norm");
        }
    }
    for (Eigen::Index j = 0; j < c; ++j) {
        const double norm = in.centers.col(j).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw DomainError("center column " + std::to_string(j) + " has zero or non-finite norm");
        }
    }
}

/// arccos of the clamped cosine between u and v.
inline Angle angle_between(const Eigen::Ref<const Eigen::VectorXd>& u,
                           const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (u.size() != v.size()) throw DomainError("angle_between: dimension mismatch");
    const double nu = u.norm();
    const double nv = v.norm();
    if (!(nu > 0.0) || !(nv > 0.0)) throw DomainError("angle_between: zero-norm vector");
    const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    return Angle(std::acos(c));
}

namespace detail {

/// Everything the forward pass computes that the backward pass reuses.
struct ForwardPass {
    Eigen::VectorXd feature_norms;  // N
    Eigen::VectorXd center_norms;   // C
    Eigen::MatrixXd unit_features;  // N x d
    Eigen::MatrixXd unit_centers;   // d x C
    Eigen::MatrixXd raw_cosines;    // N x C, unclamped
    Eigen::MatrixXd logits;         // N x C
    Eigen::MatrixXd probabilities;  // N x C
    Eigen::VectorXd positive_angles;  // N, arccos of clamped cosine
    double loss = 0.0;
};

inline ForwardPass forward(const BatchInput& in, const LossSpec& spec) {
    ForwardPass fp;
    const auto n = in.features.rows();
    const auto c = in.centers.cols();
    const double s = spec.scale;

    fp.feature_norms = in.features.rowwise().norm();
    fp.center_norms = in.centers.colwise().norm().transpose();
    fp.unit_features = fp.feature_norms.cwiseInverse().asDiagonal() * in.features;
    fp.unit_centers = in.centers * fp.center_norms.cwiseInverse().asDiagonal();
    fp.raw_cosines = fp.unit_features * fp.unit_centers;
    fp.logits.resize(n, c);
    fp.probabilities.resize(n, c);
    fp.positive_angles.resize(n);

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = in.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < c; ++j) {
            const double cosine = std::clamp(fp.raw_cosines(i, j), -1.0, 1.0);
            if (j == y) {
                const double theta = std::acos(cosine);
                fp.positive_angles(i) = theta;
                // cos(acos(c)) is not always c; skip the round trip where T is
                // affine in the cosine.
                if (spec.family == Family::Plain) {
                    fp.logits(i, j) = s * cosine;
                } else if (spec.family == Family::CosFace) {
                    fp.logits(i, j) = s * (cosine - spec.margin);
                } else {
                    fp.logits(i, j) = s * similarity_unchecked(spec, theta);
                }
            } else {
                fp.logits(i, j) = s * cosine;
            }
        }
        const double shift = fp.logits.row(i).maxCoeff();
        double others = 0.0;  // sum over j != y
        for (Eigen::Index j = 0; j < c; ++j) {
            const double e = std::exp(fp.logits(i, j) - shift);
            fp.probabilities(i, j) = e;
            if (j != y) others += e;
        }
        const double own = fp.probabilities(i, y);
        fp.probabilities.row(i) /= own + others;
        // log1p keeps tiny losses when the positive logit is the largest.
        total += fp.logits(i, y) == shift ? std::log1p(others)
                                          : (shift - fp.logits(i, y)) + std::log(own + others);
    }
    fp.loss = total / static_cast<double>(n);
    return fp;
}

}  // namespace detail

/// Mean margin-softmax cross-entropy over the batch.
///
/// Features and centers are L2-normalized, the positive logit is s*T(theta)
/// and negative logits are s*cos(theta); biases are zero. Uses a max-shifted
/// log-sum-exp. Throws DomainError naming a zero-norm row/column or a bad
/// label, ConfigError for an invalid spec.
inline double batch_loss(const BatchInput& in, const LossSpec& spec) {
    validate(spec);
    validate(in);
    return detail::forward(in, spec).loss;
}

}  // namespace expface
