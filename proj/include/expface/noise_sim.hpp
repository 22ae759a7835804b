#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "expface/angle.hpp"
#include "expface/batch.hpp"
#include "expface/error.hpp"
#include "expface/gradient.hpp"
#include "expface/loss_spec.hpp"

namespace expface {

/// Synthetic noisy-label dataset plus the training run performed on it.
///
/// The defaults are the desk-scale configuration: 16 classes of 20 samples
/// in 32 dimensions, embedded into 8, with 10% Type-I noise per class and
/// two Type-II class pairs, trained with ExpFace (m=0.7, s=64).
struct ToySpec {
    int input_dim = 32;
    int embed_dim = 8;
    int class_count = 16;
    int samples_per_class = 20;
    double type1_fraction = 0.1;
    int type2_pair_count = 2;
    /// Expected norm of the Gaussian perturbation added to the unit identity
    /// direction, i.e. roughly the within-identity angular spread in radians.
    double dispersion = 0.3;
    LossSpec loss = default_spec(Family::ExpFace);
    double learning_rate = 0.001;
    int epochs = 100;
    int batch_size = 16;
    std::uint64_t seed = 7;

    friend bool operator==(const ToySpec&, const ToySpec&) = default;
};

inline void validate(const ToySpec& spec) {
    auto fail = [](const std::string& what) { throw ConfigError("toy spec: " + what); };
    if (spec.input_dim < 2) fail("input_dim must be >= 2");
    if (spec.embed_dim < 2) fail("embed_dim must be >= 2");
    if (spec.class_count < 2) fail("class_count must be >= 2");
    if (spec.samples_per_class < 1) fail("samples_per_class must be >= 1");
    if (!(spec.type1_fraction >= 0.0 && spec.type1_fraction < 1.0)) {
        fail("type1_fraction must lie in [0, 1)");
    }
    if (spec.type2_pair_count < 0 || 2 * spec.type2_pair_count > spec.class_count) {
        fail("type2_pair_count must lie in [0, class_count / 2]");
    }
    if (!(spec.dispersion > 0.0) || !std::isfinite(spec.dispersion)) {
        fail("dispersion must be positive");
    }
    if (!(spec.learning_rate >= 0.0) || !std::isfinite(spec.learning_rate)) {
        fail("learning_rate must be >= 0");
    }
    if (spec.epochs < 1) fail("epochs must be >= 1");
    if (spec.batch_size < 1) fail("batch_size must be >= 1");
    validate(spec.loss);
}

enum class NoiseKind { Clean, TypeI, TypeII };

inline constexpr std::string_view noise_name(NoiseKind k) noexcept {
    switch (k) {
        case NoiseKind::Clean: return "clean";
        case NoiseKind::TypeI: return "type1";
        case NoiseKind::TypeII: return "type2";
    }
    return "unknown";
}

struct ToyDataset {
    Eigen::MatrixXd samples;  // one unit-norm row per sample
    std::vector<int> labels;
    std::vector<NoiseKind> noise;
};

/// Type-I samples per unpaired class.
inline int type1_count(const ToySpec& spec) {
    return static_cast<int>(std::lround(spec.type1_fraction * spec.samples_per_class));
}

namespace detail {

/// Independent engines for data, initialization and batch order.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream};
    return std::mt19937_64(seq);
}

inline Eigen::VectorXd random_unit_vector(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(dim);
    do {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
    } while (v.norm() == 0.0);
    return v.normalized();
}

}  // namespace detail

/// Draws the noisy dataset. Deterministic in spec.seed.
///
/// Each class gets an identity direction on the unit sphere; a sample is the
/// identity plus N(0, (dispersion^2 / input_dim) I), renormalized.
/// Type-I: in every unpaired class, round(type1_fraction * samples_per_class)
/// samples come from fresh identities that belong to no class.
/// Type-II: classes (2p, 2p+1) for p < type2_pair_count share one identity,
/// and all their samples are marked Type-II.
inline ToyDataset generate_dataset(const ToySpec& spec) {
    validate(spec);
    auto rng = detail::make_engine(spec.seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<Eigen::VectorXd> identities;
    identities.reserve(static_cast<std::size_t>(spec.class_count));
    for (int c = 0; c < spec.class_count; ++c) {
        identities.push_back(detail::random_unit_vector(rng, spec.input_dim));
    }
    for (int p = 0; p < spec.type2_pair_count; ++p) {
        identities[static_cast<std::size_t>(2 * p + 1)] = identities[static_cast<std::size_t>(2 * p)];
    }

    const int total = spec.class_count * spec.samples_per_class;
    const int noisy_per_class = type1_count(spec);
    const double sigma = spec.dispersion / std::sqrt(static_cast<double>(spec.input_dim));

    ToyDataset data;
    data.samples.resize(total, spec.input_dim);
    data.labels.reserve(static_cast<std::size_t>(total));
    data.noise.reserve(static_cast<std::size_t>(total));
    int row = 0;
    for (int c = 0; c < spec.class_count; ++c) {
        const bool paired = c < 2 * spec.type2_pair_count;
        for (int i = 0; i < spec.samples_per_class; ++i, ++row) {
            NoiseKind kind = NoiseKind::Clean;
            Eigen::VectorXd base;
            if (paired) {
                kind = NoiseKind::TypeII;
                base = identities[static_cast<std::size_t>(c)];
            } else if (i < noisy_per_class) {
                kind = NoiseKind::TypeI;
                base = detail::random_unit_vector(rng, spec.input_dim);
            } else {
                base = identities[static_cast<std::size_t>(c)];
            }
            Eigen::VectorXd x = base;
            for (int k = 0; k < spec.input_dim; ++k) x(k) += sigma * normal(rng);
            if (x.norm() == 0.0) x = base;
            data.samples.row(row) = x.normalized().transpose();
            data.labels.push_back(c);
            data.noise.push_back(kind);
        }
    }
    return data;
}

/// input -> tanh(W_hidden x) -> W_embed h, no biases, plus class centers.
struct ToyModel {
    Eigen::MatrixXd hidden;   // (2 d) x input_dim
    Eigen::MatrixXd embed;    // d x (2 d)
    Eigen::MatrixXd centers;  // d x C

    Eigen::MatrixXd features(const Eigen::MatrixXd& x) const {
        return (x * hidden.transpose()).array().tanh().matrix() * embed.transpose();
    }
};

/// Initial weights: U(-1/sqrt(fan_in), 1/sqrt(fan_in)); centers uniform on
/// the unit sphere. Deterministic in spec.seed.
inline ToyModel initial_model(const ToySpec& spec) {
    validate(spec);
    auto rng = detail::make_engine(spec.seed, 1);
    const int width = 2 * spec.embed_dim;
    auto uniform_matrix = [&](int rows, int cols) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
        return m;
    };
    ToyModel model;
    model.hidden = uniform_matrix(width, spec.input_dim);
    model.embed = uniform_matrix(spec.embed_dim, width);
    model.centers.resize(spec.embed_dim, spec.class_count);
    for (int c = 0; c < spec.class_count; ++c) {
        model.centers.col(c) = detail::random_unit_vector(rng, spec.embed_dim);
    }
    return model;
}

struct AngularSnapshot {
    Angle theta_pos;       // to the labelled class center
    Angle theta_neg_mean;  // mean angle to every other center
};

struct AngularTrajectory {
    int sample_id = 0;
    int label = 0;
    NoiseKind noise = NoiseKind::Clean;
    std::vector<AngularSnapshot> per_epoch;
};

/// Angles of every sample under `model`.
inline std::vector<AngularSnapshot> measure_angles(const ToyModel& model, const ToyDataset& data) {
    const Eigen::MatrixXd feats = model.features(data.samples);
    const Eigen::VectorXd fnorm = feats.rowwise().norm();
    const Eigen::VectorXd cnorm = model.centers.colwise().norm().transpose();
    const Eigen::MatrixXd cosines =
        fnorm.cwiseInverse().asDiagonal() * feats * model.centers * cnorm.cwiseInverse().asDiagonal();
    const auto classes = model.centers.cols();

    std::vector<AngularSnapshot> out;
    out.reserve(data.labels.size());
    for (Eigen::Index i = 0; i < cosines.rows(); ++i) {
        const int y = data.labels[static_cast<std::size_t>(i)];
        double neg_sum = 0.0;
        double pos = 0.0;
        for (Eigen::Index j = 0; j < classes; ++j) {
            const double theta = std::acos(std::clamp(cosines(i, j), -1.0, 1.0));
            if (j == y) {
                pos = theta;
            } else {
                neg_sum += theta;
            }
        }
        out.push_back({Angle(pos), Angle(neg_sum / static_cast<double>(classes - 1))});
    }
    return out;
}

struct TrainingRun {
    std::vector<AngularTrajectory> trajectories;
    /// batch_loss over the full dataset after each epoch.
    std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent (no momentum, no weight decay) on batch_loss.
///
/// Batch order is reshuffled every epoch from a seed-derived engine, so the
/// whole run is deterministic in spec.seed. Angles and full-dataset loss are
/// recorded after every epoch. Throws TrainingError when the loss stops
/// being finite.
inline TrainingRun train(const ToySpec& spec) {
    validate(spec);
    const ToyDataset data = generate_dataset(spec);
    ToyModel model = initial_model(spec);
    auto shuffle_rng = detail::make_engine(spec.seed, 2);

    const auto total = static_cast<int>(data.labels.size());
    const double lr = spec.learning_rate;

    TrainingRun run;
    run.trajectories.resize(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        auto& t = run.trajectories[static_cast<std::size_t>(i)];
        t.sample_id = i;
        t.label = data.labels[static_cast<std::size_t>(i)];
        t.noise = data.noise[static_cast<std::size_t>(i)];
        t.per_epoch.reserve(static_cast<std::size_t>(spec.epochs));
    }

    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (int start = 0; start < total; start += spec.batch_size) {
            const int count = std::min(spec.batch_size, total - start);
            Eigen::MatrixXd x(count, spec.input_dim);
            BatchInput batch;
            batch.labels.resize(static_cast<std::size_t>(count));
            for (int r = 0; r < count; ++r) {
                const int idx = order[static_cast<std::size_t>(start + r)];
                x.row(r) = data.samples.row(idx);
                batch.labels[static_cast<std::size_t>(r)] = data.labels[static_cast<std::size_t>(idx)];
            }
            const Eigen::MatrixXd hidden = (x * model.hidden.transpose()).array().tanh().matrix();
            batch.features = hidden * model.embed.transpose();
            batch.centers = model.centers;

            BatchGradients g;
            try {
                g = backward(batch, spec.loss);
            } catch (const DomainError& e) {
                throw TrainingError(epoch, e.what());
            }
            if (!std::isfinite(g.loss)) throw TrainingError(epoch, "non-finite batch loss");

            const Eigen::MatrixXd grad_embed = g.features.transpose() * hidden;  // d x width
            const Eigen::MatrixXd grad_hidden_act =
                ((g.features * model.embed).array() * (1.0 - hidden.array().square())).matrix();
            const Eigen::MatrixXd grad_hidden = grad_hidden_act.transpose() * x;  // width x D

            model.hidden -= lr * grad_hidden;
            model.embed -= lr * grad_embed;
            model.centers -= lr * g.centers;
        }

        BatchInput all{model.features(data.samples), model.centers, data.labels};
        double loss = 0.0;
        try {
            loss = batch_loss(all, spec.loss);
        } catch (const DomainError& e) {
            throw TrainingError(epoch, e.what());
        }
        if (!std::isfinite(loss)) throw TrainingError(epoch, "non-finite loss");
        run.epoch_losses.push_back(loss);

        const auto snapshot = measure_angles(model, data);
        for (int i = 0; i < total; ++i) {
            run.trajectories[static_cast<std::size_t>(i)].per_epoch.push_back(
                snapshot[static_cast<std::size_t>(i)]);
        }
    }
    return run;
}

/// Occupancy of the four (theta_pos, theta_neg_mean) quadrants split at pi/2.
/// "upper" refers to theta_neg_mean > pi/2, "right" to theta_pos > pi/2.
struct QuadrantCounts {
    int lower_left = 0;
    int lower_right = 0;
    int upper_left = 0;
    int upper_right = 0;
};

struct DriftRow {
    NoiseKind noise = NoiseKind::Clean;
    int count = 0;
    double median_theta_pos = 0.0;
    double median_theta_neg = 0.0;
    double mean_theta_pos = 0.0;
    double mean_theta_neg = 0.0;
    QuadrantCounts quadrants;
};

namespace detail {

inline double median(std::vector<double> v) {
    const auto n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

}  // namespace detail

/// Final-epoch statistics per noise kind, one row for each kind present, in
/// Clean, TypeI, TypeII order.
inline std::vector<DriftRow> drift_statistics(std::span<const AngularTrajectory> trajectories) {
    if (trajectories.empty()) throw PreconditionError("drift_statistics: no trajectories");
    std::vector<DriftRow> rows;
    for (NoiseKind kind : {NoiseKind::Clean, NoiseKind::TypeI, NoiseKind::TypeII}) {
        std::vector<double> pos;
        std::vector<double> neg;
        DriftRow row;
        row.noise = kind;
        for (const auto& t : trajectories) {
            if (t.noise != kind) continue;
            if (t.per_epoch.empty()) {
                throw PreconditionError("drift_statistics: trajectory " +
                                        std::to_string(t.sample_id) + " is empty");
            }
            const auto& last = t.per_epoch.back();
            const double p = last.theta_pos.radians();
            const double q = last.theta_neg_mean.radians();
            pos.push_back(p);
            neg.push_back(q);
            const bool right = p > kPi / 2.0;
            const bool upper = q > kPi / 2.0;
            auto& cell = upper ? (right ? row.quadrants.upper_right : row.quadrants.upper_left)
                               : (right ? row.quadrants.lower_right : row.quadrants.lower_left);
            ++cell;
        }
        if (pos.empty()) continue;
        row.count = static_cast<int>(pos.size());
        row.mean_theta_pos = std::accumulate(pos.begin(), pos.end(), 0.0) / row.count;
        row.mean_theta_neg = std::accumulate(neg.begin(), neg.end(), 0.0) / row.count;
        row.median_theta_pos = detail::median(std::move(pos));
        row.median_theta_neg = detail::median(std::move(neg));
        rows.push_back(row);
    }
    return rows;
}

/// Mean |dL/dtheta| at the final (theta_pos, theta_neg_mean) of the samples
/// of one noise kind, each evaluated in its own context b = theta_neg_mean,
/// C = class_count, s = loss scale. Zero when no sample has that kind.
inline double final_gradient_magnitude(std::span<const AngularTrajectory> trajectories,
                                       const ToySpec& spec, NoiseKind kind) {
    double sum = 0.0;
    int count = 0;
    for (const auto& t : trajectories) {
        if (t.noise != kind || t.per_epoch.empty()) continue;
        const auto& last = t.per_epoch.back();
        TransitionContext ctx;
        ctx.b = Angle(std::clamp(last.theta_neg_mean.radians(), kAngleEpsilon, kPi - kAngleEpsilon));
        ctx.class_count = spec.class_count;
        ctx.scale = spec.loss.scale;
        detail::AtBreakpoint policy = detail::AtBreakpoint::UseLeftPiece;
        const double theta = margin_domain(last.theta_pos);
        const double slope = detail::similarity_derivative(spec.loss, theta, policy);
        const double z =
            detail::scalar_loss_argument(detail::similarity_unchecked(spec.loss, theta), ctx);
        sum += std::abs(ctx.scale * slope * detail::logistic(z));
        ++count;
    }
    return count == 0 ? 0.0 : sum / count;
}

}  // namespace expface
