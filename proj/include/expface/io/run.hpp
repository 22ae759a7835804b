#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "expface/analysis.hpp"
#include "expface/error.hpp"
#include "expface/gradient.hpp"
#include "expface/io/config.hpp"
#include "expface/io/csv.hpp"
#include "expface/io/svg.hpp"
#include "expface/noise_sim.hpp"
#include "expface/similarity.hpp"

namespace expface::io {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitIo = 3,
    kExitDiverged = 4,
    kExitInternal = 5,
};

/// A result the library guarantees turned out false (e.g. closed form and
/// bisection disagree).
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Closed form and bisection must agree this closely in `transition`.
inline constexpr double kTransitionAgreement = 1e-9;

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// `<command>_<family>_m<margin>`, margin in shortest round-trip form.
inline std::string artifact_stem(Command c, const LossSpec& spec) {
    return std::string(command_name(c)) + "_" + std::string(family_name(spec.family)) + "_m" +
           format_short(spec.margin);
}

namespace detail {

struct Artifact {
    std::string stem;
    CsvTable table;
    std::string summary;
    // Columns to chart when SVG output is on; empty x means no chart.
    std::string x;
    std::vector<std::string> y;
};

inline CsvCell optional_cell(const std::optional<double>& v) {
    if (v) return *v;
    return std::string("none");
}

inline std::string kv(std::string_view key, double v) {
    return std::string(key) + "=" + format_short(v);
}

inline Artifact curves_artifact(const RunConfig& cfg, const LossSpec& spec) {
    Artifact a{artifact_stem(cfg.command, spec), CsvTable({"theta", "similarity"}), {}, "theta",
               {"similarity"}};
    for (const auto& s : sweep_similarity(spec, cfg.grid_size)) {
        a.table.add_row({s.theta.radians(), s.value});
    }
    a.summary = "rows=" + std::to_string(a.table.rows().size());
    return a;
}

inline Artifact gradients_artifact(const RunConfig& cfg, const LossSpec& spec) {
    Artifact a{artifact_stem(cfg.command, spec), CsvTable({"theta", "dL_dtheta", "flagged"}), {},
               "theta", {"dL_dtheta"}};
    const auto samples = sweep_gradient(spec, cfg.context_for(spec), cfg.grid_size);
    for (const auto& s : samples) {
        a.table.add_row({s.theta.radians(), s.value, std::int64_t{s.flagged ? 1 : 0}});
    }
    a.summary = "rows=" + std::to_string(a.table.rows().size());
    if (samples.size() >= 3) {
        const auto report = analyze_extrema(samples);
        a.summary += " peaks=" + std::to_string(report.peak_count());
    }
    return a;
}

inline Artifact transition_artifact(const RunConfig& cfg, const LossSpec& spec) {
    Artifact a{artifact_stem(cfg.command, spec),
               CsvTable({"family", "margin", "s", "b", "C", "theta_trans_closed",
                         "theta_trans_bisect", "abs_diff"}),
               {},
               {},
               {}};
    const auto ctx = cfg.context_for(spec);
    const auto closed = transition_angle(spec, ctx);
    const auto bisect = transition_angle_bisect(spec, ctx);
    if (closed.has_value() != bisect.has_value()) {
        throw InvariantError(std::string(family_name(spec.family)) +
                             ": closed form and bisection disagree on existence of a transition angle");
    }
    std::optional<double> c, b, diff;
    if (closed) {
        c = closed->radians();
        b = bisect->radians();
        diff = std::abs(*c - *b);
        if (*diff > kTransitionAgreement) {
            throw InvariantError(std::string(family_name(spec.family)) +
                                 ": transition closed form and bisection differ by " +
                                 format_short(*diff));
        }
    }
    a.table.add_row({std::string(family_name(spec.family)), spec.margin, ctx.scale,
                     ctx.b.radians(), std::int64_t{ctx.class_count}, optional_cell(c),
                     optional_cell(b), optional_cell(diff)});
    a.summary = c ? kv("theta_trans", *c) + " " + kv("abs_diff", *diff) : "theta_trans=none";
    return a;
}

inline Artifact margin_field_artifact(const RunConfig& cfg, const LossSpec& spec) {
    Artifact a{artifact_stem(cfg.command, spec),
               CsvTable({"theta_neg", "theta_pos_boundary", "angular_margin", "saturated",
                         "theta_pos_closed_form"}),
               {},
               "theta_neg",
               {"angular_margin"}};
    int saturated = 0;
    for (const auto& p : margin_field(spec, cfg.grid_size)) {
        saturated += p.saturated ? 1 : 0;
        a.table.add_row({p.theta_neg.radians(), p.theta_pos_boundary.radians(), p.angular_margin,
                         std::int64_t{p.saturated ? 1 : 0},
                         optional_cell(boundary_position_closed_form(spec, p.theta_neg))});
    }
    a.summary = "rows=" + std::to_string(a.table.rows().size()) +
                " saturated=" + std::to_string(saturated);
    return a;
}

inline Artifact gradcheck_artifact(const RunConfig& cfg, const LossSpec& spec) {
    Artifact a{artifact_stem(cfg.command, spec),
               CsvTable({"theta", "analytic", "numeric", "abs_err", "rel_err"}),
               {},
               "theta",
               {"analytic", "numeric"}};
    const auto report = finite_diff_check(spec, cfg.context_for(spec), cfg.grid_size);
    for (std::size_t i = 0; i < report.grid.size(); ++i) {
        const double an = report.analytic[i];
        const double nu = report.numeric[i];
        a.table.add_row({report.grid[i].radians(), an, nu, std::abs(an - nu), relative_error(an, nu)});
    }
    a.summary = "rows=" + std::to_string(a.table.rows().size()) + " " +
                kv("max_rel_err", report.max_rel_err);
    return a;
}

inline std::vector<Artifact> simulate_artifacts(const RunConfig& cfg) {
    if (!cfg.toy) throw ConfigError("simulate requires toy settings");
    const ToySpec& toy = *cfg.toy;
    const auto run = train(toy);
    const std::string stem = artifact_stem(Command::Simulate, toy.loss);

    Artifact traj{stem,
                  CsvTable({"sample_id", "label", "noise", "epoch", "theta_pos", "theta_neg_mean"}),
                  {},
                  {},
                  {}};
    for (const auto& t : run.trajectories) {
        for (std::size_t e = 0; e < t.per_epoch.size(); ++e) {
            traj.table.add_row({std::int64_t{t.sample_id}, std::int64_t{t.label},
                                std::string(noise_name(t.noise)), static_cast<std::int64_t>(e + 1),
                                t.per_epoch[e].theta_pos.radians(),
                                t.per_epoch[e].theta_neg_mean.radians()});
        }
    }
    traj.summary = "samples=" + std::to_string(run.trajectories.size()) +
                   " epochs=" + std::to_string(toy.epochs);

    Artifact drift{stem + "_drift",
                   CsvTable({"noise", "count", "median_theta_pos", "median_theta_neg",
                             "mean_theta_pos", "mean_theta_neg", "lower_left", "lower_right",
                             "upper_left", "upper_right", "mean_abs_dL_dtheta"}),
                   {},
                   {},
                   {}};
    for (const auto& r : drift_statistics(run.trajectories)) {
        drift.table.add_row({std::string(noise_name(r.noise)), std::int64_t{r.count},
                             r.median_theta_pos, r.median_theta_neg, r.mean_theta_pos,
                             r.mean_theta_neg, std::int64_t{r.quadrants.lower_left},
                             std::int64_t{r.quadrants.lower_right},
                             std::int64_t{r.quadrants.upper_left},
                             std::int64_t{r.quadrants.upper_right},
                             final_gradient_magnitude(run.trajectories, toy, r.noise)});
        drift.summary += std::string(drift.summary.empty() ? "" : " ") +
                         std::string(noise_name(r.noise)) + ":median_theta_pos=" +
                         format_short(r.median_theta_pos);
    }

    Artifact loss{stem + "_loss", CsvTable({"epoch", "loss"}), {}, "epoch", {"loss"}};
    for (std::size_t e = 0; e < run.epoch_losses.size(); ++e) {
        loss.table.add_row({static_cast<std::int64_t>(e + 1), run.epoch_losses[e]});
    }
    loss.summary = kv("final_loss", run.epoch_losses.back());
    return {std::move(traj), std::move(drift), std::move(loss)};
}

inline std::vector<Artifact> build_artifacts(const RunConfig& cfg) {
    if (cfg.command == Command::Simulate) return simulate_artifacts(cfg);
    std::vector<Artifact> out;
    for (const auto& spec : cfg.losses) {
        switch (cfg.command) {
            case Command::Curves: out.push_back(curves_artifact(cfg, spec)); break;
            case Command::Gradients: out.push_back(gradients_artifact(cfg, spec)); break;
            case Command::Transition: out.push_back(transition_artifact(cfg, spec)); break;
            case Command::MarginField: out.push_back(margin_field_artifact(cfg, spec)); break;
            case Command::Gradcheck: out.push_back(gradcheck_artifact(cfg, spec)); break;
            case Command::Simulate: break;
        }
    }
    return out;
}

inline void write_artifact(const RunConfig& cfg, const Artifact& a, std::ostream& out) {
    const auto csv_path = cfg.output_dir / (a.stem + ".csv");
    write_csv_file(csv_path, a.table);
    out << csv_path.string() << ": " << a.summary << '\n';
    if (!cfg.emit_svg || a.x.empty()) return;
    std::vector<SvgSeries> series;
    const auto x = a.table.column(a.x);
    for (const auto& name : a.y) series.push_back({name, x, a.table.column(name)});
    const auto svg_path = cfg.output_dir / (a.stem + ".svg");
    write_text_file(svg_path, render_svg(a.stem, a.x, series));
    out << svg_path.string() << ": chart of " << a.table.rows().size() << " points\n";
}

}  // namespace detail

/// Runs one command, writing artifacts into cfg.output_dir in config order
/// and one summary line per artifact to `out`. Returns an ExitCode; errors
/// are described on `err`.
inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        std::error_code ec;
        std::filesystem::create_directories(cfg.output_dir, ec);
        if (ec || !std::filesystem::is_directory(cfg.output_dir)) {
            throw IoError("output_dir " + cfg.output_dir.string() + " is not a usable directory");
        }
        for (const auto& a : detail::build_artifacts(cfg)) detail::write_artifact(cfg, a, out);
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const TrainingError& e) {
        err << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace expface::io
