#ifndef JCSH_PIPELINES_HPP
#define JCSH_PIPELINES_HPP

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "fit.hpp"
#include "homodyne.hpp"
#include "jc_model.hpp"
#include "liouville.hpp"
#include "sweep.hpp"
#include "version.hpp"

namespace jcsh {

/// Collects invariant violations from concurrently evaluated sweep points.
class InvariantLog {
public:
    void add(std::string message)
    {
        std::lock_guard lock(mutex_);
        items_.push_back(std::move(message));
    }
    std::vector<std::string> items() const
    {
        std::lock_guard lock(mutex_);
        return items_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<std::string> items_;
};

struct PipelineContext {
    int workers = 1;
    /// when set, steady states and decompositions are checked against their invariants
    InvariantLog* invariants = nullptr;
};

inline constexpr double gate_tolerance = 1e-4;
inline constexpr int gate_extra_levels = 5;

namespace detail {

inline constexpr double nan = std::numeric_limits<double>::quiet_NaN();

inline void check_state(const PipelineContext& ctx, const SteadyState& ss, const std::string& where)
{
    if (!ctx.invariants)
        return;
    if (std::abs(ss.rho.trace() - 1.0) > 1e-10)
        ctx.invariants->add(where + ": trace(rho) deviates from 1");
    if (ss.hermiticity_defect > 1e-10)
        ctx.invariants->add(where + ": hermiticity defect " + format_double(ss.hermiticity_defect));
    if (ss.min_eigenvalue < -1e-8)
        ctx.invariants->add(where + ": negative eigenvalue " + format_double(ss.min_eigenvalue));
}

inline void check_decomposition(const PipelineContext& ctx, const EmissionDecomposition& d, const std::string& where)
{
    if (!ctx.invariants)
        return;
    const double scale = std::max({std::abs(d.total), std::abs(d.coherent), std::abs(d.incoherent), 1e-300});
    if (std::abs(d.total - d.coherent - d.incoherent) > 1e-10 * scale)
        ctx.invariants->add(where + ": total != coherent + incoherent");
    if (d.coherent < -1e-12 * scale || d.incoherent < -1e-12 * scale)
        ctx.invariants->add(where + ": negative emission component");
}

/// Evaluate one row per sweep value; a failing point becomes a NaN row plus an error entry.
inline SweepResult sweep_rows(const std::string& pipeline, const std::string& axis, std::vector<std::string> columns,
                              const std::vector<double>& values, const PipelineContext& ctx,
                              const std::function<std::vector<double>(double)>& point)
{
    struct Row {
        std::vector<double> cells;
        std::string error;
    };
    const std::size_t width = columns.size();
    const auto rows = parallel_map(values.size(), ctx.workers, [&](std::size_t i) {
        Row r;
        try {
            r.cells = point(values[i]);
            if (r.cells.size() != width)
                throw Error("internal: row width mismatch in " + pipeline);
        } catch (const std::exception& e) {
            r.cells.assign(width, nan);
            r.error = e.what();
        }
        return r;
    });

    SweepResult out;
    out.pipeline = pipeline;
    out.columns.push_back(axis);
    for (auto& c : columns)
        out.columns.push_back(std::move(c));
    out.columns.push_back("status");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<double> cells{values[i]};
        cells.insert(cells.end(), rows[i].cells.begin(), rows[i].cells.end());
        cells.push_back(rows[i].error.empty() ? 0.0 : 1.0);
        out.rows.push_back(std::move(cells));
        if (!rows[i].error.empty())
            out.errors.push_back({i, rows[i].error});
    }
    return out;
}

inline void require_axis(const RunConfig& c, const std::string& param, const std::string& pipeline)
{
    if (c.sweep.param != param)
        throw ConfigError(pipeline + " sweeps " + param + ", but the config sweeps " + c.sweep.param);
}

inline double upper_polariton(const SystemParams& p) { return ladder_spectrum(p, 1).manifold(1).upper.energy(); }

inline std::string tag(double x) { return "x" + format_double(x); }

/// First x (log-interpolated) where f(x) >= threshold(x); NaN if never.
inline double first_log_crossing(const std::vector<double>& xs, const std::vector<double>& f,
                                 const std::vector<double>& threshold)
{
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (std::isnan(f[i]) || std::isnan(threshold[i]))
            continue;
        if (f[i] >= threshold[i]) {
            if (i == 0)
                return xs[0];
            const double a = std::log(f[i - 1] / threshold[i - 1]);
            const double b = std::log(f[i] / threshold[i]);
            const double t = (b == a) ? 0.0 : -a / (b - a);
            return std::exp(std::log(xs[i - 1]) + t * (std::log(xs[i]) - std::log(xs[i - 1])));
        }
    }
    return nan;
}

inline nlohmann::json json_number(double v)
{
    if (std::isfinite(v))
        return v;
    return format_double(v);
}

} // namespace detail

/// Interior local extrema, ignoring wiggles smaller than `tol`.
inline int count_interior_extrema(const std::vector<double>& v, double tol = 1e-9)
{
    int count = 0;
    int last_sign = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double d = v[i] - v[i - 1];
        if (std::abs(d) <= tol)
            continue;
        const int s = d > 0 ? 1 : -1;
        if (last_sign != 0 && s != last_sign)
            ++count;
        last_sign = s;
    }
    return count;
}

/// Polariton energies, linewidths and climb energies (n <= 3) over a delta grid.
inline SweepResult pipeline_ladder(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "delta_over_g", "ladder");
    const int n = std::min(3, c.params.n_max);
    std::vector<std::string> cols;
    for (int k = 1; k <= n; ++k)
        for (const char* b : {"UP", "LP"}) {
            cols.push_back(std::string(b) + std::to_string(k) + "_energy_over_g");
            cols.push_back(std::string(b) + std::to_string(k) + "_fwhm_over_g");
        }
    for (const char* b : {"UP", "LP"})
        for (int k = 1; k <= n; ++k)
            cols.push_back(std::string("climb_") + b + std::to_string(k) + "_over_g");
    cols.push_back("gamma_eff_over_g");

    auto r = detail::sweep_rows("ladder", "delta_over_g", cols, c.sweep.values(), ctx, [&](double x) {
        SystemParams p = c.params;
        p.delta = x * p.g;
        const LadderSpectrum s = ladder_spectrum(p, n);
        std::vector<double> row;
        for (const Manifold& m : s.manifolds)
            for (Branch b : {Branch::upper, Branch::lower}) {
                row.push_back(m.branch(b).energy() / p.g);
                row.push_back(m.branch(b).fwhm() / p.g);
            }
        for (Branch b : {Branch::upper, Branch::lower})
            for (const ClimbStep& step : climb_energies(p, b, n))
                row.push_back(step.energy_over_g);
        row.push_back(gamma_eff(p) / p.g);
        return row;
    });
    r.extras["energy_reference"] = "manifold n energies relative to n * omega_a";
    return r;
}

/*
 * Transmission versus laser detuning at a fixed drive. T_fano keeps the
 * partially transmitting element fixed at its optimum for the operating
 * laser (Re UP1 by default); T_fano_local re-calibrates it at every laser
 * detuning.
 */
inline SweepResult pipeline_spectrum(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "laser_over_g", "spectrum");
    if (c.params.drive == 0.0)
        throw ConfigError("spectrum needs a nonzero drive");
    const double geff = c.geff();
    SystemParams operating = c.params;
    operating.laser_detuning = c.operating_laser();
    const Complex fixed_offset = optimal_output_field(operating).offset;

    auto r = detail::sweep_rows(
        "spectrum", "laser_over_g", {"T_blocking_over_geff", "T_fano_over_geff", "T_fano_local_over_geff"},
        c.sweep.values(), ctx, [&](double x) {
            SystemParams p = c.params;
            p.laser_detuning = x * p.g;
            const SteadyState ss = jc_steady_state(p);
            detail::check_state(ctx, ss, "spectrum laser " + format_double(x));
            OutputField fixed = custom_output_field(p, fixed_offset);
            fixed.mode = FieldMode::fano;
            return std::vector<double>{transmission(ss, blocking_output_field(p)) / geff,
                                       transmission(ss, fixed) / geff,
                                       transmission(ss, optimal_output_field(p)) / geff};
        });
    r.extras["operating_laser_over_g"] = operating.laser_detuning / c.params.g;
    r.extras["fixed_offset"] = {fixed_offset.real(), fixed_offset.imag()};
    r.extras["drive_over_geff"] = c.params.drive / geff;
    return r;
}

/// Coherent/incoherent emission and g2(0) versus drive, laser fixed on the operating point.
inline SweepResult pipeline_power(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "drive_over_geff", "power");
    const double geff = c.geff();
    const double laser = c.operating_laser();
    const std::vector<std::string> cols{
        "T_blocking_over_geff", "Ic_blocking_over_geff", "Iinc_blocking_over_geff", "T_fano_over_geff",
        "Ic_fano_over_geff", "Iinc_fano_over_geff", "coherent_fraction_blocking", "coherent_fraction_fano",
        "tls_Ic_over_gamma", "tls_Iinc_over_gamma", "tls_coherent_fraction", "g2_blocking", "g2_fano"};
    auto r = detail::sweep_rows("power", "drive_over_geff", cols, c.sweep.values(), ctx, [&](double x) {
        SystemParams p = c.params;
        p.laser_detuning = laser;
        p.drive = x * geff;
        const SteadyState ss = jc_steady_state(p);
        const std::string where = "power drive " + format_double(x);
        detail::check_state(ctx, ss, where);
        const OutputField blk = blocking_output_field(p), fano = optimal_output_field(p);
        const EmissionDecomposition db = decompose(ss, blk), df = decompose(ss, fano);
        detail::check_decomposition(ctx, db, where + " blocking");
        detail::check_decomposition(ctx, df, where + " fano");
        const TlsReference tls = tls_reference(x * geff, geff);
        detail::check_decomposition(ctx, tls.decomposition, where + " tls");
        return std::vector<double>{db.total / geff,
                                   db.coherent / geff,
                                   db.incoherent / geff,
                                   df.total / geff,
                                   df.coherent / geff,
                                   df.incoherent / geff,
                                   db.coherent_fraction(),
                                   df.coherent_fraction(),
                                   tls.decomposition.coherent / geff,
                                   tls.decomposition.incoherent / geff,
                                   tls.decomposition.coherent_fraction(),
                                   g2_zero(ss, blk),
                                   g2_zero(ss, fano)};
    });

    const auto xs = r.column("drive_over_geff");
    const auto g2f = r.column("g2_fano");
    std::vector<double> twice(g2f.size(), 2.0 * g2f.front());
    r.extras["laser_over_g"] = laser / c.params.g;
    r.extras["gamma_eff"] = geff;
    r.extras["g2_fano_plateau"] = detail::json_number(g2f.front());
    const auto g2b = r.column("g2_blocking");
    r.extras["g2_blocking_min"] = detail::json_number(*std::min_element(g2b.begin(), g2b.end()));
    r.extras["drive_g2_fano_doubles"] = detail::json_number(detail::first_log_crossing(xs, g2f, twice));
    r.extras["drive_incoherent_exceeds_coherent_fano"] = detail::json_number(
        detail::first_log_crossing(xs, r.column("Iinc_fano_over_geff"), r.column("Ic_fano_over_geff")));
    r.extras["drive_incoherent_exceeds_coherent_blocking"] = detail::json_number(
        detail::first_log_crossing(xs, r.column("Iinc_blocking_over_geff"), r.column("Ic_blocking_over_geff")));
    r.extras["tls_drive_mapping"] = "Omega = (E / gamma_eff) * Gamma with Gamma = gamma_eff";
    return r;
}

/// Coherence lifetime of the driven polariton, 2 / gamma_eff: g2(tau) relaxes at gamma_eff / 2.
inline double polariton_lifetime(const SystemParams& p) { return 2.0 / gamma_eff(p); }

/// g2(tau) for blocking, fano and the two-level reference at each configured drive.
inline SweepResult pipeline_g2tau(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "tau_over_lifetime", "g2tau");
    if (c.drives_over_geff.empty())
        throw ConfigError("g2tau needs drives_over_geff");
    if (c.sweep.start < 0.0 || c.sweep.stop < c.sweep.start)
        throw ConfigError("g2tau needs an increasing, non-negative tau grid");
    const double geff = c.geff();
    const double lifetime = polariton_lifetime(c.params);
    const double laser = c.operating_laser();
    const std::vector<double> grid = c.sweep.values();
    std::vector<double> taus;
    for (double x : grid)
        taus.push_back(x * lifetime);

    struct Curves {
        std::vector<double> blocking, fano, tls;
        std::string error;
    };
    const auto curves = parallel_map(c.drives_over_geff.size(), ctx.workers, [&](std::size_t k) {
        Curves out;
        try {
            SystemParams p = c.params;
            p.laser_detuning = laser;
            p.drive = c.drives_over_geff[k] * geff;
            const Superoperator L = jc_liouvillian(p);
            const SteadyState ss = jc_steady_state(p);
            detail::check_state(ctx, ss, "g2tau drive " + format_double(c.drives_over_geff[k]));
            out.blocking = g2_tau(L, ss, blocking_output_field(p), taus).values;
            out.fano = g2_tau(L, ss, optimal_output_field(p), taus).values;
            out.tls = tls_reference(p.drive, geff, taus).g2_tau;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        return out;
    });

    SweepResult r;
    r.pipeline = "g2tau";
    r.columns = {"tau_over_lifetime", "tau_geff"};
    for (double d : c.drives_over_geff)
        for (const char* m : {"g2_blocking_", "g2_fano_", "g2_tls_"})
            r.columns.push_back(m + detail::tag(d));
    r.columns.push_back("status");
    bool failed = false;
    for (std::size_t k = 0; k < curves.size(); ++k)
        if (!curves[k].error.empty()) {
            failed = true;
            r.errors.push_back({0, "drive " + format_double(c.drives_over_geff[k]) + ": " + curves[k].error});
        }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> row{grid[i], taus[i] * geff};
        for (const Curves& cv : curves)
            for (const auto* v : {&cv.blocking, &cv.fano, &cv.tls})
                row.push_back(cv.error.empty() ? (*v)[i] : detail::nan);
        row.push_back(failed ? 1.0 : 0.0);
        r.rows.push_back(std::move(row));
    }
    r.extras["lifetime"] = lifetime;
    r.extras["lifetime_definition"] = "2 / gamma_eff";
    r.extras["laser_over_g"] = laser / c.params.g;
    return r;
}

/// Laser sweep of transmission and the n-photon bundle statistic at several strong drives.
inline SweepResult pipeline_bundling(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "laser_over_g", "bundling");
    if (c.drives_over_geff.empty())
        throw ConfigError("bundling needs drives_over_geff");
    const double geff = c.geff();
    const int nb = c.bundle_size;
    std::vector<std::string> cols;
    for (double d : c.drives_over_geff)
        for (const char* m : {"T_blocking_over_geff_", "T_fano_over_geff_", "g2n_blocking_", "g2n_fano_"})
            cols.push_back(m + detail::tag(d));

    auto r = detail::sweep_rows("bundling", "laser_over_g", cols, c.sweep.values(), ctx, [&](double x) {
        std::vector<double> row;
        for (double d : c.drives_over_geff) {
            SystemParams p = c.params;
            p.laser_detuning = x * p.g;
            p.drive = d * geff;
            const SteadyState ss = jc_steady_state(p);
            detail::check_state(ctx, ss, "bundling laser " + format_double(x));
            const OutputField blk = blocking_output_field(p), fano = optimal_output_field(p);
            row.push_back(transmission(ss, blk) / geff);
            row.push_back(transmission(ss, fano) / geff);
            row.push_back(bundling_g2n(ss, blk, nb));
            row.push_back(bundling_g2n(ss, fano, nb));
        }
        return row;
    });

    SystemParams lossless = c.params;
    lossless.kappa = 0.0;
    lossless.gamma = 0.0;
    const double baseline = ladder_spectrum(lossless, nb).manifold(nb).upper.energy() / nb;
    r.extras["multiphoton_resonance_lossless_over_g"] = baseline / c.params.g;
    nlohmann::json dips = nlohmann::json::array();
    for (double d : c.drives_over_geff) {
        nlohmann::json entry{{"drive_over_geff", d}};
        try {
            const Resonance dip = find_resonance(r, "g2n_fano_" + detail::tag(d), ExtremumKind::dip);
            entry["fano_dip_location_over_g"] = dip.location;
            entry["fano_dip_value"] = dip.value;
        } catch (const Error& e) {
            entry["fano_dip_error"] = e.what();
        }
        const auto blk = r.column("g2n_blocking_" + detail::tag(d));
        double lowest = std::numeric_limits<double>::infinity();
        for (double v : blk)
            if (!std::isnan(v))
                lowest = std::min(lowest, v);
        entry["blocking_min"] = detail::json_number(lowest);
        dips.push_back(entry);
    }
    r.extras["dips"] = dips;
    r.extras["fano_calibration"] = "re-calibrated at every laser detuning";
    return r;
}

/// Weak-excitation minima of g2(0) and polariton transmission versus delta.
inline SweepResult pipeline_detuning(const RunConfig& c, const PipelineContext& ctx = {})
{
    detail::require_axis(c, "delta_over_g", "detuning");
    if (c.drives_over_geff.empty())
        throw ConfigError("detuning needs drives_over_geff");
    auto r = detail::sweep_rows(
        "detuning", "delta_over_g", {"min_g2_blocking", "min_g2_fano", "T_polariton_over_geff", "gamma_eff_over_g"},
        c.sweep.values(), ctx, [&](double x) {
            SystemParams p = c.params;
            p.delta = x * p.g;
            const double geff = gamma_eff(p);
            p.laser_detuning = detail::upper_polariton(p);
            double gb = std::numeric_limits<double>::infinity(), gf = gb;
            for (double d : c.drives_over_geff) {
                p.drive = d * geff;
                const SteadyState ss = jc_steady_state(p);
                detail::check_state(ctx, ss, "detuning delta " + format_double(x));
                gb = std::min(gb, g2_zero(ss, blocking_output_field(p)));
                gf = std::min(gf, g2_zero(ss, optimal_output_field(p)));
            }
            p.drive = c.weak_drive_over_geff * geff;
            const SteadyState weak = jc_steady_state(p);
            const double T = transmission(weak, blocking_output_field(p)) / geff;
            return std::vector<double>{gb, gf, T, geff / p.g};
        });
    r.extras["laser"] = "Re UP1 at each delta";
    return r;
}

namespace detail {

inline std::vector<std::vector<double>> read_csv_columns(const std::string& path, const std::string& xname,
                                                         const std::string& yname)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read fit input '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("fit input '" + path + "' is empty");
    const auto header = split_list(line);
    const auto xi = std::find(header.begin(), header.end(), xname);
    const auto yi = std::find(header.begin(), header.end(), yname);
    if (xi == header.end() || yi == header.end())
        throw ConfigError("fit input lacks column '" + xname + "' or '" + yname + "'");
    std::vector<double> xs, ys;
    while (std::getline(in, line)) {
        if (trim(line).empty())
            continue;
        const auto cells = split_list(line);
        if (cells.size() != header.size())
            throw ConfigError("fit input: ragged row");
        xs.push_back(parse_number(xname, cells[static_cast<std::size_t>(xi - header.begin())]));
        ys.push_back(parse_number(yname, cells[static_cast<std::size_t>(yi - header.begin())]));
    }
    return {xs, ys};
}

} // namespace detail

/// Synthetic constant-plus-Lorentzian data: multiplicative Gaussian noise of relative size `noise`.
inline std::vector<std::vector<double>> synthetic_lorentzian(const LorentzianParams& truth, int points, double span,
                                                             double noise, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> xs, ys;
    for (int i = 0; i < points; ++i) {
        const double x = truth.center - 0.5 * span + span * i / (points - 1);
        xs.push_back(x);
        ys.push_back(truth(x) * (1.0 + noise * normal(rng)));
    }
    return {xs, ys};
}

inline SweepResult pipeline_fit(const RunConfig& c, const PipelineContext& = {})
{
    const bool synthetic = c.fit_input.empty();
    const auto data = synthetic ? synthetic_lorentzian(c.fit_truth, c.fit_points, c.fit_span, c.fit_noise, c.fit_seed)
                                : detail::read_csv_columns(c.fit_input, c.fit_x, c.fit_y);
    const FitResult fit = fit_lorentzian_constant(data[0], data[1]);
    SweepResult r;
    r.pipeline = "fit";
    r.columns = {"x", "y", "y_fit", "residual", "status"};
    for (std::size_t i = 0; i < data[0].size(); ++i) {
        const double yf = fit.params(data[0][i]);
        r.rows.push_back({data[0][i], data[1][i], yf, data[1][i] - yf, 0.0});
    }
    auto ci = [&](std::size_t k) { return detail::json_number(fit.confidence[k]); };
    r.extras["fit"] = {{"offset", fit.params.offset},       {"amplitude", fit.params.amplitude},
                       {"center", fit.params.center},       {"width", fit.params.width},
                       {"residual_norm", fit.residual_norm}, {"iterations", fit.iterations},
                       {"confidence95", {{"offset", ci(0)}, {"amplitude", ci(1)}, {"center", ci(2)}, {"width", ci(3)}}}};
    r.extras["data"] = synthetic ? "synthetic" : c.fit_input;
    if (synthetic)
        r.extras["truth"] = {{"offset", c.fit_truth.offset},
                             {"amplitude", c.fit_truth.amplitude},
                             {"center", c.fit_truth.center},
                             {"width", c.fit_truth.width},
                             {"noise", c.fit_noise},
                             {"seed", c.fit_seed}};
    return r;
}

inline const std::vector<std::string>& pipeline_names()
{
    static const std::vector<std::string> names{"ladder", "spectrum", "power", "g2tau", "bundling", "detuning", "fit"};
    return names;
}

inline SweepResult run_pipeline_once(const std::string& name, const RunConfig& c, const PipelineContext& ctx = {})
{
    if (name == "ladder")
        return pipeline_ladder(c, ctx);
    if (name == "spectrum")
        return pipeline_spectrum(c, ctx);
    if (name == "power")
        return pipeline_power(c, ctx);
    if (name == "g2tau")
        return pipeline_g2tau(c, ctx);
    if (name == "bundling")
        return pipeline_bundling(c, ctx);
    if (name == "detuning")
        return pipeline_detuning(c, ctx);
    if (name == "fit")
        return pipeline_fit(c, ctx);
    throw ConfigError("unknown pipeline '" + name + "'");
}

struct GateReport {
    bool applicable = false;
    int n_max = 0;
    int n_max_check = 0;
    double max_drift = 0.0;
    std::map<std::string, double> per_column;
    bool converged = true;
};

/// Largest relative change of every observable column between two runs of the same grid.
inline GateReport compare_runs(const SweepResult& base, const SweepResult& check)
{
    if (base.columns != check.columns || base.rows.size() != check.rows.size())
        throw Error("convergence gate: runs differ in shape");
    GateReport g;
    g.applicable = true;
    for (std::size_t c = 1; c + 1 < base.columns.size(); ++c) {
        double peak = 0.0;
        for (const auto& row : base.rows)
            if (std::isfinite(row[c]))
                peak = std::max(peak, std::abs(row[c]));
        const double floor = std::max(1e-12 * peak, 1e-300);
        double drift = 0.0;
        for (std::size_t i = 0; i < base.rows.size(); ++i) {
            const double a = base.rows[i][c], b = check.rows[i][c];
            if (std::isnan(a) && std::isnan(b))
                continue;
            if (std::isnan(a) != std::isnan(b)) {
                drift = std::numeric_limits<double>::infinity();
                break;
            }
            drift = std::max(drift, std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor}));
        }
        g.per_column[base.columns[c]] = drift;
        g.max_drift = std::max(g.max_drift, drift);
    }
    g.converged = g.max_drift <= gate_tolerance;
    return g;
}

struct PipelineRun {
    std::string name;
    RunConfig config;
    SweepResult result;
    GateReport gate;
};

inline void apply_column_filters(SweepResult& r, const RunConfig& c)
{
    if (c.mode != "both") {
        const std::string drop = c.mode == "blocking" ? "_fano" : "_blocking";
        r.filter_columns([&](const std::string& name) { return name.find(drop) == std::string::npos; });
    }
    if (!c.stats.empty()) {
        for (const auto& s : c.stats) {
            const bool any = std::any_of(r.columns.begin(), r.columns.end(),
                                         [&](const std::string& col) { return col.rfind(s, 0) == 0; });
            if (!any)
                throw ConfigError("stats entry '" + s + "' matches no column of " + r.pipeline);
        }
        r.filter_columns([&](const std::string& name) {
            return std::any_of(c.stats.begin(), c.stats.end(), [&](const std::string& s) { return name.rfind(s, 0) == 0; });
        });
    }
}

/// Run a pipeline, then (if enabled) rerun it at n_max + 5 and compare every observable.
inline PipelineRun run_pipeline(const std::string& name, const RunConfig& c, const PipelineContext& ctx = {})
{
    if (!c.pipeline.empty() && c.pipeline != name)
        throw ConfigError("config is for pipeline '" + c.pipeline + "', not '" + name + "'");
    PipelineRun run{name, c, run_pipeline_once(name, c, ctx), {}};
    apply_column_filters(run.result, c);
    run.gate.n_max = c.params.n_max;
    if (c.gate && name != "fit") {
        RunConfig bigger = c;
        bigger.params.n_max += gate_extra_levels;
        SweepResult check = run_pipeline_once(name, bigger, ctx);
        apply_column_filters(check, c);
        run.gate = compare_runs(run.result, check);
        run.gate.n_max = c.params.n_max;
        run.gate.n_max_check = bigger.params.n_max;
    }
    return run;
}

inline std::string csv_text(const SweepResult& r)
{
    std::ostringstream os;
    write_csv(r, os);
    return os.str();
}

inline nlohmann::json manifest(const PipelineRun& run)
{
    using nlohmann::json;
    const RunConfig& c = run.config;
    const std::string text = serialize_config(c);
    json m;
    m["engine"] = {{"name", engine_name}, {"version", engine_version}};
    m["pipeline"] = run.name;
    json cfg = json::object();
    for (const auto& [k, v] : parse_config_text(text))
        cfg[k] = v;
    m["config"] = cfg;
    m["config_text"] = text;
    m["config_hash"] = "fnv1a64:" + hex64(fnv1a(text));
    if (run.name != "fit") {
        const SystemParams& p = c.params;
        m["physical"] = {{"g", p.g},
                         {"kappa", p.kappa},
                         {"gamma", p.gamma},
                         {"delta", p.delta},
                         {"laser_detuning", c.laser_on_polariton ? json("up1") : json(p.laser_detuning)},
                         {"operating_laser_detuning", c.operating_laser()},
                         {"drive", p.drive},
                         {"gamma_eff", c.geff()},
                         {"output_fraction", p.output_fraction},
                         {"output_scale", output_scale(p)},
                         {"emitter_dim", HilbertSpace::emitter_dim},
                         {"frame", "rotating at the laser frequency"}};
    }
    m["n_max"] = c.params.n_max;
    m["columns"] = run.result.columns;
    m["rows"] = run.result.rows.size();
    const std::string csv = csv_text(run.result);
    m["csv_hash"] = "fnv1a64:" + hex64(fnv1a(csv));
    m["units"] = {{"flux", "photons per unit time in scale^2 units (scale = sqrt(output_fraction * kappa)), "
                           "divided by gamma_eff where the column says _over_geff"},
                  {"energies", "units of g"},
                  {"drive_over_geff", "E / gamma_eff"}};
    json gate;
    if (!run.gate.applicable) {
        gate = {{"status", c.gate ? "not_applicable" : "disabled"}};
    } else {
        json cols = json::object();
        for (const auto& [k, v] : run.gate.per_column)
            cols[k] = detail::json_number(v);
        gate = {{"status", run.gate.converged ? "converged" : "unconverged"},
                {"n_max", run.gate.n_max},
                {"n_max_check", run.gate.n_max_check},
                {"tolerance", gate_tolerance},
                {"max_relative_drift", detail::json_number(run.gate.max_drift)},
                {"per_column", cols}};
    }
    m["convergence"] = gate;
    json errs = json::array();
    for (const auto& e : run.result.errors)
        errs.push_back({{"row", e.row}, {"message", e.message}});
    m["errors"] = errs;
    m["extras"] = run.result.extras;
    return m;
}

} // namespace jcsh

#endif
