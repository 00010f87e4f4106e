#include <cmath>

#include <gtest/gtest.h>

#include <jcsh/pipelines.hpp>

using namespace jcsh;

namespace {

RunConfig config(const std::string& text) { return parse_config("g = 1\nkappa = g\n" + text); }

} // namespace

TEST(Ladder, MirrorSymmetryAndRabiSplitting)
{
    const RunConfig c = config("kappa = 0\nsweep.param = delta_over_g\nsweep.start = -6\nsweep.stop = 6\nsweep.count = 25\n");
    const SweepResult r = pipeline_ladder(c);
    const auto up = r.column("UP1_energy_over_g"), lp = r.column("LP1_energy_over_g");
    const auto up3 = r.column("UP3_energy_over_g"), lp3 = r.column("LP3_energy_over_g");
    const std::size_t n = up.size();
    for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(up[i], -lp[n - 1 - i], 1e-12);
        EXPECT_NEAR(up3[i], -lp3[n - 1 - i], 1e-12);
    }
    EXPECT_NEAR(up[12] - lp[12], 2.0, 1e-12);
    EXPECT_EQ(r.columns.back(), "status");
    EXPECT_EQ(r.rows.size(), 25u);
}

TEST(Ladder, ClimbIsHarmonicOnCavityBranchAtLargeDetuning)
{
    const RunConfig c = config("sweep.param = delta_over_g\nsweep.start = 5.5\nsweep.stop = 6\nsweep.count = 2\n");
    const SweepResult r = pipeline_ladder(c);
    const double c1 = r.rows[1][r.column_index("climb_LP1_over_g")];
    const double c3 = r.rows[1][r.column_index("climb_LP3_over_g")];
    EXPECT_NEAR(c1, c3, 0.05);
}

TEST(Ladder, WrongAxisIsAConfigError)
{
    EXPECT_THROW(pipeline_ladder(config("sweep.param = laser_over_g\n")), ConfigError);
}

TEST(Spectrum, ResonantDoubletAtPlusMinusG)
{
    const RunConfig c = config("drive = 1e-3geff\nn_max = 4\nsweep.param = laser_over_g\nsweep.start = -2\n"
                               "sweep.stop = 2\nsweep.count = 81\n");
    const SweepResult r = pipeline_spectrum(c);
    const Resonance left = find_resonance(r, "T_blocking_over_geff", ExtremumKind::peak, std::pair{-2.0, 0.0});
    const Resonance right = find_resonance(r, "T_blocking_over_geff", ExtremumKind::peak, std::pair{0.0, 2.0});
    EXPECT_NEAR(right.location, -left.location, 1e-9);
    // weak-drive oracle: linear-response cavity amplitude |w / (w^2 + i kappa w / 2 - g^2)|
    const SystemParams& p = c.params;
    double best_w = 0.0, best_t = -1.0;
    for (int i = 1; i <= 200000; ++i) {
        const double w = 2.0 * p.g * i / 200000.0;
        const double t = std::norm(w / (Complex(w * w - p.g * p.g, 0.5 * p.kappa * w)));
        if (t > best_t) { best_t = t; best_w = w; }
    }
    EXPECT_NEAR(right.location, best_w / p.g, 0.01);
    EXPECT_NEAR(right.location, 1.0, 0.05);
    EXPECT_NEAR(right.value, left.value, 1e-9 * right.value);
}

TEST(Spectrum, EmitterPeakNarrowsAtLargeDetuning)
{
    const RunConfig c = config("delta = 6g\ndrive = 1e-3geff\nn_max = 4\nsweep.param = laser_over_g\n"
                               "sweep.start = -1\nsweep.stop = 7\nsweep.count = 3\n");
    // widths of the two peaks from dense local scans
    auto width = [&](double centre, double half_span) {
        RunConfig local = c;
        local.sweep.start = centre - half_span;
        local.sweep.stop = centre + half_span;
        local.sweep.count = 201;
        const SweepResult r = pipeline_spectrum(local);
        const auto x = r.column("laser_over_g"), t = r.column("T_blocking_over_geff");
        const double peak = *std::max_element(t.begin(), t.end());
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (t[i] >= peak / 2.0) {
                lo = std::min(lo, x[i]);
                hi = std::max(hi, x[i]);
            }
        return hi - lo;
    };
    const LadderSpectrum s = ladder_spectrum(c.params, 1);
    const double emitter = width(s.manifold(1).upper.energy(), 0.1);
    const double cavity = width(s.manifold(1).lower.energy(), 2.0);
    EXPECT_LT(emitter, 0.1 * cavity);
}

TEST(Spectrum, NeedsDrive) { EXPECT_THROW(pipeline_spectrum(config("sweep.param = laser_over_g\n")), ConfigError); }

TEST(Power, LowDriveFractionsApproachTwoLevelSystem)
{
    for (const char* delta : {"0", "3g", "6g"}) {
        const RunConfig c = config(std::string("delta = ") + delta +
                                   "\nn_max = 6\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                                   "sweep.start = 1e-3\nsweep.stop = 1e-2\nsweep.count = 2\n");
        const SweepResult r = pipeline_power(c);
        EXPECT_NEAR(r.rows[0][r.column_index("coherent_fraction_blocking")],
                    r.rows[0][r.column_index("tls_coherent_fraction")], 1e-4)
            << delta;
    }
}

TEST(Power, CoherentScatteringDominatesNearPolaritonLinewidth)
{
    const RunConfig c = config("delta = 6g\nn_max = 8\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                               "sweep.start = 0.5\nsweep.stop = 1\nsweep.count = 2\n");
    const SweepResult r = pipeline_power(c);
    EXPECT_GT(r.rows[1][r.column_index("Ic_blocking_over_geff")], r.rows[1][r.column_index("Iinc_blocking_over_geff")]);
}

TEST(Power, InvariantsAreCheckedWhenRequested)
{
    const RunConfig c = config("delta = 3g\nn_max = 8\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                               "sweep.start = 1e-2\nsweep.stop = 3\nsweep.count = 4\n");
    InvariantLog log;
    pipeline_power(c, PipelineContext{2, &log});
    EXPECT_TRUE(log.items().empty());
}

TEST(G2Tau, CurvesDecorrelateAndGridIsInLifetimes)
{
    const RunConfig c = config("delta = 3g\nn_max = 8\ndrives_over_geff = 0.4\nsweep.param = tau_over_lifetime\n"
                               "sweep.start = 0\nsweep.stop = 8\nsweep.count = 41\n");
    const SweepResult r = pipeline_g2tau(c);
    for (const char* col : {"g2_blocking_x0.4", "g2_fano_x0.4", "g2_tls_x0.4"})
        EXPECT_NEAR(r.column(col).back(), 1.0, 1e-3) << col;
    const double lifetime = 2.0 / c.geff();
    EXPECT_NEAR(r.rows[40][r.column_index("tau_geff")], 8.0 * lifetime * c.geff(), 1e-12);
    // at moderate drive the fano curve climbs from deep antibunching during the first lifetime
    const auto fano = r.column("g2_fano_x0.4");
    EXPECT_LT(fano.front(), 0.1);
    for (std::size_t i = 1; i <= 5; ++i)
        EXPECT_GT(fano[i], fano[i - 1]);
}

TEST(Bundling, PerPointErrorsAreRecordedNotDropped)
{
    const RunConfig c = config("delta = 4g\nkappa = g/2.4\nn_max = 3\nbundle_size = 2\ndrives_over_geff = 3\n"
                               "sweep.param = laser_over_g\nsweep.start = 2\nsweep.stop = 2.5\nsweep.count = 3\n");
    const SweepResult r = pipeline_bundling(c);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_EQ(r.errors.size(), 3u);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.back(), 1.0);
        EXPECT_TRUE(std::isnan(row[1]));
    }
}

TEST(Bundling, ReportsLosslessTwoPhotonResonance)
{
    const RunConfig c = config("delta = 4g\nkappa = g/2.4\nn_max = 6\ndrives_over_geff = 3\n"
                               "sweep.param = laser_over_g\nsweep.start = 2\nsweep.stop = 2.5\nsweep.count = 3\n");
    const SweepResult r = pipeline_bundling(c);
    EXPECT_NEAR(r.extras["multiphoton_resonance_lossless_over_g"].get<double>(), 1.0 + std::sqrt(6.0) / 2.0, 1e-12);
}

TEST(Detuning, AppendixLayout)
{
    const RunConfig c = config("n_max = 5\ndrives_over_geff = 1e-3\nsweep.param = delta_over_g\nsweep.start = 0\n"
                               "sweep.stop = 2\nsweep.count = 3\n");
    const SweepResult r = pipeline_detuning(c);
    EXPECT_EQ(r.columns, (std::vector<std::string>{"delta_over_g", "min_g2_blocking", "min_g2_fano",
                                                   "T_polariton_over_geff", "gamma_eff_over_g", "status"}));
}

TEST(Fit, SyntheticPipelineRecoversTruth)
{
    const RunConfig c = parse_config("fit.noise = 0\nfit.points = 801\nfit.span = 100\n");
    const SweepResult r = pipeline_fit(c);
    EXPECT_NEAR(r.extras["fit"]["offset"].get<double>(), 0.043, 1e-8);
    EXPECT_EQ(r.rows.size(), 801u);
}

TEST(Filters, ModeAndStatsSelectColumns)
{
    RunConfig c = config("n_max = 5\ndelta = 3g\nmode = fano\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                         "sweep.start = 1e-3\nsweep.stop = 1e-2\nsweep.count = 2\ngate = false\n");
    PipelineRun run = run_pipeline("power", c);
    for (const auto& col : run.result.columns)
        EXPECT_EQ(col.find("_blocking"), std::string::npos) << col;
    c.stats = {"g2"};
    run = run_pipeline("power", c);
    EXPECT_EQ(run.result.columns, (std::vector<std::string>{"drive_over_geff", "g2_fano", "status"}));
    c.stats = {"zzz"};
    EXPECT_THROW(run_pipeline("power", c), ConfigError);
}

TEST(Gate, ComparesAgainstLargerCutoff)
{
    const RunConfig c = config("n_max = 8\ndelta = 3g\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                               "sweep.start = 1e-3\nsweep.stop = 0.1\nsweep.count = 3\n");
    const PipelineRun run = run_pipeline("power", c);
    EXPECT_TRUE(run.gate.applicable);
    EXPECT_EQ(run.gate.n_max_check, 13);
    EXPECT_TRUE(run.gate.converged);
    EXPECT_LT(run.gate.max_drift, 1e-4);
}

TEST(Gate, FlagsTruncatedRuns)
{
    const RunConfig c = config("n_max = 2\nsweep.param = drive_over_geff\nsweep.grid = log\n"
                               "sweep.start = 1\nsweep.stop = 3\nsweep.count = 2\n");
    const PipelineRun run = run_pipeline("power", c);
    EXPECT_FALSE(run.gate.converged);
}

TEST(Manifest, ConsistentWithCsvAndConfig)
{
    const RunConfig c = config("n_max = 5\nsweep.param = delta_over_g\nsweep.start = 0\nsweep.stop = 1\nsweep.count = 3\n");
    const PipelineRun run = run_pipeline("ladder", c);
    const nlohmann::json m = manifest(run);
    EXPECT_EQ(m["rows"].get<std::size_t>(), run.result.rows.size());
    EXPECT_EQ(m["columns"].get<std::vector<std::string>>(), run.result.columns);
    EXPECT_EQ(m["csv_hash"].get<std::string>(), "fnv1a64:" + hex64(fnv1a(csv_text(run.result))));
    EXPECT_EQ(m["config_hash"].get<std::string>(), "fnv1a64:" + hex64(fnv1a(serialize_config(c))));
    EXPECT_TRUE(parse_config(m["config_text"].get<std::string>()) == c);
    for (const char* key : {"g", "kappa", "gamma", "delta", "drive", "gamma_eff", "output_scale"})
        EXPECT_TRUE(m["physical"].contains(key)) << key;
    EXPECT_EQ(m["engine"]["name"], "jcsh");
}

TEST(Determinism, WorkerCountDoesNotChangeOutput)
{
    const RunConfig c = config("n_max = 6\ndelta = 3g\ndrive = 0.5geff\nsweep.param = laser_over_g\nsweep.start = 2\n"
                               "sweep.stop = 4\nsweep.count = 9\n");
    const std::string one = csv_text(pipeline_spectrum(c, PipelineContext{1}));
    EXPECT_EQ(csv_text(pipeline_spectrum(c, PipelineContext{4})), one);
    EXPECT_EQ(csv_text(pipeline_spectrum(c, PipelineContext{1})), one);
}

TEST(Extrema, CountsInteriorTurns)
{
    EXPECT_EQ(count_interior_extrema({0, 1, 2, 1, 0, 1}), 2);
    EXPECT_EQ(count_interior_extrema({0, 1, 2, 3}), 0);
    EXPECT_EQ(count_interior_extrema({0, 1, 1, 1, 2}), 0);
}
