#ifndef JCSH_CLI_HPP
#define JCSH_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "pipelines.hpp"
#include "version.hpp"

#ifndef JCSH_CONFIG_DIR
#define JCSH_CONFIG_DIR "configs"
#endif

namespace jcsh {

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_usage = 2, exit_unconverged = 3 };

inline std::string default_config_name(const std::string& pipeline)
{
    static const std::map<std::string, std::string> names{{"ladder", "fig2"},   {"spectrum", "fig3b"},
                                                          {"power", "fig3e"},   {"g2tau", "fig4"},
                                                          {"bundling", "fig5"}, {"detuning", "figA2"},
                                                          {"fit", "figA1"}};
    return names.at(pipeline);
}

struct CliOptions {
    std::string pipeline;
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    bool strict = false;
    bool check = false;
    int workers = 1;
};

namespace detail {

/// `<stem>.csv` and `<stem>.manifest.json`; `out` may be a directory or a stem.
inline std::filesystem::path output_stem(const CliOptions& o, const RunConfig& c)
{
    namespace fs = std::filesystem;
    const std::string name = fs::path(o.config).stem().string();
    std::string out = o.out.empty() ? c.output : o.out;
    if (out.empty())
        return fs::path(name);
    fs::path p(out);
    if (fs::is_directory(p) || out.back() == '/')
        return p / name;
    if (p.extension() == ".csv")
        p.replace_extension();
    return p;
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot write '" + path.string() + "'");
    f << text;
    f.close();
    if (!f)
        throw Error("failed writing '" + path.string() + "'");
}

inline int run_command(const CliOptions& o, std::ostream& out, std::ostream& err)
{
    RawConfig raw = read_config_file(o.config);
    for (const auto& s : o.overrides)
        apply_override(raw, s);
    const RunConfig cfg = resolve_config(raw);
    if (o.workers < 1)
        throw ConfigError("--workers must be at least 1");

    InvariantLog log;
    PipelineContext ctx{o.workers, o.check ? &log : nullptr};
    RunConfig effective = cfg;
    if (o.check)
        effective.gate = true;
    const PipelineRun run = run_pipeline(o.pipeline, effective, ctx);

    for (const auto& e : run.result.errors)
        err << "jcsh: " << o.pipeline << " row " << e.row << ": " << e.message << '\n';
    const bool unconverged = run.gate.applicable && !run.gate.converged;
    if (unconverged)
        err << "jcsh: unconverged: max relative drift " << format_double(run.gate.max_drift) << " between n_max "
            << run.gate.n_max << " and " << run.gate.n_max_check << '\n';

    if (o.check) {
        const auto violations = log.items();
        for (const auto& v : violations)
            err << "jcsh: invariant: " << v << '\n';
        out << o.pipeline << ": " << run.result.rows.size() << " rows, gate "
            << (run.gate.applicable ? (run.gate.converged ? "converged" : "unconverged") : "not_applicable")
            << ", max drift " << format_double(run.gate.max_drift) << ", " << violations.size()
            << " invariant violations, " << run.result.errors.size() << " point errors\n";
        if (!violations.empty() || !run.result.errors.empty())
            return exit_error;
        return unconverged ? exit_unconverged : exit_ok;
    }

    const auto stem = output_stem(o, cfg);
    const std::filesystem::path csv = stem.string() + ".csv";
    const std::filesystem::path json = stem.string() + ".manifest.json";
    write_file(csv, csv_text(run.result));
    write_file(json, manifest(run).dump(2) + "\n");
    out << "wrote " << csv.string() << " and " << json.string() << '\n';

    if (!run.result.errors.empty())
        return exit_error;
    if (unconverged && o.strict)
        return exit_unconverged;
    return exit_ok;
}

} // namespace detail

inline int cli_main(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Self-homodyned Jaynes-Cummings simulation engine", "jcsh"};
    app.set_version_flag("--version", std::string(engine_name) + " " + engine_version);
    app.require_subcommand(1);
    CliOptions o;
    const std::map<std::string, std::string> help{
        {"ladder", "polariton energies, linewidths and climb energies versus delta"},
        {"spectrum", "transmission versus laser detuning"},
        {"power", "coherent/incoherent emission and g2(0) versus drive"},
        {"g2tau", "two-time g2(tau) for blocking, fano and two-level reference"},
        {"bundling", "n-photon bundle statistics versus laser detuning at strong drive"},
        {"detuning", "weak-excitation g2(0) minima and transmission versus delta"},
        {"fit", "constant plus Lorentzian least-squares fit"}};
    for (const auto& name : pipeline_names()) {
        CLI::App* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", o.config, "config file (default: shipped " + default_config_name(name) + ".cfg)");
        sub->add_option("--out", o.out, "output stem or directory");
        sub->add_option("--set", o.overrides, "override a config key, key=value")->take_all()->allow_extra_args(false);
        sub->add_flag("--strict", o.strict, "exit nonzero if the convergence gate fails");
        sub->add_flag("--check", o.check, "run the convergence gate and invariant assertions only");
        sub->add_option("--workers", o.workers, "concurrent sweep points")->check(CLI::PositiveNumber);
        sub->callback([&o, name] { o.pipeline = name; });
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty())
        reversed.pop_back();
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForVersion&) {
        out << engine_name << " " << engine_version << '\n';
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "jcsh: " << e.what() << '\n';
        return exit_usage;
    }
    if (o.config.empty())
        o.config = std::string(JCSH_CONFIG_DIR) + "/" + default_config_name(o.pipeline) + ".cfg";
    try {
        return detail::run_command(o, out, err);
    } catch (const std::exception& e) {
        err << "jcsh: " << e.what() << '\n';
        return exit_error;
    }
}

inline int cli_main(int argc, char** argv)
{
    return cli_main(std::vector<std::string>(argv, argv + argc));
}

} // namespace jcsh

#endif
