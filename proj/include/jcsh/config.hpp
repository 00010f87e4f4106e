#ifndef JCSH_CONFIG_HPP
#define JCSH_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "fit.hpp"
#include "jc_model.hpp"
#include "sweep.hpp"

namespace jcsh {

enum class GridKind { linear, log };

struct SweepAxis {
    /// delta_over_g | laser_over_g | drive_over_geff | tau_over_lifetime
    std::string param = "delta_over_g";
    GridKind grid = GridKind::linear;
    double start = 0.0;
    double stop = 1.0;
    int count = 2;

    bool operator==(const SweepAxis&) const = default;

    void validate() const
    {
        if (count < 2)
            throw ConfigError("sweep.count must be at least 2");
        if (start == stop)
            throw ConfigError("sweep.start and sweep.stop must differ");
        if (grid == GridKind::log && !(start > 0.0 && stop > 0.0))
            throw ConfigError("a log grid needs positive sweep.start and sweep.stop");
    }

    std::vector<double> values() const
    {
        validate();
        std::vector<double> v(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            const double t = static_cast<double>(i) / (count - 1);
            v[static_cast<std::size_t>(i)] =
                grid == GridKind::linear ? start + t * (stop - start) : start * std::pow(stop / start, t);
        }
        v.back() = stop;
        return v;
    }
};

/*
 * Everything that determines one run. Rates are stored resolved (absolute,
 * in the unit of g). The text form accepts `g` and `geff` as units, e.g.
 * `kappa = g/2.4` or `drive = 1e-3geff`.
 */
struct RunConfig {
    std::string pipeline;
    SystemParams params;
    /// laser on Re(UP1) instead of params.laser_detuning
    bool laser_on_polariton = true;
    SweepAxis sweep;
    std::string mode = "both";
    std::vector<std::string> stats;
    std::string output;
    bool gate = true;

    /// drive points of g2tau / bundling and the weak set minimized over by detuning
    std::vector<double> drives_over_geff{0.4, 5.0};
    /// drive at which the detuning sweep reads off the polariton transmission
    double weak_drive_over_geff = 1e-3;
    int bundle_size = 2;

    std::string fit_input;
    std::string fit_x = "x";
    std::string fit_y = "y";
    LorentzianParams fit_truth{0.043, 50.0, 0.0, 1.0};
    int fit_points = 2001;
    double fit_span = 400.0;
    double fit_noise = 0.0;
    std::uint64_t fit_seed = 1;

    bool operator==(const RunConfig& o) const
    {
        auto lp = [](const LorentzianParams& p) { return std::tie(p.offset, p.amplitude, p.center, p.width); };
        auto sp = [](const SystemParams& p) {
            return std::tie(p.g, p.kappa, p.gamma, p.delta, p.laser_detuning, p.drive, p.n_max, p.output_fraction);
        };
        return pipeline == o.pipeline && sp(params) == sp(o.params) && laser_on_polariton == o.laser_on_polariton &&
               sweep == o.sweep && mode == o.mode && stats == o.stats && output == o.output && gate == o.gate &&
               drives_over_geff == o.drives_over_geff && weak_drive_over_geff == o.weak_drive_over_geff &&
               bundle_size == o.bundle_size && fit_input == o.fit_input && fit_x == o.fit_x && fit_y == o.fit_y &&
               lp(fit_truth) == lp(o.fit_truth) && fit_points == o.fit_points && fit_span == o.fit_span &&
               fit_noise == o.fit_noise && fit_seed == o.fit_seed;
    }

    double geff() const { return gamma_eff(params); }

    /// Laser detuning of the operating point.
    double operating_laser() const
    {
        return laser_on_polariton ? ladder_spectrum(params, 1).manifold(1).upper.energy() : params.laser_detuning;
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& key, const std::string& text)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "': cannot parse number from '" + text + "'");
    }
    if (trim(text.substr(used)) != "")
        throw ConfigError("'" + key + "': trailing characters in '" + text + "'");
    return v;
}

/// NUM | NUM UNIT | NUM*UNIT | UNIT | UNIT/NUM | NUM*UNIT/NUM, UNIT in {g, geff}.
inline double parse_quantity(const std::string& key, const std::string& raw, double g, std::optional<double> geff)
{
    static const std::regex form(R"(^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*\*?\s*(geff|g)\s*(?:/\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?$)");
    const std::string text = trim(raw);
    std::smatch m;
    if (!std::regex_match(text, m, form))
        return parse_number(key, text);
    const double factor = m[1].matched ? parse_number(key, m[1].str()) : 1.0;
    const double divisor = m[3].matched ? parse_number(key, m[3].str()) : 1.0;
    double unit = g;
    if (m[2].str() == "geff") {
        if (!geff)
            throw ConfigError("'" + key + "': unit geff is not available for this key");
        unit = *geff;
    }
    return factor * unit / divisor;
}

inline std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty())
            out.push_back(trim(item));
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "yes" || text == "on")
        return true;
    if (text == "false" || text == "0" || text == "no" || text == "off")
        return false;
    throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

inline const std::vector<std::string>& known_keys()
{
    static const std::vector<std::string> keys{
        "pipeline", "g", "kappa", "gamma", "delta", "laser_detuning", "drive", "n_max", "output_fraction",
        "sweep.param", "sweep.grid", "sweep.start", "sweep.stop", "sweep.count", "mode", "stats", "output",
        "gate", "drives_over_geff", "weak_drive_over_geff", "bundle_size", "fit.input", "fit.x_column",
        "fit.y_column", "fit.offset", "fit.amplitude", "fit.center", "fit.width", "fit.points", "fit.span",
        "fit.noise", "fit.seed"};
    return keys;
}

} // namespace detail

using RawConfig = std::map<std::string, std::string>;

/// key = value lines; `#` starts a comment.
inline RawConfig parse_config_text(const std::string& text)
{
    RawConfig raw;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        raw[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return raw;
}

inline void apply_override(RawConfig& raw, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    raw[detail::trim(assignment.substr(0, eq))] = detail::trim(assignment.substr(eq + 1));
}

inline RunConfig resolve_config(const RawConfig& raw)
{
    using namespace detail;
    for (const auto& [k, v] : raw)
        if (std::find(known_keys().begin(), known_keys().end(), k) == known_keys().end())
            throw ConfigError("unknown config key '" + k + "'");
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        const auto it = raw.find(k);
        if (it == raw.end())
            return std::nullopt;
        return it->second;
    };

    RunConfig c;
    if (auto v = get("pipeline"))
        c.pipeline = *v;
    SystemParams& p = c.params;
    if (auto v = get("g"))
        p.g = parse_number("g", *v);
    if (auto v = get("kappa"))
        p.kappa = parse_quantity("kappa", *v, p.g, std::nullopt);
    if (auto v = get("gamma"))
        p.gamma = parse_quantity("gamma", *v, p.g, std::nullopt);
    if (auto v = get("delta"))
        p.delta = parse_quantity("delta", *v, p.g, std::nullopt);
    if (auto v = get("n_max")) {
        const double n = parse_number("n_max", *v);
        if (n != std::floor(n))
            throw ConfigError("'n_max' must be an integer");
        p.n_max = static_cast<int>(n);
    }
    if (auto v = get("output_fraction"))
        p.output_fraction = parse_number("output_fraction", *v);
    p.validate();
    const double geff = gamma_eff(p);
    if (auto v = get("laser_detuning")) {
        if (*v == "up1") {
            c.laser_on_polariton = true;
            p.laser_detuning = 0.0;
        } else {
            c.laser_on_polariton = false;
            p.laser_detuning = parse_quantity("laser_detuning", *v, p.g, geff);
        }
    }
    if (auto v = get("drive"))
        p.drive = parse_quantity("drive", *v, p.g, geff);
    p.validate();

    if (auto v = get("sweep.param"))
        c.sweep.param = *v;
    if (auto v = get("sweep.grid")) {
        if (*v == "linear")
            c.sweep.grid = GridKind::linear;
        else if (*v == "log")
            c.sweep.grid = GridKind::log;
        else
            throw ConfigError("sweep.grid must be linear or log");
    }
    if (auto v = get("sweep.start"))
        c.sweep.start = parse_number("sweep.start", *v);
    if (auto v = get("sweep.stop"))
        c.sweep.stop = parse_number("sweep.stop", *v);
    if (auto v = get("sweep.count")) {
        const double n = parse_number("sweep.count", *v);
        if (n != std::floor(n))
            throw ConfigError("'sweep.count' must be an integer");
        c.sweep.count = static_cast<int>(n);
    }
    c.sweep.validate();

    if (auto v = get("mode")) {
        if (*v != "both" && *v != "blocking" && *v != "fano")
            throw ConfigError("mode must be blocking, fano or both");
        c.mode = *v;
    }
    if (auto v = get("stats"))
        c.stats = split_list(*v);
    if (auto v = get("output"))
        c.output = *v;
    if (auto v = get("gate"))
        c.gate = parse_bool("gate", *v);
    if (auto v = get("drives_over_geff")) {
        c.drives_over_geff.clear();
        for (const auto& item : split_list(*v))
            c.drives_over_geff.push_back(parse_number("drives_over_geff", item));
    }
    if (auto v = get("weak_drive_over_geff"))
        c.weak_drive_over_geff = parse_number("weak_drive_over_geff", *v);
    if (auto v = get("bundle_size"))
        c.bundle_size = static_cast<int>(parse_number("bundle_size", *v));

    if (auto v = get("fit.input"))
        c.fit_input = *v;
    if (auto v = get("fit.x_column"))
        c.fit_x = *v;
    if (auto v = get("fit.y_column"))
        c.fit_y = *v;
    if (auto v = get("fit.offset"))
        c.fit_truth.offset = parse_number("fit.offset", *v);
    if (auto v = get("fit.amplitude"))
        c.fit_truth.amplitude = parse_number("fit.amplitude", *v);
    if (auto v = get("fit.center"))
        c.fit_truth.center = parse_number("fit.center", *v);
    if (auto v = get("fit.width"))
        c.fit_truth.width = parse_number("fit.width", *v);
    if (auto v = get("fit.points"))
        c.fit_points = static_cast<int>(parse_number("fit.points", *v));
    if (auto v = get("fit.span"))
        c.fit_span = parse_number("fit.span", *v);
    if (auto v = get("fit.noise"))
        c.fit_noise = parse_number("fit.noise", *v);
    if (auto v = get("fit.seed"))
        c.fit_seed = static_cast<std::uint64_t>(std::stoull(*v));
    return c;
}

inline RunConfig parse_config(const std::string& text) { return resolve_config(parse_config_text(text)); }

inline RawConfig read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& c)
{
    auto num = [](double v) { return format_double(v); };
    auto list = [](const auto& items, auto fmt) {
        std::string s;
        for (std::size_t i = 0; i < items.size(); ++i)
            s += (i ? "," : "") + fmt(items[i]);
        return s;
    };
    std::ostringstream os;
    if (!c.pipeline.empty())
        os << "pipeline = " << c.pipeline << '\n';
    os << "g = " << num(c.params.g) << '\n'
       << "kappa = " << num(c.params.kappa) << '\n'
       << "gamma = " << num(c.params.gamma) << '\n'
       << "delta = " << num(c.params.delta) << '\n'
       << "laser_detuning = " << (c.laser_on_polariton ? std::string("up1") : num(c.params.laser_detuning)) << '\n'
       << "drive = " << num(c.params.drive) << '\n'
       << "n_max = " << c.params.n_max << '\n'
       << "output_fraction = " << num(c.params.output_fraction) << '\n'
       << "sweep.param = " << c.sweep.param << '\n'
       << "sweep.grid = " << (c.sweep.grid == GridKind::linear ? "linear" : "log") << '\n'
       << "sweep.start = " << num(c.sweep.start) << '\n'
       << "sweep.stop = " << num(c.sweep.stop) << '\n'
       << "sweep.count = " << c.sweep.count << '\n'
       << "mode = " << c.mode << '\n';
    os << "stats = " << list(c.stats, [](const std::string& s) { return s; }) << '\n';
    os << "output = " << c.output << '\n';
    os << "gate = " << (c.gate ? "true" : "false") << '\n';
    os << "drives_over_geff = " << list(c.drives_over_geff, num) << '\n';
    os << "weak_drive_over_geff = " << num(c.weak_drive_over_geff) << '\n'
       << "bundle_size = " << c.bundle_size << '\n';
    os << "fit.input = " << c.fit_input << '\n';
    os << "fit.x_column = " << c.fit_x << '\n'
       << "fit.y_column = " << c.fit_y << '\n'
       << "fit.offset = " << num(c.fit_truth.offset) << '\n'
       << "fit.amplitude = " << num(c.fit_truth.amplitude) << '\n'
       << "fit.center = " << num(c.fit_truth.center) << '\n'
       << "fit.width = " << num(c.fit_truth.width) << '\n'
       << "fit.points = " << c.fit_points << '\n'
       << "fit.span = " << num(c.fit_span) << '\n'
       << "fit.noise = " << num(c.fit_noise) << '\n'
       << "fit.seed = " << c.fit_seed << '\n';
    return os.str();
}

} // namespace jcsh

#endif
