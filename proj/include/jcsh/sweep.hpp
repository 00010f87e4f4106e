#ifndef JCSH_SWEEP_HPP
#define JCSH_SWEEP_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace jcsh {

struct PointError {
    std::size_t row = 0;
    std::string message;
};

/*
 * Labeled table: the first column is the swept value, the last column is
 * `status` (0 ok, 1 failed). Failed rows keep their place with NaN cells.
 */
struct SweepResult {
    std::string pipeline;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<PointError> errors;
    nlohmann::json extras = nlohmann::json::object();

    std::size_t column_index(const std::string& name) const
    {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end())
            throw Error("no column named '" + name + "' in " + pipeline + " result");
        return static_cast<std::size_t>(it - columns.begin());
    }

    bool has_column(const std::string& name) const
    {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    }

    std::vector<double> column(const std::string& name) const
    {
        const std::size_t c = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows)
            out.push_back(r[c]);
        return out;
    }

    /// Keep only the columns accepted by `keep` (the swept column and status always stay).
    template <typename Pred>
    void filter_columns(Pred keep)
    {
        std::vector<std::size_t> idx;
        for (std::size_t c = 0; c < columns.size(); ++c)
            if (c == 0 || columns[c] == "status" || keep(columns[c]))
                idx.push_back(c);
        std::vector<std::string> cols;
        for (std::size_t c : idx)
            cols.push_back(columns[c]);
        for (auto& r : rows) {
            std::vector<double> nr;
            nr.reserve(idx.size());
            for (std::size_t c : idx)
                nr.push_back(r[c]);
            r = std::move(nr);
        }
        columns = std::move(cols);
    }
};

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_csv(const SweepResult& r, std::ostream& os)
{
    for (std::size_t c = 0; c < r.columns.size(); ++c)
        os << (c ? "," : "") << r.columns[c];
    os << '\n';
    for (const auto& row : r.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            os << (c ? "," : "") << format_double(row[c]);
        os << '\n';
    }
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/*
 * fn(i) for i in [0, count) on `workers` threads. Results come back in
 * index order, so output never depends on the worker count.
 */
template <typename Fn>
auto parallel_map(std::size_t count, int workers, Fn fn) -> std::vector<decltype(fn(std::size_t{}))>
{
    using T = decltype(fn(std::size_t{}));
    std::vector<T> out(count);
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (n == 1) {
        for (std::size_t i = 0; i < count; ++i)
            out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n));
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < count; i = next++)
                    out[i] = fn(i);
            } catch (...) {
                failures[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& f : failures)
        if (f)
            std::rethrow_exception(f);
    return out;
}

enum class ExtremumKind { peak, dip };

struct Resonance {
    double location = 0.0;
    double value = 0.0;
};

/*
 * Extremum of `ys` over `xs` refined by the parabola through the extremal
 * sample and its two neighbours. NaN samples are ignored; an extremum on
 * the edge of the (windowed) grid is an error.
 */
inline Resonance find_resonance(const std::vector<double>& xs, const std::vector<double>& ys, ExtremumKind kind,
                                std::optional<std::pair<double, double>> window = std::nullopt)
{
    if (xs.size() != ys.size())
        throw Error("find_resonance: x and y differ in length");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!window || (xs[i] >= window->first && xs[i] <= window->second))
            idx.push_back(i);
    if (idx.size() < 3)
        throw Error("find_resonance: fewer than three samples in range");

    std::size_t best = 0;
    bool found = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const double v = ys[idx[k]];
        if (std::isnan(v))
            continue;
        const double b = ys[idx[best]];
        if (!found || (kind == ExtremumKind::peak ? v > b : v < b)) {
            best = k;
            found = true;
        }
    }
    if (!found)
        throw Error("find_resonance: no valid samples");
    if (best == 0 || best + 1 == idx.size())
        throw Error("find_resonance: extremum lies on the grid boundary");

    const double x0 = xs[idx[best - 1]], x1 = xs[idx[best]], x2 = xs[idx[best + 1]];
    const double y0 = ys[idx[best - 1]], y1 = ys[idx[best]], y2 = ys[idx[best + 1]];
    if (std::isnan(y0) || std::isnan(y2))
        return {x1, y1};
    // vertex of the interpolating parabola (non-uniform spacing)
    const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
    const double curv = (d12 - d01) / (x2 - x0);
    if (curv == 0.0)
        return {x1, y1};
    const double slope = d01 - curv * (x0 + x1);
    const double xv = -slope / (2.0 * curv);
    const double yv = y1 + (xv - x1) * (d01 + curv * (xv - x0));
    return {xv, yv};
}

inline Resonance find_resonance(const SweepResult& r, const std::string& column, ExtremumKind kind,
                                std::optional<std::pair<double, double>> window = std::nullopt)
{
    return find_resonance(r.column(r.columns.front()), r.column(column), kind, window);
}

} // namespace jcsh

#endif
