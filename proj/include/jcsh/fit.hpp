#ifndef JCSH_FIT_HPP
#define JCSH_FIT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace jcsh {

/// y = offset + amplitude * (width/2)^2 / ((x - center)^2 + (width/2)^2); width is the FWHM.
struct LorentzianParams {
    double offset = 0.0;
    double amplitude = 0.0;
    double center = 0.0;
    double width = 1.0;

    double operator()(double x) const
    {
        const double h = 0.5 * width;
        const double dx = x - center;
        return offset + amplitude * h * h / (dx * dx + h * h);
    }
};

struct FitResult {
    LorentzianParams params;
    /// sqrt of the residual sum of squares
    double residual_norm = 0.0;
    int iterations = 0;
    /// 95 % half-widths from the local curvature (infinite where the data do not constrain a parameter),
    /// ordered offset, amplitude, center, width
    std::array<double, 4> confidence{};
};

namespace detail {

inline LorentzianParams lorentzian_guess(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> sorted(y.begin(), y.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    LorentzianParams g;
    g.offset = sorted[sorted.size() / 2];
    std::size_t peak = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
        if (std::abs(y[i] - g.offset) > std::abs(y[peak] - g.offset))
            peak = i;
    g.amplitude = y[peak] - g.offset;
    g.center = x[peak];
    g.width = (x.back() - x.front()) / 10.0;
    if (g.amplitude == 0.0)
        return g;

    const double half = 0.5 * std::abs(g.amplitude);
    auto crossing = [&](std::ptrdiff_t step) {
        std::ptrdiff_t i = static_cast<std::ptrdiff_t>(peak);
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
        while (i + step >= 0 && i + step < n && std::abs(y[static_cast<std::size_t>(i + step)] - g.offset) > half)
            i += step;
        if (i + step < 0 || i + step >= n)
            return x[static_cast<std::size_t>(i)];
        const double d0 = std::abs(y[static_cast<std::size_t>(i)] - g.offset);
        const double d1 = std::abs(y[static_cast<std::size_t>(i + step)] - g.offset);
        const double t = d0 == d1 ? 0.5 : (d0 - half) / (d0 - d1);
        return x[static_cast<std::size_t>(i)] + t * (x[static_cast<std::size_t>(i + step)] - x[static_cast<std::size_t>(i)]);
    };
    const double w = crossing(1) - crossing(-1);
    if (w > 0.0)
        g.width = w;
    return g;
}

} // namespace detail

/*
 * Levenberg-Marquardt least squares for a constant plus a Lorentzian.
 * Deterministic for given data and starting point. Throws ConvergenceError
 * with the last residual if the iteration budget runs out.
 */
inline FitResult fit_lorentzian_constant(std::span<const double> x, std::span<const double> y,
                                         std::optional<LorentzianParams> initial_guess = std::nullopt,
                                         int max_iterations = 1000)
{
    if (x.size() != y.size())
        throw Error("fit_lorentzian_constant: x and y differ in length");
    if (x.size() < 5)
        throw Error("fit_lorentzian_constant: need at least 5 points");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1]))
            throw Error("fit_lorentzian_constant: x must be strictly increasing");

    const Eigen::Index m = static_cast<Eigen::Index>(x.size());
    LorentzianParams current = initial_guess.value_or(detail::lorentzian_guess(x, y));
    if (current.width == 0.0)
        current.width = (x.back() - x.front()) / 10.0;

    auto residuals = [&](const LorentzianParams& p) {
        Eigen::VectorXd r(m);
        for (Eigen::Index i = 0; i < m; ++i)
            r[i] = y[static_cast<std::size_t>(i)] - p(x[static_cast<std::size_t>(i)]);
        return r;
    };
    auto jacobian = [&](const LorentzianParams& p) {
        Eigen::MatrixXd J(m, 4);
        const double h = 0.5 * p.width;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double dx = x[static_cast<std::size_t>(i)] - p.center;
            const double D = dx * dx + h * h;
            J(i, 0) = 1.0;
            J(i, 1) = h * h / D;
            J(i, 2) = p.amplitude * h * h * 2.0 * dx / (D * D);
            J(i, 3) = p.amplitude * h * dx * dx / (D * D);
        }
        return J;
    };
    auto pack = [](const LorentzianParams& p) { return Eigen::Vector4d(p.offset, p.amplitude, p.center, p.width); };
    auto unpack = [](const Eigen::Vector4d& v) { return LorentzianParams{v[0], v[1], v[2], v[3]}; };

    double scale = 0.0;
    for (double v : y)
        scale += v * v;
    const double floor = 1e-28 * std::max(scale, 1e-300);

    Eigen::VectorXd r = residuals(current);
    double rss = r.squaredNorm();
    double mu = 1e-3;
    int it = 0;
    bool converged = rss <= floor;
    while (!converged && it < max_iterations) {
        ++it;
        const Eigen::MatrixXd J = jacobian(current);
        const Eigen::Matrix4d JtJ = J.transpose() * J;
        const Eigen::Vector4d Jtr = J.transpose() * r;
        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix4d A = JtJ;
            for (int k = 0; k < 4; ++k)
                A(k, k) += mu * std::max(JtJ(k, k), 1e-30);
            const Eigen::Vector4d step = A.ldlt().solve(Jtr);
            const LorentzianParams trial = unpack(pack(current) + step);
            const Eigen::VectorXd rt = residuals(trial);
            const double rss_t = rt.squaredNorm();
            if (std::isfinite(rss_t) && rss_t <= rss) {
                const double drop = rss - rss_t;
                const bool small_step = (step.cwiseAbs().array() <=
                                         1e-13 * (pack(current).cwiseAbs().array() + 1e-13)).all();
                current = trial;
                r = rt;
                rss = rss_t;
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                converged = rss <= floor || drop <= 1e-15 * rss || small_step;
            } else {
                mu *= 4.0;
                if (mu > 1e16) {
                    // no downhill step exists at this point: a stationary point of the residual
                    accepted = true;
                    converged = true;
                }
            }
        }
    }
    if (!converged)
        throw ConvergenceError("fit_lorentzian_constant: no convergence after " + std::to_string(max_iterations) +
                               " iterations (residual norm " + std::to_string(std::sqrt(rss)) + ")");

    current.width = std::abs(current.width);
    FitResult out;
    out.params = current;
    out.residual_norm = std::sqrt(rss);
    out.iterations = it;

    const Eigen::MatrixXd J = jacobian(current);
    const Eigen::Matrix4d JtJ = J.transpose() * J;
    const double dof = static_cast<double>(std::max<Eigen::Index>(m - 4, 1));
    const double sigma2 = rss / dof;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(JtJ);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
    std::array<bool, 4> free{};
    for (int k = 0; k < 4; ++k) {
        const Eigen::Vector4d v = eig.eigenvectors().col(k);
        if (eig.eigenvalues()[k] > 1e-14 * top)
            cov += v * v.transpose() / eig.eigenvalues()[k];
        else
            for (int i = 0; i < 4; ++i)
                free[static_cast<std::size_t>(i)] = free[static_cast<std::size_t>(i)] || std::abs(v[i]) > 1e-6;
    }
    for (int i = 0; i < 4; ++i)
        out.confidence[static_cast<std::size_t>(i)] = free[static_cast<std::size_t>(i)]
                                                          ? std::numeric_limits<double>::infinity()
                                                          : 1.96 * std::sqrt(sigma2 * cov(i, i));
    return out;
}

} // namespace jcsh

#endif
