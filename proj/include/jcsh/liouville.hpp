#ifndef JCSH_LIOUVILLE_HPP
#define JCSH_LIOUVILLE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "error.hpp"
#include "operators.hpp"

namespace jcsh {

using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;

/*
 * Liouville-space conventions: density matrices are column-stacked,
 * vec(rho)[j * d + i] = rho(i, j), so vec(A rho B) = (B^T (x) A) vec(rho).
 */
inline ComplexVector vectorize(const ComplexMatrix& rho)
{
    return Eigen::Map<const ComplexVector>(rho.data(), rho.size());
}

inline ComplexMatrix unvectorize(const ComplexVector& v, int dim)
{
    if (v.size() != static_cast<Eigen::Index>(dim) * dim)
        throw DimensionError("unvectorize: vector length is not dim^2");
    return Eigen::Map<const ComplexMatrix>(v.data(), dim, dim);
}

/*
 * Lindblad generator acting on column-stacked density matrices.
 *
 * `excitation` optionally labels every Hilbert basis state with an
 * excitation number. Under weak driving the stationary amplitudes fall off
 * geometrically with it, and the solvers use that grading to rescale the
 * linear systems so that many-photon matrix elements keep full relative
 * precision.
 */
class Superoperator {
public:
    Superoperator() = default;
    Superoperator(int hilbert_dim, SparseComplex matrix, std::vector<int> excitation, int collapse_count)
        : dim_(hilbert_dim), matrix_(std::move(matrix)), excitation_(std::move(excitation)),
          collapse_count_(collapse_count)
    {
        if (excitation_.empty())
            excitation_.assign(static_cast<std::size_t>(dim_), 0);
        if (static_cast<int>(excitation_.size()) != dim_)
            throw DimensionError("Superoperator: excitation labels do not match the Hilbert dimension");
        matrix_.makeCompressed();
    }

    int hilbert_dim() const noexcept { return dim_; }
    int liouville_dim() const noexcept { return dim_ * dim_; }
    const SparseComplex& matrix() const noexcept { return matrix_; }
    const std::vector<int>& excitation() const noexcept { return excitation_; }
    int collapse_count() const noexcept { return collapse_count_; }

    /// Excitation grade of Liouville index k = j * d + i, i.e. x_i + x_j.
    int grade(Eigen::Index k) const noexcept
    {
        return excitation_[static_cast<std::size_t>(k % dim_)] + excitation_[static_cast<std::size_t>(k / dim_)];
    }

    ComplexMatrix apply(const ComplexMatrix& rho) const
    {
        if (rho.rows() != dim_ || rho.cols() != dim_)
            throw DimensionError("Superoperator::apply: dimension mismatch");
        return unvectorize(matrix_ * vectorize(rho), dim_);
    }

    double max_norm() const
    {
        double m = 0.0;
        for (Eigen::Index k = 0; k < matrix_.outerSize(); ++k)
            for (SparseComplex::InnerIterator it(matrix_, k); it; ++it)
                m = std::max(m, std::abs(it.value()));
        return m;
    }

    /// S^-1 L S with S = diag(lambda^grade): same spectrum, graded coordinates.
    SparseComplex graded(double lambda) const
    {
        SparseComplex out = matrix_;
        if (lambda == 1.0)
            return out;
        for (Eigen::Index k = 0; k < out.outerSize(); ++k)
            for (SparseComplex::InnerIterator it(out, k); it; ++it)
                it.valueRef() *= std::pow(lambda, grade(it.col()) - grade(it.row()));
        return out;
    }

    Eigen::VectorXd grading_weights(double lambda) const
    {
        Eigen::VectorXd w(liouville_dim());
        for (Eigen::Index k = 0; k < w.size(); ++k)
            w[k] = std::pow(lambda, grade(k));
        return w;
    }

private:
    int dim_ = 0;
    SparseComplex matrix_;
    std::vector<int> excitation_;
    int collapse_count_ = 0;
};

namespace detail {

inline void require_square(const ComplexMatrix& m, int dim, const char* what)
{
    if (m.rows() != dim || m.cols() != dim)
        throw DimensionError(std::string(what) + ": all operators must share one dimension");
}

} // namespace detail

/// -i[H, rho] + sum_c (C rho C^dag - 1/2 {C^dag C, rho}), evaluated directly in matrix form.
inline ComplexMatrix lindblad_rhs(const ComplexMatrix& H, const std::vector<ComplexMatrix>& collapse,
                                  const ComplexMatrix& rho)
{
    const int d = static_cast<int>(H.rows());
    detail::require_square(H, d, "lindblad_rhs");
    detail::require_square(rho, d, "lindblad_rhs");
    const Complex i(0.0, 1.0);
    ComplexMatrix out = -i * (H * rho - rho * H);
    for (const ComplexMatrix& c : collapse) {
        detail::require_square(c, d, "lindblad_rhs");
        const ComplexMatrix cdc = c.adjoint() * c;
        out += c * rho * c.adjoint() - 0.5 * (cdc * rho + rho * cdc);
    }
    return out;
}

/// Sparse Lindblad superoperator. Built from the non-Hermitian K = H - i/2 sum C^dag C:
///   L = -i (I (x) K) + i (K^* (x) I) + sum C^* (x) C.
inline Superoperator liouvillian(const ComplexMatrix& H, const std::vector<ComplexMatrix>& collapse,
                                 std::vector<int> excitation = {})
{
    const int d = static_cast<int>(H.rows());
    detail::require_square(H, d, "liouvillian");
    const Complex i(0.0, 1.0);
    ComplexMatrix K = H;
    for (const ComplexMatrix& c : collapse) {
        detail::require_square(c, d, "liouvillian");
        K -= 0.5 * i * (c.adjoint() * c);
    }

    std::vector<Eigen::Triplet<Complex>> triplets;
    auto at = [d](int row, int col) { return static_cast<Eigen::Index>(col) * d + row; };
    // -i K rho: row (r, j) <- col (c, j), coefficient -i K(r, c)
    // +i rho K^dag: row (r, j) <- col (r, c), coefficient +i conj(K(j, c))
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) {
            const Complex k = K(r, c);
            if (k == Complex(0.0, 0.0))
                continue;
            for (int j = 0; j < d; ++j) {
                triplets.emplace_back(at(r, j), at(c, j), -i * k);
                triplets.emplace_back(at(j, r), at(j, c), i * std::conj(k));
            }
        }
    // C rho C^dag: row (r, s) <- col (p, q), coefficient C(r, p) conj(C(s, q))
    for (const ComplexMatrix& c : collapse) {
        std::vector<std::array<int, 2>> nz;
        for (int r = 0; r < d; ++r)
            for (int p = 0; p < d; ++p)
                if (c(r, p) != Complex(0.0, 0.0))
                    nz.push_back({r, p});
        for (const auto& [r, p] : nz)
            for (const auto& [s, q] : nz)
                triplets.emplace_back(at(r, s), at(p, q), c(r, p) * std::conj(c(s, q)));
    }

    SparseComplex L(static_cast<Eigen::Index>(d) * d, static_cast<Eigen::Index>(d) * d);
    L.setFromTriplets(triplets.begin(), triplets.end());
    L.prune(Complex(0.0, 0.0));
    return Superoperator(d, std::move(L), std::move(excitation), static_cast<int>(collapse.size()));
}

struct SteadyState {
    ComplexMatrix rho;
    /// max |L(rho)| of the returned state
    double residual = 0.0;
    /// max |rho - rho^dag| before symmetrization
    double hermiticity_defect = 0.0;
    double min_eigenvalue = 0.0;
    /// max difference between solutions obtained with two different constraint rows
    double row_choice_defect = 0.0;
    /// amplitude ratio per excitation used to grade the linear system
    double grading = 1.0;

    int dim() const noexcept { return static_cast<int>(rho.rows()); }
};

struct SteadyStateOptions {
    /// Starting guess for the per-excitation amplitude ratio; refined from the first solve.
    double grading_hint = 1.0;
    bool verify_row_independence = true;
    double residual_tolerance = 1e-9;
    double row_tolerance = 1e-7;
};

namespace detail {

inline constexpr double min_grading = 1e-5;

inline double clamp_grading(double lambda)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        return 1.0;
    return std::clamp(lambda, min_grading, 1.0);
}

/// Solve L rho = 0 in graded coordinates, replacing the equation of diagonal element `row_state` by trace = 1.
inline ComplexMatrix solve_stationary(const Superoperator& L, double lambda, int row_state)
{
    const int d = L.hilbert_dim();
    const Eigen::Index n = L.liouville_dim();
    const Eigen::Index replaced = static_cast<Eigen::Index>(row_state) * d + row_state;
    const SparseComplex scaled = L.graded(lambda);
    const Eigen::VectorXd w = L.grading_weights(lambda);

    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(static_cast<std::size_t>(scaled.nonZeros() + d));
    for (Eigen::Index k = 0; k < scaled.outerSize(); ++k)
        for (SparseComplex::InnerIterator it(scaled, k); it; ++it)
            if (it.row() != replaced)
                triplets.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < d; ++i) {
        const Eigen::Index kk = static_cast<Eigen::Index>(i) * d + i;
        triplets.emplace_back(replaced, kk, w[kk]);
    }
    SparseComplex M(n, n);
    M.setFromTriplets(triplets.begin(), triplets.end());
    M.makeCompressed();

    Eigen::SparseLU<SparseComplex, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success)
        throw DegenerateSteadyState("steady_state: constrained Liouvillian is singular; the stationary state is "
                                    "not unique (" + lu.lastErrorMessage() + ")");
    ComplexVector rhs = ComplexVector::Zero(n);
    rhs[replaced] = 1.0;
    ComplexVector x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite())
        throw DegenerateSteadyState("steady_state: stationary solve produced non-finite values; the stationary "
                                    "state is not unique");
    return unvectorize(x.cwiseProduct(w.cast<Complex>()), d);
}

/*
 * Basis state for the cross-check constraint: the last state of the lowest
 * nonzero excitation grade (for the cavity model, the singly excited
 * emitter), so that decoupled sectors each get constrained once. Low grades
 * keep the replaced row well scaled in graded coordinates.
 */
inline int second_constraint_state(const Superoperator& L)
{
    const auto& x = L.excitation();
    int best = -1;
    for (int i = 1; i < L.hilbert_dim(); ++i) {
        const int xi = x[static_cast<std::size_t>(i)];
        if (xi > 0 && (best < 0 || xi <= x[static_cast<std::size_t>(best)]))
            best = i;
    }
    return best < 0 ? L.hilbert_dim() - 1 : best;
}

/// Estimated amplitude ratio per excitation from the populations of the first two grades.
inline double estimate_grading(const Superoperator& L, const ComplexMatrix& rho)
{
    double p0 = 0.0, p1 = 0.0;
    for (int i = 0; i < L.hilbert_dim(); ++i) {
        const int x = L.excitation()[static_cast<std::size_t>(i)];
        if (x == 0)
            p0 += rho(i, i).real();
        else if (x == 1)
            p1 += rho(i, i).real();
    }
    if (!(p0 > 0.0) || !(p1 > 0.0))
        return 1.0;
    return std::sqrt(p1 / p0);
}

} // namespace detail

/*
 * Unique stationary state of L by a direct sparse solve with one diagonal
 * equation replaced by the trace condition. The solve is repeated with the
 * constraint moved to another state; disagreement means the kernel of L is
 * not one-dimensional.
 *
 * The returned rho is Hermitian-symmetrized and trace-normalized; the
 * diagnostics describe the raw solution.
 */
inline SteadyState steady_state(const Superoperator& L, const SteadyStateOptions& opts = {})
{
    if (L.collapse_count() == 0)
        throw DegenerateSteadyState("steady_state: Liouvillian has no collapse operators; the stationary state "
                                    "of a closed system is not unique");
    const int d = L.hilbert_dim();
    const bool graded_model = std::any_of(L.excitation().begin(), L.excitation().end(), [](int x) { return x != 0; });

    double lambda = graded_model ? detail::clamp_grading(opts.grading_hint) : 1.0;
    ComplexMatrix rho = detail::solve_stationary(L, lambda, 0);
    if (graded_model) {
        const double better = detail::clamp_grading(detail::estimate_grading(L, rho));
        if (std::abs(std::log(better / lambda)) > std::log(4.0)) {
            lambda = better;
            rho = detail::solve_stationary(L, lambda, 0);
        }
    }

    SteadyState out;
    out.grading = lambda;
    if (opts.verify_row_independence && d > 1) {
        const ComplexMatrix other = detail::solve_stationary(L, lambda, detail::second_constraint_state(L));
        out.row_choice_defect = (other - rho).cwiseAbs().maxCoeff();
        if (!(out.row_choice_defect <= opts.row_tolerance))
            throw DegenerateSteadyState("steady_state: solution depends on the constraint row (defect " +
                                        std::to_string(out.row_choice_defect) +
                                        "); the stationary state is not unique");
    }

    out.hermiticity_defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    ComplexMatrix herm = 0.5 * (rho + rho.adjoint());
    herm /= herm.trace().real();
    out.rho = std::move(herm);

    out.residual = L.apply(out.rho).cwiseAbs().maxCoeff();
    const double scale = L.max_norm();
    if (!(out.residual <= opts.residual_tolerance * std::max(scale, 1e-300)))
        throw ConvergenceError("steady_state: residual " + std::to_string(out.residual) + " exceeds " +
                               std::to_string(opts.residual_tolerance) + " x ||L|| = " +
                               std::to_string(opts.residual_tolerance * scale));
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(out.rho, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = eig.eigenvalues().minCoeff();
    return out;
}

struct EvolveOptions {
    /// Local error tolerance, applied as both absolute and relative bound in graded coordinates.
    double tolerance = 1e-10;
    /// Per-excitation amplitude ratio used to grade the state vector (1 = no grading).
    double grading = 1.0;
    long max_steps = 50'000'000;
};

/*
 * rho(tau) = exp(L tau) rho0 on a sorted, non-negative grid, by adaptive
 * Dormand-Prince 5(4) steps that land exactly on every grid point.
 */
inline std::vector<ComplexMatrix> evolve(const Superoperator& L, const ComplexMatrix& rho0,
                                         const std::vector<double>& tau_grid, const EvolveOptions& opts = {})
{
    const int d = L.hilbert_dim();
    if (rho0.rows() != d || rho0.cols() != d)
        throw DimensionError("evolve: initial state dimension does not match the Liouvillian");
    for (std::size_t k = 0; k < tau_grid.size(); ++k) {
        if (!(tau_grid[k] >= 0.0))
            throw Error("evolve: tau grid must be non-negative");
        if (k > 0 && tau_grid[k] < tau_grid[k - 1])
            throw Error("evolve: tau grid must be sorted");
    }

    const double lambda = detail::clamp_grading(opts.grading);
    const SparseComplex A = L.graded(lambda);
    const Eigen::VectorXd w = L.grading_weights(lambda);
    const ComplexVector wc = w.cast<Complex>();

    // Dormand-Prince tableau
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    (void)c2, (void)c3, (void)c4, (void)c5;

    ComplexVector y = vectorize(rho0).cwiseQuotient(wc);
    std::vector<ComplexMatrix> out;
    out.reserve(tau_grid.size());

    double rate = 0.0;
    for (Eigen::Index k = 0; k < A.outerSize(); ++k)
        for (SparseComplex::InnerIterator it(A, k); it; ++it)
            rate = std::max(rate, std::abs(it.value()));
    double h = rate > 0.0 ? 0.1 / rate : 1.0;
    double t = 0.0;
    long steps = 0;
    ComplexVector k1 = A * y, k2, k3, k4, k5, k6, k7, ytmp, ynew, err;

    for (double target : tau_grid) {
        while (t < target) {
            const bool last = t + h >= target;
            const double step = last ? target - t : h;
            if (step <= 1e-14 * std::max(1.0, std::abs(t)) && !last)
                throw ConvergenceError("evolve: step size underflow at tau = " + std::to_string(t));
            if (++steps > opts.max_steps)
                throw ConvergenceError("evolve: exceeded the maximum number of steps");

            ytmp = y + step * a21 * k1;
            k2 = A * ytmp;
            ytmp = y + step * (a31 * k1 + a32 * k2);
            k3 = A * ytmp;
            ytmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
            k4 = A * ytmp;
            ytmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            k5 = A * ytmp;
            ytmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            k6 = A * ytmp;
            ynew = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            k7 = A * ynew;
            err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            double ratio = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double sc = opts.tolerance * (1.0 + std::max(std::abs(y[i]), std::abs(ynew[i])));
                ratio = std::max(ratio, std::abs(err[i]) / sc);
            }
            if (!std::isfinite(ratio))
                throw ConvergenceError("evolve: non-finite error estimate at tau = " + std::to_string(t));

            const double factor = ratio == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(ratio, -0.2), 0.2, 5.0);
            if (ratio <= 1.0) {
                t = last ? target : t + step;
                y.swap(ynew);
                k1.swap(k7);
                if (!last || factor < 1.0)
                    h = step * factor;
            } else {
                h = step * factor;
                if (h <= 1e-14 * std::max(1.0, std::abs(t)))
                    throw ConvergenceError("evolve: step size underflow at tau = " + std::to_string(t));
            }
        }
        out.push_back(unvectorize(y.cwiseProduct(wc), d));
    }
    return out;
}

struct CorrelationCurve {
    std::vector<double> values;
    /// largest |Im| / |Re| encountered
    double max_imag_residue = 0.0;
};

namespace detail {

/// Reject a real-valued statistic whose imaginary part is not roundoff.
inline double checked_real(Complex v, double& residue, const char* what, double roundoff = 1e-300)
{
    const double r = std::abs(v.imag()) / std::max(std::abs(v.real()), 1e-300);
    residue = std::max(residue, r);
    if (std::abs(v.imag()) > 1e-8 * std::abs(v.real()) && std::abs(v.imag()) > roundoff) {
        std::ostringstream os;
        os << std::setprecision(3) << what << ": imaginary residue " << v.imag()
           << " is not negligible against the real part " << v.real();
        throw Error(os.str());
    }
    return v.real();
}

/// <X> with a flag telling whether cancellation left only roundoff.
inline bool cancels_to_roundoff(const ComplexMatrix& X, const ComplexMatrix& rho, Complex value)
{
    const double bound = (X.transpose().cwiseAbs().cwiseProduct(rho.cwiseAbs())).sum();
    return !(std::abs(value) > 1e-10 * bound) || !(value.real() > 0.0);
}

} // namespace detail

/*
 * Delayed second-order coherence by quantum regression:
 *   g2(tau) = trace(B^dag B exp(L tau)[B rho B^dag]) / <B^dag B>^2.
 * B is the full output-field matrix.
 */
inline CorrelationCurve g2_tau(const Superoperator& L, const SteadyState& ss, const ComplexMatrix& B,
                               const std::vector<double>& tau_grid, EvolveOptions opts = {})
{
    require_same_dim(B, ss.rho, "g2_tau");
    const ComplexMatrix flux = B.adjoint() * B;
    const Complex n = trace_product(flux, ss.rho);
    if (detail::cancels_to_roundoff(flux, ss.rho, n))
        throw Error("g2_tau: vanishing output flux <B^dag B>; the field cancels the emission completely");
    if (opts.grading == 1.0)
        opts.grading = ss.grading;

    const ComplexMatrix conditioned = B * ss.rho * B.adjoint() / n.real();
    const std::vector<ComplexMatrix> states = evolve(L, conditioned, tau_grid, opts);

    CorrelationCurve out;
    out.values.reserve(states.size());
    for (const ComplexMatrix& x : states)
        out.values.push_back(detail::checked_real(trace_product(flux, x) / n.real(), out.max_imag_residue, "g2_tau"));
    return out;
}

} // namespace jcsh

#endif
