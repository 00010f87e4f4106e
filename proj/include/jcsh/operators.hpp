#ifndef JCSH_OPERATORS_HPP
#define JCSH_OPERATORS_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace jcsh {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/*
 * Joint space of one two-level emitter and one truncated cavity mode.
 *
 * Composite index = emitter index * (n_max + 1) + photon number, i.e. the
 * emitter is the slowest-varying factor. Emitter index 0 is the ground
 * state, 1 the excited state. Every operator dump in this project uses
 * this ordering.
 */
struct HilbertSpace {
    int n_max = 0;
    static constexpr int emitter_dim = 2;

    explicit HilbertSpace(int cutoff) : n_max(cutoff)
    {
        if (cutoff < 0)
            throw DimensionError("Fock cutoff must be non-negative");
    }

    int fock_dim() const noexcept { return n_max + 1; }
    int total_dim() const noexcept { return emitter_dim * fock_dim(); }
    int index(int emitter, int photons) const noexcept { return emitter * fock_dim() + photons; }

    /// Number of excitations (photons plus emitter excitation) of each basis state.
    std::vector<int> excitation_numbers() const
    {
        std::vector<int> out(static_cast<std::size_t>(total_dim()));
        for (int e = 0; e < emitter_dim; ++e)
            for (int n = 0; n <= n_max; ++n)
                out[static_cast<std::size_t>(index(e, n))] = e + n;
        return out;
    }
};

inline ComplexMatrix identity(int dim) { return ComplexMatrix::Identity(dim, dim); }

inline ComplexMatrix dagger(const ComplexMatrix& m) { return m.adjoint(); }

/// Cavity annihilation operator on {|0>, ..., |n_max>}: <n-1|a|n> = sqrt(n).
inline ComplexMatrix annihilation(int n_max)
{
    if (n_max < 0)
        throw DimensionError("Fock cutoff must be non-negative");
    ComplexMatrix a = ComplexMatrix::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n)
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

/// Two-level lowering operator |g><e| in the basis {|g>, |e>}.
inline ComplexMatrix lowering_tls()
{
    ComplexMatrix s = ComplexMatrix::Zero(2, 2);
    s(0, 1) = 1.0;
    return s;
}

/// Kronecker product; A is the slow (outer) factor.
inline ComplexMatrix tensor(const ComplexMatrix& A, const ComplexMatrix& B)
{
    const Eigen::Index ra = A.rows(), ca = A.cols(), rb = B.rows(), cb = B.cols();
    ComplexMatrix out(ra * rb, ca * cb);
    for (Eigen::Index i = 0; i < ra; ++i)
        for (Eigen::Index j = 0; j < ca; ++j)
            out.block(i * rb, j * cb, rb, cb) = A(i, j) * B;
    return out;
}

/// Cavity annihilation operator embedded in the joint space.
inline ComplexMatrix cavity_annihilation(const HilbertSpace& space)
{
    return tensor(identity(HilbertSpace::emitter_dim), annihilation(space.n_max));
}

/// Emitter lowering operator embedded in the joint space.
inline ComplexMatrix emitter_lowering(const HilbertSpace& space)
{
    return tensor(lowering_tls(), identity(space.fock_dim()));
}

inline void require_same_dim(const ComplexMatrix& a, const ComplexMatrix& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols())
        throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
}

/// trace(O rho) without forming the product.
inline Complex trace_product(const ComplexMatrix& O, const ComplexMatrix& rho)
{
    require_same_dim(O, rho, "trace_product");
    return (O.transpose().cwiseProduct(rho)).sum();
}

/// <O> = trace(O rho). rho must be Hermitian with unit trace (1e-8).
inline Complex expectation(const ComplexMatrix& O, const ComplexMatrix& rho)
{
    require_same_dim(O, rho, "expectation");
    if (std::abs(rho.trace() - 1.0) > 1e-8)
        throw Error("expectation: density matrix trace differs from 1 by more than 1e-8");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
        throw Error("expectation: density matrix is not Hermitian");
    return trace_product(O, rho);
}

inline ComplexMatrix matrix_power(const ComplexMatrix& m, int k)
{
    ComplexMatrix out = identity(static_cast<int>(m.rows()));
    for (int i = 0; i < k; ++i)
        out = out * m;
    return out;
}

struct Moment {
    Complex value;
    /// j or k exceeds the Fock cutoff, so the truncated ladder biases the value.
    bool truncation_biased = false;
};

/// <(o^dagger)^j o^k> by explicit matrix products. Pass the cutoff to enable the truncation check.
inline Moment normal_moment(const ComplexMatrix& rho, const ComplexMatrix& o, int j, int k, int n_max = -1)
{
    if (j < 0 || k < 0)
        throw Error("normal_moment: exponents must be non-negative");
    require_same_dim(o, rho, "normal_moment");
    const ComplexMatrix op = matrix_power(o.adjoint(), j) * matrix_power(o, k);
    return {trace_product(op, rho), n_max >= 0 && (j > n_max || k > n_max)};
}

/// Projector |v><v| onto a basis vector of the given dimension.
inline ComplexMatrix basis_projector(int dim, int index)
{
    ComplexMatrix p = ComplexMatrix::Zero(dim, dim);
    p(index, index) = 1.0;
    return p;
}

} // namespace jcsh

#endif
