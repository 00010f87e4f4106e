#ifndef JCSH_HOMODYNE_HPP
#define JCSH_HOMODYNE_HPP

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "error.hpp"
#include "jc_model.hpp"
#include "liouville.hpp"
#include "operators.hpp"

namespace jcsh {

enum class FieldMode { blocking, fano, custom };

inline const char* to_string(FieldMode m)
{
    switch (m) {
    case FieldMode::blocking:
        return "blocking";
    case FieldMode::fano:
        return "fano";
    case FieldMode::custom:
        return "custom";
    }
    return "?";
}

/*
 * Output field b = scale * op + offset * I.
 *
 * For the waveguide output `op` is the cavity annihilation operator and
 * offset = t_B alpha is the coherent light routed through the partially
 * transmitting element. `fock_cutoff` is the cutoff behind `op` when it is a
 * ladder operator (-1 otherwise) and guards high-order moments.
 */
struct OutputField {
    double scale = 1.0;
    ComplexMatrix op;
    Complex offset{0.0, 0.0};
    FieldMode mode = FieldMode::blocking;
    int fock_cutoff = -1;

    ComplexMatrix matrix() const { return scale * op + offset * identity(static_cast<int>(op.rows())); }

    OutputField rescaled(Complex c) const
    {
        // the scale is real in this representation, so a complex factor rotates op
        OutputField f = *this;
        f.scale = scale * std::abs(c);
        f.op = op * (c / std::abs(c));
        f.offset = offset * c;
        return f;
    }
};

struct EmissionDecomposition {
    double total = 0.0;
    double coherent = 0.0;
    double incoherent = 0.0;

    double coherent_fraction() const { return coherent / total; }
};

/// sqrt(output_fraction * kappa): flux prefactor of the cavity output channel.
inline double output_scale(const SystemParams& p) { return std::sqrt(p.output_fraction * p.kappa); }

/// Grading hint for weakly driven models: roughly the cavity amplitude per excitation.
inline double drive_grading_hint(const SystemParams& p)
{
    const double rate = 0.5 * (p.kappa + p.gamma);
    if (!(rate > 0.0))
        return 1.0;
    return std::min(1.0, std::abs(p.drive) / rate);
}

inline Superoperator jc_liouvillian(const SystemParams& p)
{
    return liouvillian(hamiltonian(p), collapse_operators(p), p.space().excitation_numbers());
}

inline SteadyState jc_steady_state(const SystemParams& p, SteadyStateOptions opts = {})
{
    if (opts.grading_hint == 1.0)
        opts.grading_hint = drive_grading_hint(p);
    return steady_state(jc_liouvillian(p), opts);
}

/// Stationary <a> of a driven linear cavity: -iE / (kappa/2 - i dL).
inline Complex analytic_reference_amplitude(const SystemParams& p)
{
    const Complex i(0.0, 1.0);
    return -i * p.drive / (p.kappa / 2.0 - i * p.laser_detuning);
}

/// Fock cutoff for the bare cavity: at least n_max, and wide enough for its coherent state.
inline int reference_cutoff(const SystemParams& p)
{
    const double alpha = std::abs(analytic_reference_amplitude(p));
    return std::max(p.n_max, static_cast<int>(std::ceil(alpha * alpha + 10.0 * alpha + 10.0)));
}

/*
 * <a_ref> of the same cavity with the emitter removed, solved on the Fock
 * space with the Liouville machinery and cross-checked against the linear
 * cavity formula.
 */
inline Complex reference_amplitude(const SystemParams& params)
{
    params.validate();
    if (!(params.kappa > 0.0))
        throw Error("reference_amplitude: kappa must be positive");
    if (params.drive == 0.0)
        return {0.0, 0.0};
    SystemParams p = params;
    p.n_max = reference_cutoff(params);
    std::vector<int> grades(static_cast<std::size_t>(p.n_max + 1));
    for (int n = 0; n <= p.n_max; ++n)
        grades[static_cast<std::size_t>(n)] = n;
    const Superoperator L = liouvillian(reference_cavity_hamiltonian(p), reference_cavity_collapse(p), grades);
    SteadyStateOptions opts;
    opts.grading_hint = drive_grading_hint(p);
    const SteadyState ss = steady_state(L, opts);
    const Complex solved = trace_product(annihilation(p.n_max), ss.rho);
    const Complex exact = analytic_reference_amplitude(p);
    if (std::abs(solved - exact) > 1e-7 * std::abs(exact))
        throw ConvergenceError("reference_amplitude: solver and linear-cavity formula disagree (|diff| = " +
                               std::to_string(std::abs(solved - exact)) + "); raise n_max");
    return solved;
}

inline OutputField blocking_output_field(const SystemParams& p)
{
    return OutputField{output_scale(p), cavity_annihilation(p.space()), Complex(0.0, 0.0), FieldMode::blocking,
                       p.n_max};
}

/// t_B alpha = -scale <a_ref>: cancels everything a bare cavity would scatter coherently.
inline OutputField optimal_output_field(const SystemParams& p)
{
    OutputField f = blocking_output_field(p);
    f.offset = -f.scale * reference_amplitude(p);
    f.mode = FieldMode::fano;
    return f;
}

inline OutputField custom_output_field(const SystemParams& p, Complex offset)
{
    OutputField f = blocking_output_field(p);
    f.offset = offset;
    f.mode = FieldMode::custom;
    return f;
}

namespace detail {

inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r;
}

/// Table of normal moments <(op^dag)^j op^k>, 0 <= j, k <= order.
inline std::vector<std::vector<Complex>> moment_table(const ComplexMatrix& rho, const ComplexMatrix& op, int order)
{
    const int d = static_cast<int>(op.rows());
    std::vector<ComplexMatrix> up(static_cast<std::size_t>(order + 1)), down(static_cast<std::size_t>(order + 1));
    up[0] = down[0] = identity(d);
    for (int k = 1; k <= order; ++k) {
        up[static_cast<std::size_t>(k)] = up[static_cast<std::size_t>(k - 1)] * op.adjoint();
        down[static_cast<std::size_t>(k)] = down[static_cast<std::size_t>(k - 1)] * op;
    }
    std::vector<std::vector<Complex>> out(static_cast<std::size_t>(order + 1),
                                          std::vector<Complex>(static_cast<std::size_t>(order + 1)));
    for (int j = 0; j <= order; ++j)
        for (int k = 0; k <= order; ++k)
            out[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] =
                trace_product(up[static_cast<std::size_t>(j)] * down[static_cast<std::size_t>(k)], rho);
    return out;
}

struct Expanded {
    Complex value;
    /// sum of |terms|, for cancellation checks
    double magnitude = 0.0;
};

/// <(b^dag)^m b^m> for b = s op + beta, expanded over normal moments of op.
inline Expanded displaced_moment(const std::vector<std::vector<Complex>>& table, double s, Complex beta, int m)
{
    Expanded out{Complex(0.0, 0.0), 0.0};
    for (int j = 0; j <= m; ++j)
        for (int k = 0; k <= m; ++k) {
            const Complex term = binomial(m, j) * binomial(m, k) * std::pow(s, j + k) *
                                 std::pow(std::conj(beta), m - j) * std::pow(beta, m - k) *
                                 table[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
            out.value += term;
            out.magnitude += std::abs(term);
        }
    return out;
}

inline void require_field(const SteadyState& ss, const OutputField& f)
{
    require_same_dim(f.op, ss.rho, "output field");
}

inline double flux_denominator(const Expanded& n, const char* what)
{
    if (!(n.value.real() > 1e-10 * n.magnitude) || !(n.value.real() > 0.0))
        throw Error(std::string(what) + ": vanishing output flux <b^dag b>; the field cancels the emission "
                                        "completely");
    return n.value.real();
}

} // namespace detail

/// T = <b^dag b>.
inline double transmission(const SteadyState& ss, const OutputField& f)
{
    detail::require_field(ss, f);
    const auto table = detail::moment_table(ss.rho, f.op, 1);
    return detail::displaced_moment(table, f.scale, f.offset, 1).value.real();
}

/// I_c = |<b>|^2, I_inc = scale^2 (<op^dag op> - |<op>|^2); the offset cannot change I_inc.
inline EmissionDecomposition decompose(const SteadyState& ss, const OutputField& f)
{
    detail::require_field(ss, f);
    const auto table = detail::moment_table(ss.rho, f.op, 1);
    const Complex mean = table[0][1];
    EmissionDecomposition out;
    out.coherent = std::norm(f.scale * mean + f.offset);
    out.incoherent = f.scale * f.scale * (table[1][1].real() - std::norm(mean));
    out.total = detail::displaced_moment(table, f.scale, f.offset, 1).value.real();
    return out;
}

/// <b^dag b^dag b b> / <b^dag b>^2 with the displacement expanded exactly.
inline double g2_zero(const SteadyState& ss, const OutputField& f)
{
    detail::require_field(ss, f);
    const auto table = detail::moment_table(ss.rho, f.op, 2);
    const double n = detail::flux_denominator(detail::displaced_moment(table, f.scale, f.offset, 1), "g2_zero");
    double residue = 0.0;
    const detail::Expanded m2 = detail::displaced_moment(table, f.scale, f.offset, 2);
    const double n2 = detail::checked_real(m2.value, residue, "g2_zero", 1e-12 * m2.magnitude);
    return n2 / (n * n);
}

/// Bundle statistic <(b^dag)^{2n} b^{2n}> / <(b^dag)^n b^n>^2.
inline double bundling_g2n(const SteadyState& ss, const OutputField& f, int n)
{
    detail::require_field(ss, f);
    if (n < 1)
        throw Error("bundling_g2n: bundle size must be at least 1");
    if (f.fock_cutoff >= 0 && 2 * n > f.fock_cutoff)
        throw Error("bundling_g2n: 2n = " + std::to_string(2 * n) + " exceeds the Fock cutoff " +
                    std::to_string(f.fock_cutoff) + "; the moment would be truncation-biased");
    const auto table = detail::moment_table(ss.rho, f.op, 2 * n);
    double residue = 0.0;
    const detail::Expanded low = detail::displaced_moment(table, f.scale, f.offset, n);
    if (!(low.value.real() > 1e-10 * low.magnitude))
        throw Error("bundling_g2n: vanishing denominator <(b^dag)^n b^n>");
    const double den = detail::checked_real(low.value, residue, "bundling_g2n", 1e-12 * low.magnitude);
    const detail::Expanded high = detail::displaced_moment(table, f.scale, f.offset, 2 * n);
    const double num = detail::checked_real(high.value, residue, "bundling_g2n", 1e-12 * high.magnitude);
    return num / (den * den);
}

/// Full regression curve for an output field of a given model.
inline CorrelationCurve g2_tau(const Superoperator& L, const SteadyState& ss, const OutputField& f,
                               const std::vector<double>& tau_grid, EvolveOptions opts = {})
{
    return g2_tau(L, ss, f.matrix(), tau_grid, opts);
}

struct TlsReference {
    SteadyState steady;
    EmissionDecomposition decomposition;
    double g2_zero = 0.0;
    std::vector<double> g2_tau;
};

/*
 * Resonantly driven two-level system, H = Omega (s + s^dag), collapse
 * sqrt(Gamma) s, emitting through b = sqrt(Gamma) s. Uses the same
 * Liouville machinery as the cavity model.
 */
inline TlsReference tls_reference(double omega, double Gamma, const std::vector<double>& tau_grid = {})
{
    if (!(Gamma > 0.0))
        throw Error("tls_reference: Gamma must be positive");
    const ComplexMatrix s = lowering_tls();
    const ComplexMatrix H = omega * (s + s.adjoint());
    const Superoperator L = liouvillian(H, {std::sqrt(Gamma) * s}, {0, 1});
    SteadyStateOptions opts;
    opts.grading_hint = std::min(1.0, 2.0 * std::abs(omega) / Gamma);
    TlsReference out;
    out.steady = steady_state(L, opts);
    const OutputField field{std::sqrt(Gamma), s, Complex(0.0, 0.0), FieldMode::blocking, -1};
    out.decomposition = decompose(out.steady, field);
    if (omega != 0.0)
        out.g2_zero = g2_zero(out.steady, field);
    if (!tau_grid.empty())
        out.g2_tau = g2_tau(L, out.steady, field, tau_grid).values;
    return out;
}

} // namespace jcsh

#endif
