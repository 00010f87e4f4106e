#ifndef JCSH_JC_MODEL_HPP
#define JCSH_JC_MODEL_HPP

#include <cmath>
#include <complex>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "error.hpp"
#include "operators.hpp"

namespace jcsh {

/// Default coupling: 2 pi x 10 GHz, in rad/ns.
inline constexpr double default_coupling = 2.0 * std::numbers::pi * 10.0;

/*
 * Physical parameters of one driven, dissipative Jaynes-Cummings instance.
 * All rates and frequencies share one angular-frequency unit.
 *
 *   delta           emitter - cavity detuning
 *   laser_detuning  laser - bare cavity
 *   drive           coherent cavity drive amplitude E
 *   output_fraction fraction of kappa leaving toward the output waveguide
 */
struct SystemParams {
    double g = default_coupling;
    double kappa = default_coupling;
    double gamma = 0.0;
    double delta = 0.0;
    double laser_detuning = 0.0;
    double drive = 0.0;
    int n_max = 15;
    double output_fraction = 0.5;

    void validate() const
    {
        if (!(g >= 0.0) || !(kappa >= 0.0) || !(gamma >= 0.0))
            throw ConfigError("g, kappa and gamma must be non-negative");
        if (n_max < 1)
            throw ConfigError("n_max must be at least 1");
        if (!(output_fraction > 0.0 && output_fraction <= 1.0))
            throw ConfigError("output_fraction must lie in (0, 1]");
        if (!std::isfinite(delta) || !std::isfinite(laser_detuning) || !std::isfinite(drive))
            throw ConfigError("detunings and drive must be finite");
    }

    HilbertSpace space() const { return HilbertSpace(n_max); }
};

/// Laser-frame Hamiltonian / hbar:
///   -dL a^dag a + (Delta - dL) s^dag s + g (a^dag s + a s^dag) + E (a + a^dag)
inline ComplexMatrix hamiltonian(const SystemParams& p)
{
    p.validate();
    const HilbertSpace space = p.space();
    const ComplexMatrix a = cavity_annihilation(space);
    const ComplexMatrix s = emitter_lowering(space);
    const ComplexMatrix ad = a.adjoint(), sd = s.adjoint();
    return -p.laser_detuning * (ad * a) + (p.delta - p.laser_detuning) * (sd * s) + p.g * (ad * s + a * sd) +
           p.drive * (a + ad);
}

inline std::vector<ComplexMatrix> collapse_operators(const SystemParams& p)
{
    p.validate();
    const HilbertSpace space = p.space();
    std::vector<ComplexMatrix> out;
    if (p.kappa > 0.0)
        out.push_back(std::sqrt(p.kappa) * cavity_annihilation(space));
    if (p.gamma > 0.0)
        out.push_back(std::sqrt(p.gamma) * emitter_lowering(space));
    return out;
}

/// Empty reference cavity (no emitter) with the same drive and laser detuning, on the Fock space only.
inline ComplexMatrix reference_cavity_hamiltonian(const SystemParams& p)
{
    p.validate();
    const ComplexMatrix a = annihilation(p.n_max);
    return -p.laser_detuning * (a.adjoint() * a) + p.drive * (a + a.adjoint());
}

inline std::vector<ComplexMatrix> reference_cavity_collapse(const SystemParams& p)
{
    p.validate();
    std::vector<ComplexMatrix> out;
    if (p.kappa > 0.0)
        out.push_back(std::sqrt(p.kappa) * annihilation(p.n_max));
    return out;
}

/// Loss rate of the driven (upper) polariton:
///   kappa/2 + 2 Im sqrt(g^2 - (kappa/4 + i Delta/2)^2), principal branch.
inline double gamma_eff(double g, double kappa, double delta)
{
    const Complex shift(kappa / 4.0, delta / 2.0);
    const double rate = kappa / 2.0 + 2.0 * std::sqrt(Complex(g * g, 0.0) - shift * shift).imag();
    if (rate < -1e-12 * (kappa + g))
        std::clog << "jcsh: warning: gamma_eff(g=" << g << ", kappa=" << kappa << ", delta=" << delta
                  << ") = " << rate << " is negative; square-root branch misuse\n";
    return rate;
}

inline double gamma_eff(const SystemParams& p) { return gamma_eff(p.g, p.kappa, p.delta); }

/// Undriven non-Hermitian Hamiltonian in the frame rotating at the cavity frequency:
///   Delta s^dag s + g (a^dag s + a s^dag) - i kappa/2 a^dag a - i gamma/2 s^dag s
inline ComplexMatrix effective_hamiltonian(const SystemParams& p)
{
    p.validate();
    const HilbertSpace space = p.space();
    const ComplexMatrix a = cavity_annihilation(space);
    const ComplexMatrix s = emitter_lowering(space);
    const ComplexMatrix ad = a.adjoint(), sd = s.adjoint();
    const Complex i(0.0, 1.0);
    return p.delta * (sd * s) + p.g * (ad * s + a * sd) - i * (p.kappa / 2.0) * (ad * a) -
           i * (p.gamma / 2.0) * (sd * s);
}

enum class Branch { upper, lower };

inline const char* to_string(Branch b) { return b == Branch::upper ? "UP" : "LP"; }

struct Polariton {
    Complex eigenvalue;
    double energy() const { return eigenvalue.real(); }
    double fwhm() const { return -2.0 * eigenvalue.imag(); }
};

/// Eigenvalues of the n-excitation manifold {|n,g>, |n-1,e>}, relative to n * omega_a.
struct Manifold {
    int n = 0;
    Polariton upper;
    Polariton lower;
    const Polariton& branch(Branch b) const { return b == Branch::upper ? upper : lower; }
};

struct LadderSpectrum {
    Polariton ground{Complex(0.0, 0.0)};
    std::vector<Manifold> manifolds;

    const Manifold& manifold(int n) const { return manifolds.at(static_cast<std::size_t>(n - 1)); }
};

/*
 * Per-manifold eigenvalues of the effective Hamiltonian. Each manifold is a
 * 2x2 block of the full matrix; its eigenvalues come from the block itself.
 *
 * Labeling: UP has the larger real part. Away from Delta = 0 (with kappa > 0)
 * the real parts never coincide, so this matches continuous tracking from
 * the Delta = 0 split. When they do coincide (overdamped manifold at
 * Delta = 0) UP is the narrower one, which is the Delta -> 0+ limit.
 */
inline LadderSpectrum ladder_spectrum(const SystemParams& p, int n_manifolds)
{
    if (n_manifolds < 1 || n_manifolds > p.n_max)
        throw Error("ladder_spectrum: need 1 <= n_manifolds <= n_max");
    const HilbertSpace space = p.space();
    const ComplexMatrix heff = effective_hamiltonian(p);

    LadderSpectrum out;
    for (int n = 1; n <= n_manifolds; ++n) {
        const int cav = space.index(0, n);
        const int emi = space.index(1, n - 1);
        const Complex h11 = heff(cav, cav), h22 = heff(emi, emi), h12 = heff(cav, emi), h21 = heff(emi, cav);
        const Complex centre = 0.5 * (h11 + h22);
        const Complex half_gap = 0.5 * (h11 - h22);
        const Complex split = std::sqrt(half_gap * half_gap + h12 * h21);
        Complex first = centre + split, second = centre - split;

        const double scale = std::abs(centre) + std::abs(split) + 1.0;
        const double dre = first.real() - second.real();
        const bool swap = std::abs(dre) <= 1e-14 * scale ? first.imag() < second.imag() : dre < 0.0;
        if (swap)
            std::swap(first, second);
        out.manifolds.push_back(Manifold{n, Polariton{first}, Polariton{second}});
    }
    return out;
}

struct ClimbStep {
    int n = 0;
    /// Re E_n - Re E_{n-1} - omega_a, in units of g.
    double energy_over_g = 0.0;
};

inline std::vector<ClimbStep> climb_energies(const SystemParams& p, Branch branch, int n_manifolds)
{
    if (!(p.g > 0.0))
        throw Error("climb_energies: reported in units of g, which must be positive");
    const LadderSpectrum spec = ladder_spectrum(p, n_manifolds);
    std::vector<ClimbStep> out;
    double previous = spec.ground.energy();
    for (const Manifold& m : spec.manifolds) {
        const double e = m.branch(branch).energy();
        out.push_back(ClimbStep{m.n, (e - previous) / p.g});
        previous = e;
    }
    return out;
}

} // namespace jcsh

#endif
