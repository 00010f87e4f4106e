#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <jcsh/homodyne.hpp>
#include <jcsh/liouville.hpp>

using namespace jcsh;

namespace {

ComplexMatrix random_density(int dim, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexMatrix A(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            A(i, j) = Complex(n(rng), n(rng));
    ComplexMatrix rho = A * A.adjoint();
    return rho / rho.trace();
}

SystemParams driven(double delta_over_g, double drive_over_g, int n_max = 6)
{
    SystemParams p;
    p.g = 1.0;
    p.kappa = 1.0;
    p.gamma = 0.1;
    p.delta = delta_over_g;
    p.laser_detuning = 0.8;
    p.drive = drive_over_g;
    p.n_max = n_max;
    return p;
}

// Classical fourth-order Runge-Kutta on the dense master equation with a fixed small step.
ComplexMatrix rk4(const ComplexMatrix& H, const std::vector<ComplexMatrix>& C, ComplexMatrix rho, double t, int steps)
{
    const double h = t / steps;
    for (int s = 0; s < steps; ++s) {
        const ComplexMatrix k1 = lindblad_rhs(H, C, rho);
        const ComplexMatrix k2 = lindblad_rhs(H, C, rho + 0.5 * h * k1);
        const ComplexMatrix k3 = lindblad_rhs(H, C, rho + 0.5 * h * k2);
        const ComplexMatrix k4 = lindblad_rhs(H, C, rho + h * k3);
        rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return rho;
}

// Resonance-fluorescence g2(tau) of a two-level system with H = omega (s + s^dag), decay gamma.
double tls_g2_exact(double omega, double gamma, double tau)
{
    const double rabi = 2.0 * omega;
    const std::complex<double> mu = std::sqrt(std::complex<double>(gamma * gamma / 16.0 - rabi * rabi, 0.0));
    const std::complex<double> shape = std::cosh(mu * tau) + (3.0 * gamma / 4.0) * std::sinh(mu * tau) / mu;
    return 1.0 - std::exp(-3.0 * gamma * tau / 4.0) * shape.real();
}

} // namespace

TEST(Vectorize, ColumnStackingConvention)
{
    ComplexMatrix rho(2, 2);
    rho << 1.0, 2.0, 3.0, 4.0;
    const ComplexVector v = vectorize(rho);
    EXPECT_EQ(v[1], Complex(3.0));
    EXPECT_EQ(v[2], Complex(2.0));
    EXPECT_EQ(unvectorize(v, 2), rho);
    EXPECT_THROW(unvectorize(v, 3), DimensionError);
}

TEST(Liouvillian, AgreesWithDenseRightHandSideOnRandomStates)
{
    const SystemParams p = driven(1.5, 0.7);
    const ComplexMatrix H = hamiltonian(p);
    const auto C = collapse_operators(p);
    const Superoperator L = liouvillian(H, C, p.space().excitation_numbers());
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ComplexMatrix rho = random_density(H.rows(), seed);
        EXPECT_NEAR((L.apply(rho) - lindblad_rhs(H, C, rho)).norm(), 0.0, 1e-12);
    }
}

TEST(Liouvillian, PreservesTraceAndHermiticity)
{
    const SystemParams p = driven(-2.0, 1.1);
    const Superoperator L = jc_liouvillian(p);
    for (std::uint64_t seed = 11; seed <= 20; ++seed) {
        const ComplexMatrix drho = L.apply(random_density(L.hilbert_dim(), seed));
        EXPECT_NEAR(std::abs(drho.trace()), 0.0, 1e-12);
        EXPECT_NEAR((drho - drho.adjoint()).norm(), 0.0, 1e-12);
    }
}

TEST(Liouvillian, GradingIsASimilarityTransform)
{
    const SystemParams p = driven(1.0, 0.3, 4);
    const Superoperator L = jc_liouvillian(p);
    const double lambda = 0.05;
    const SparseComplex A = L.graded(lambda);
    const ComplexVector w = L.grading_weights(lambda).cast<Complex>();
    const ComplexVector x = vectorize(random_density(L.hilbert_dim(), 4));
    const ComplexVector lhs = (L.matrix() * x).cwiseQuotient(w);
    const ComplexVector rhs = A * x.cwiseQuotient(w);
    EXPECT_NEAR((lhs - rhs).norm() / lhs.norm(), 0.0, 1e-12);
}

TEST(Liouvillian, RejectsMismatchedOperators)
{
    EXPECT_THROW(liouvillian(identity(3), {identity(4)}), DimensionError);
    EXPECT_THROW(liouvillian(identity(3), {}, {0, 1}), DimensionError);
}

TEST(SteadyState, TwoLevelBlochSolution)
{
    const ComplexMatrix s = lowering_tls();
    for (double omega : {0.01, 0.3, 1.0, 4.0}) {
        const double Gamma = 1.0;
        const Superoperator L = liouvillian(omega * (s + s.adjoint()), {std::sqrt(Gamma) * s}, {0, 1});
        const SteadyState ss = steady_state(L);
        const double ree = 4.0 * omega * omega / (Gamma * Gamma + 8.0 * omega * omega);
        EXPECT_NEAR(ss.rho(1, 1).real(), ree, 1e-12);
        // <s> = -i 2 omega Gamma / (Gamma^2 + 8 omega^2)
        const Complex coherence = trace_product(s, ss.rho);
        EXPECT_NEAR(std::abs(coherence - Complex(0.0, -2.0 * omega * Gamma / (Gamma * Gamma + 8.0 * omega * omega))),
                    0.0, 1e-12);
        EXPECT_LT(ss.residual, 1e-12);
    }
}

TEST(SteadyState, DrivenCavityIsCoherentState)
{
    SystemParams p = driven(0.0, 0.4, 20);
    p.g = 0.0;
    const SteadyState ss = jc_steady_state(p);
    const Complex alpha = Complex(0.0, -1.0) * p.drive / (p.kappa / 2.0 - Complex(0.0, 1.0) * p.laser_detuning);
    const HilbertSpace h = p.space();
    double fact = 1.0;
    for (int n = 0; n <= 6; ++n) {
        if (n > 0)
            fact *= n;
        const double poisson = std::exp(-std::norm(alpha)) * std::pow(std::norm(alpha), n) / fact;
        EXPECT_NEAR(ss.rho(h.index(0, n), h.index(0, n)).real(), poisson, 1e-12);
    }
    EXPECT_NEAR((ss.rho * ss.rho).trace().real(), 1.0, 1e-10);
}

TEST(SteadyState, PropertiesHoldAcrossDrives)
{
    for (double drive : {1e-4, 1e-2, 0.3, 1.0}) {
        const SystemParams p = driven(2.0, drive, 10);
        const SteadyState ss = jc_steady_state(p);
        EXPECT_NEAR(std::abs(ss.rho.trace() - 1.0), 0.0, 1e-12);
        EXPECT_NEAR((ss.rho - ss.rho.adjoint()).norm(), 0.0, 0.0);
        EXPECT_GT(ss.min_eigenvalue, -1e-10);
        EXPECT_LT((jc_liouvillian(p).apply(ss.rho)).cwiseAbs().maxCoeff(), 1e-9 * jc_liouvillian(p).max_norm());
    }
}

TEST(SteadyState, WeakDriveKeepsLinearResponse)
{
    // Two-photon population scales as E^4 deep in the weak-drive regime.
    SystemParams p = driven(3.0, 1e-4, 8);
    const HilbertSpace h = p.space();
    const double p2a = jc_steady_state(p).rho(h.index(0, 2), h.index(0, 2)).real();
    p.drive = 2e-4;
    const double p2b = jc_steady_state(p).rho(h.index(0, 2), h.index(0, 2)).real();
    EXPECT_GT(p2a, 0.0);
    EXPECT_NEAR(p2b / p2a, 16.0, 1e-5);
}

TEST(SteadyState, NonUniqueStateIsDetected)
{
    SystemParams p = driven(0.0, 0.3, 4);
    p.g = 0.0;
    p.gamma = 0.0;
    EXPECT_THROW(jc_steady_state(p), DegenerateSteadyState);
    const Superoperator closed = liouvillian(hamiltonian(p), {});
    EXPECT_THROW(steady_state(closed), DegenerateSteadyState);
}

TEST(Evolve, FockStateDecaysExponentially)
{
    SystemParams p = driven(0.0, 0.0, 3);
    p.g = 0.0;
    const Superoperator L = jc_liouvillian(p);
    const HilbertSpace h = p.space();
    const ComplexMatrix rho0 = basis_projector(h.total_dim(), h.index(0, 1));
    const std::vector<double> grid{0.0, 0.5, 1.0, 3.0};
    const auto out = evolve(L, rho0, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        EXPECT_NEAR(out[k](h.index(0, 1), h.index(0, 1)).real(), std::exp(-p.kappa * grid[k]), 1e-9);
}

TEST(Evolve, MatchesFixedStepRungeKutta)
{
    const SystemParams p = driven(1.0, 0.6, 5);
    const ComplexMatrix H = hamiltonian(p);
    const auto C = collapse_operators(p);
    const Superoperator L = liouvillian(H, C, p.space().excitation_numbers());
    const ComplexMatrix rho0 = basis_projector(L.hilbert_dim(), 1);
    const auto out = evolve(L, rho0, {2.0});
    const ComplexMatrix reference = rk4(H, C, rho0, 2.0, 4000);
    EXPECT_NEAR((out.front() - reference).cwiseAbs().maxCoeff(), 0.0, 1e-9);
}

TEST(Evolve, GradedCoordinatesGiveTheSameTrajectory)
{
    const SystemParams p = driven(2.0, 0.05, 6);
    const Superoperator L = jc_liouvillian(p);
    const SteadyState ss = jc_steady_state(p);
    const ComplexMatrix start = basis_projector(L.hilbert_dim(), 0);
    EvolveOptions graded;
    graded.grading = 0.1;
    const auto a = evolve(L, start, {1.0, 4.0});
    const auto b = evolve(L, start, {1.0, 4.0}, graded);
    for (std::size_t k = 0; k < a.size(); ++k)
        EXPECT_NEAR((a[k] - b[k]).cwiseAbs().maxCoeff(), 0.0, 1e-9);
    (void)ss;
}

TEST(Evolve, RejectsBadGrids)
{
    const SystemParams p = driven(0.0, 0.1, 2);
    const Superoperator L = jc_liouvillian(p);
    const ComplexMatrix rho0 = basis_projector(L.hilbert_dim(), 0);
    EXPECT_THROW(evolve(L, rho0, {1.0, 0.5}), Error);
    EXPECT_THROW(evolve(L, rho0, {-1.0}), Error);
    EXPECT_THROW(evolve(L, basis_projector(3, 0), {0.0}), DimensionError);
}

TEST(G2Tau, TwoLevelResonanceFluorescence)
{
    const ComplexMatrix s = lowering_tls();
    for (double omega : {0.1, 0.5, 2.0}) {
        const double Gamma = 1.0;
        const Superoperator L = liouvillian(omega * (s + s.adjoint()), {std::sqrt(Gamma) * s}, {0, 1});
        const SteadyState ss = steady_state(L);
        std::vector<double> grid;
        for (int i = 0; i <= 60; ++i)
            grid.push_back(0.25 * i);
        const CorrelationCurve c = g2_tau(L, ss, s, grid);
        for (std::size_t k = 0; k < grid.size(); ++k)
            EXPECT_NEAR(c.values[k], tls_g2_exact(omega, Gamma, grid[k]), 1e-8) << omega << " " << grid[k];
    }
}

TEST(G2Tau, StartsAtStaticValueAndDecorrelates)
{
    const SystemParams p = driven(3.0, 0.05, 8);
    const Superoperator L = jc_liouvillian(p);
    const SteadyState ss = jc_steady_state(p);
    const ComplexMatrix a = cavity_annihilation(p.space());
    const CorrelationCurve c = g2_tau(L, ss, a, {0.0, 600.0});
    const double static_g2 = trace_product(a.adjoint() * a.adjoint() * a * a, ss.rho).real() /
                             std::pow(trace_product(a.adjoint() * a, ss.rho).real(), 2);
    EXPECT_NEAR(c.values[0] / static_g2, 1.0, 1e-8);
    EXPECT_NEAR(c.values[1], 1.0, 1e-6);
    EXPECT_LT(c.max_imag_residue, 1e-8);
}

TEST(G2Tau, VanishingFluxIsAnError)
{
    const ComplexMatrix s = lowering_tls();
    const Superoperator L = liouvillian(ComplexMatrix::Zero(2, 2), {s}, {0, 1});
    const SteadyState ss = steady_state(L);
    EXPECT_THROW(g2_tau(L, ss, s, {0.0}), Error);
}
