#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sedsim/linear_model.hpp"
#include "sedsim/point_process.hpp"
#include "sedsim/rng.hpp"
#include "sedsim/spectral_ops.hpp"
#include "sedsim/stokes_solver.hpp"

using namespace sedsim;

namespace {

Point pt2(double x, double y) {
    Point p(2);
    p << x, y;
    return p;
}

Eigen::VectorXd vec2(double x, double y) {
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / (den + 1e-300));
}

double max_abs(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

ParticleConfiguration pair_config(const TorusDomain& dom) {
    return ParticleConfiguration{dom, {pt2(-2.0, -0.8), pt2(2.0, 0.9)}, 1.0, 0.1};
}

// Random zero-mean divergence-free field in the discrete (forward-difference)
// sense, suitable as project_rigid input.
SpectralField solenoidal_noise(const TorusDomain& dom, std::uint64_t seed) {
    SpectralField raw(dom, dom.d);
    RngStream rng(seed);
    for (double& v : raw.data) v = rng.uniform(-1.0, 1.0);
    FourierField coeff = fft_of(raw);
    for_each_mode(dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode)
            for (int c = 0; c < dom.d; ++c) coeff.comp(c)[mi.flat] = 0.0;
    });
    FourierField sol = apply_leray_fd(coeff);
    return ifft_of(std::move(sol));
}

}  // namespace

TEST_CASE("empty configuration: zero field, zero backflow, identity viscosity") {
    TorusDomain dom(2, 8.0, 32);
    ParticleConfiguration empty{dom, {}, 1.0, 0.1};
    const Eigen::VectorXd e = vec2(0.0, -1.0);

    const auto sol = solve_sedimentation(dom, empty, e, 32);
    CHECK(sol.alpha == 0.0);
    CHECK(sol.lambda_grid == 0.0);
    CHECK(max_abs(sol.phi.data) == 0.0);
    CHECK(sol.velocities.empty());
    CHECK(sol.diagnostics.converged);
    CHECK(check_energy_identity(sol) == 0.0);

    const auto ev = effective_viscosity(dom, {empty, empty}, 32);
    REQUIRE(ev.b.rows() == 2);
    CHECK((ev.b - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);
    CHECK(ev.b_stderr.norm() == 0.0);

    Eigen::MatrixXd strain(2, 2);
    strain << 1.0, 0.0, 0.0, -1.0;
    const auto psi = solve_colloidal_corrector(dom, empty, strain, 32);
    CHECK(max_abs(psi.phi.data) == 0.0);
}

TEST_CASE("single particle in d=3: settles along gravity without rotation") {
    TorusDomain dom(3, 8.0, 32);
    ParticleConfiguration one{dom, {Point::Zero(3)}, 1.0, 0.1};
    Eigen::VectorXd e(3);
    e << 0.0, 0.0, 1.0;

    const auto sol = solve_sedimentation(dom, one, e, 32, 1e-9);
    REQUIRE(sol.diagnostics.converged);
    CHECK(sol.diagnostics.constraint_rel <= 1e-9);
    const double vz = sol.velocities[0](2);
    CHECK(vz > 0.0);
    CHECK(std::abs(sol.velocities[0](0)) <= 1e-8 * vz);
    CHECK(std::abs(sol.velocities[0](1)) <= 1e-8 * vz);
    CHECK(sol.angular[0].norm() <= 1e-8 * vz);
    CHECK(sol.alpha == doctest::Approx(sol.lambda_grid / (1.0 - sol.lambda_grid)).epsilon(1e-14));

    CHECK(rigid_trace_residual(sol) <= 1e-7);
    CHECK(rigidity_ratio(sol) <= 0.05);
}

TEST_CASE("driven pair: constraints, identities, homogeneity, parity") {
    TorusDomain dom(2, 8.0, 64);
    const auto cfg = pair_config(dom);
    const Eigen::VectorXd e = vec2(0.0, -1.0);
    const auto sol = solve_sedimentation(dom, cfg, e, 64, 1e-9);
    REQUIRE(sol.diagnostics.converged);
    const double scale = max_abs(sol.phi.data);
    REQUIRE(scale > 0.0);

    FourierField coeff = fft_of(sol.phi);
    const SpectralField div = ifft_of(divergence_fd(coeff));
    CHECK(max_abs(div.data) <= 1e-12 * scale);
    for (int c = 0; c < 2; ++c) CHECK(std::abs(field_mean(sol.phi, c)) <= 1e-13 * scale);

    // Both identities are exact for the discrete operators, so their
    // residuals sit at the solver-tolerance floor, not at discretization level.
    CHECK(check_energy_identity(sol) <= 1e-6);
    const auto st = settling_identity(sol);
    CHECK(st.gap <= 1e-3);
    const auto coarse = solve_sedimentation(dom, cfg, e, 32, 1e-9);
    CHECK(check_energy_identity(coarse) <= 1e-6);
    CHECK(settling_identity(coarse).gap <= 1e-3);

    // Homogeneity e -> 2e and parity e -> -e.
    const auto twice = solve_sedimentation(dom, cfg, (2.0 * e).eval(), 64, 1e-9);
    CHECK(settling_identity(twice).lhs == doctest::Approx(2.0 * st.lhs).epsilon(1e-9));
    CHECK(settling_identity(twice).rhs == doctest::Approx(2.0 * st.rhs).epsilon(1e-9));
    CHECK(check_energy_identity(twice) == doctest::Approx(check_energy_identity(sol)).epsilon(1e-6));

    const auto neg = solve_sedimentation(dom, cfg, (-e).eval(), 64, 1e-9);
    double parity = 0.0;
    for (std::size_t i = 0; i < sol.phi.data.size(); ++i)
        parity = std::max(parity, std::abs(sol.phi.data[i] + neg.phi.data[i]));
    CHECK(parity <= 1e-13 * scale);
    CHECK(settling_identity(neg).lhs == doctest::Approx(st.lhs).epsilon(1e-12));

    // Pressure: nonzero, mean-free over the fluid region.
    double pmax = max_abs(sol.pressure.data);
    REQUIRE(pmax > 0.0);
    std::vector<char> covered(sol.dom.cells(), 0);
    for (const auto& cells : inclusion_cells(sol.dom, cfg))
        for (std::int64_t c : cells) covered[c] = 1;
    double fluid_sum = 0.0;
    std::int64_t fluid_count = 0;
    for (std::int64_t c = 0; c < sol.dom.cells(); ++c)
        if (!covered[c]) {
            fluid_sum += sol.pressure.comp(0)[c];
            ++fluid_count;
        }
    CHECK(std::abs(fluid_sum / fluid_count) <= 1e-12 * pmax);
}

TEST_CASE("method of reflections: dilute pair matches the direct solve") {
    TorusDomain dom(2, 16.0, 64);
    ParticleConfiguration pair{dom, {pt2(-4.0, 0.0), pt2(4.0, 0.0)}, 1.0, 0.1};
    const Eigen::VectorXd e = vec2(0.0, -1.0);

    const auto refl = solve_by_reflections(dom, pair, e, 64, 1e-6, 100);
    REQUIRE(refl.report.converged);
    REQUIRE(refl.solution.has_value());
    CHECK(refl.report.min_distance == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(refl.report.sweeps == static_cast<int>(refl.report.sweep_diffs.size()));
    CHECK(refl.report.sweep_diffs.back() <= 1e-6);

    const auto direct = solve_sedimentation(dom, pair, e, 64, 1e-8);
    CHECK(rel_l2(refl.solution->phi.data, direct.phi.data) <= 1e-4);
    for (int p = 0; p < 2; ++p)
        CHECK((refl.solution->velocities[p] - direct.velocities[p]).norm() <=
              1e-4 * direct.velocities[p].norm());
    CHECK(refl.solution->alpha == doctest::Approx(direct.alpha).epsilon(1e-12));

    // Single particle: the first correction is exact, the next sweep certifies.
    ParticleConfiguration one{dom, {pt2(0.0, 0.0)}, 1.0, 0.1};
    const auto single = solve_by_reflections(dom, one, e, 64, 1e-6, 10);
    REQUIRE(single.report.converged);
    CHECK(single.report.sweeps <= 3);
    const auto sdirect = solve_sedimentation(dom, one, e, 64, 1e-8);
    CHECK(rel_l2(single.solution->phi.data, sdirect.phi.data) <= 1e-5);

    // A sweep cap that cannot be met reports failure instead of a solution.
    const auto capped = solve_by_reflections(dom, pair, e, 64, 1e-6, 1);
    CHECK_FALSE(capped.report.converged);
    CHECK_FALSE(capped.solution.has_value());
    CHECK(capped.report.sweep_diffs.size() == 1);
}

TEST_CASE("colloidal corrector: linearity and lattice symmetries") {
    TorusDomain dom(2, 8.0, 32);
    ParticleConfiguration one{dom, {pt2(0.0, 0.0)}, 1.0, 0.1};
    const auto basis = tracefree_symmetric_basis(2);
    REQUIRE(basis.size() == 2);

    const auto psi1 = solve_colloidal_corrector(dom, one, basis[0], 32, 1e-10);
    const auto psi2 = solve_colloidal_corrector(dom, one, basis[1], 32, 1e-10);
    const double scale = max_abs(psi1.phi.data);
    REQUIRE(scale > 0.0);

    // No driving field: a centered particle acquires no translation or spin.
    CHECK(psi1.velocities[0].norm() <= 1e-7);
    CHECK(psi1.angular[0].norm() <= 1e-7);
    CHECK(psi1.e.norm() == 0.0);

    // Linearity in the strain.
    const auto doubled = solve_colloidal_corrector(dom, one, (2.0 * basis[0]).eval(), 32, 1e-10);
    for (std::size_t i = 0; i < psi1.phi.data.size(); ++i)
        CHECK(std::abs(doubled.phi.data[i] - 2.0 * psi1.phi.data[i]) <= 1e-7 * scale);
    const auto summed =
        solve_colloidal_corrector(dom, one, (basis[0] + basis[1]).eval(), 32, 1e-10);
    for (std::size_t i = 0; i < psi1.phi.data.size(); ++i)
        CHECK(std::abs(summed.phi.data[i] - psi1.phi.data[i] - psi2.phi.data[i]) <= 1e-6 * scale);

    // Axis swap S(x0,x1) = (x1,x0) leaves the forward-difference operator
    // family invariant, so the conjugated strain gives the exactly-swapped
    // field: S basis0 S = -basis0, S basis1 S = basis1.
    const int n = 32;
    auto flat = [&](int i, int j) { return dom.flat({i, j, 0, 0}); };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            CHECK(std::abs(psi1.phi.at(0, flat(j, i)) + psi1.phi.at(1, flat(i, j))) <= 1e-8 * scale);
            CHECK(std::abs(psi2.phi.at(0, flat(j, i)) - psi2.phi.at(1, flat(i, j))) <= 1e-8 * scale);
        }

    // The quarter-turn R(x) = (-x1, x0) conjugates both basis strains to their
    // negatives, but the one-sided difference stencils are not reflection
    // symmetric, so equivariance holds only to discretization accuracy.
    double rot_defect = 0.0, rot_scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::int64_t rx = flat((n - j) % n, i);
            const double want0 = psi1.phi.at(1, flat(i, j));
            const double want1 = -psi1.phi.at(0, flat(i, j));
            rot_defect = std::max(rot_defect, std::abs(psi1.phi.at(0, rx) - want0));
            rot_defect = std::max(rot_defect, std::abs(psi1.phi.at(1, rx) - want1));
            rot_scale = std::max(rot_scale, std::abs(want0));
        }
    CHECK(rot_defect <= 0.25 * rot_scale);

    // Strain validation and d=3 basis.
    Eigen::MatrixXd bad(2, 2);
    bad << 0.0, 1.0, 0.0, 0.0;
    CHECK_THROWS(solve_colloidal_corrector(dom, one, bad, 32));
    bad << 1.0, 0.0, 0.0, 1.0;
    CHECK_THROWS(solve_colloidal_corrector(dom, one, bad, 32));

    const auto b3 = tracefree_symmetric_basis(3);
    REQUIRE(b3.size() == 5);
    for (std::size_t i = 0; i < b3.size(); ++i) {
        CHECK(std::abs(b3[i].trace()) <= 1e-14);
        CHECK((b3[i] - b3[i].transpose()).norm() <= 1e-14);
        for (std::size_t j = 0; j < b3.size(); ++j) {
            const double want = i == j ? 1.0 : 0.0;
            CHECK((b3[i].transpose() * b3[j]).trace() == doctest::Approx(want).epsilon(1e-13));
        }
    }
    CHECK_THROWS(tracefree_symmetric_basis(1));
    CHECK_THROWS(tracefree_symmetric_basis(4));
}

TEST_CASE("project_rigid: fixed point, idempotence, reformulation identity") {
    TorusDomain dom(2, 8.0, 32);
    const auto cfg = pair_config(dom);
    const Eigen::VectorXd e = vec2(0.0, -1.0);

    // A converged constrained solution lies in the range of the projection.
    const auto sol = solve_sedimentation(dom, cfg, e, 32, 1e-9);
    const auto fixed = project_rigid(sol.phi, cfg, 1e-9);
    CHECK(rel_l2(fixed.data, sol.phi.data) <= 1e-7);

    const SpectralField noise = solenoidal_noise(dom, 424242);
    const auto once = project_rigid(noise, cfg, 1e-9);
    const auto twice_p = project_rigid(once, cfg, 1e-9);
    CHECK(rel_l2(twice_p.data, once.data) <= 1e-6);

    FourierField oc = fft_of(once);
    const SpectralField odiv = ifft_of(divergence_fd(oc));
    CHECK(max_abs(odiv.data) <= 1e-10 * max_abs(once.data));
    for (int c = 0; c < 2; ++c)
        CHECK(std::abs(field_mean(once, c)) <= 1e-12 * max_abs(once.data));

    SpectralField scaled = noise;
    for (double& v : scaled.data) v *= 2.0;
    const auto pscaled = project_rigid(scaled, cfg, 1e-9);
    for (std::size_t i = 0; i < once.data.size(); ++i)
        CHECK(std::abs(pscaled.data[i] - 2.0 * once.data[i]) <= 1e-7 * max_abs(once.data));

    // Rigidity reformulation: the rescaled projection of the linearized
    // solution is the constrained solution, with the grid volume fraction.
    const auto lin = solve_linear(dom, cfg, e, 32, false);
    SpectralField proj = project_rigid(lin.phi, cfg, 1e-9);
    const double rescale = 1.0 / (1.0 - sol.lambda_grid);
    for (double& v : proj.data) v *= rescale;
    CHECK(rel_l2(proj.data, sol.phi.data) <= 1e-6);

    // Validation: nonzero mean and compressible inputs are rejected.
    SpectralField shifted = noise;
    for (std::int64_t c = 0; c < dom.cells(); ++c) shifted.at(0, c) += 1.0;
    CHECK_THROWS(project_rigid(shifted, cfg));
    SpectralField compress(dom, 2);
    RngStream rng(7);
    for (double& v : compress.data) v = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < 2; ++c) {
        const double mu = field_mean(compress, c);
        for (std::int64_t i = 0; i < dom.cells(); ++i) compress.at(c, i) -= mu;
    }
    CHECK_THROWS(project_rigid(compress, cfg));
    CHECK_THROWS(project_rigid(SpectralField(dom, 1), cfg));
}

TEST_CASE("surface balance: traction quadrature is first order") {
    TorusDomain dom(2, 8.0, 32);
    const auto cfg = pair_config(dom);
    const Eigen::VectorXd e = vec2(0.0, -1.0);

    const auto coarse = solve_sedimentation(dom, cfg, e, 32, 1e-9);
    const auto fine = solve_sedimentation(dom, cfg, e, 128, 1e-9);
    const auto bc = surface_balance_residual(coarse);
    const auto bf = surface_balance_residual(fine);
    CHECK(bc.force_rel < 1.0);
    CHECK(bf.force_rel <= 0.75 * bc.force_rel);
    CHECK(bf.torque_rel <= std::max(0.75 * bc.torque_rel, 0.02));

    const auto nop = solve_sedimentation(dom, cfg, e, 32, 1e-9, 5000, /*with_pressure=*/false);
    CHECK_THROWS(surface_balance_residual(nop));

    Eigen::MatrixXd strain(2, 2);
    strain << 1.0, 0.0, 0.0, -1.0;
    const auto psi = solve_colloidal_corrector(dom, cfg, strain, 32);
    CHECK_THROWS(surface_balance_residual(psi));  // undriven
}

TEST_CASE("effective viscosity: dilute excess grows with the fraction") {
    TorusDomain dom(2, 8.0, 32);
    ParticleConfiguration one{dom, {pt2(0.0, 0.0)}, 1.0, 0.1};
    ParticleConfiguration two{dom, {pt2(-2.0, 0.0), pt2(2.0, 0.0)}, 1.0, 0.1};

    const auto b1 = effective_viscosity(dom, {one}, 32, 1e-9);
    const auto b2 = effective_viscosity(dom, {two}, 32, 1e-9);
    CHECK(b1.realizations == 1);

    CHECK((b1.b - b1.b.transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig1(b1.b), eig2(b2.b);
    CHECK(eig1.eigenvalues().minCoeff() >= 1.0 - 1e-12);
    CHECK(eig2.eigenvalues().minCoeff() >= 1.0 - 1e-12);

    // For one centered particle the two shear responses coincide by symmetry.
    CHECK(b1.b(0, 0) == doctest::Approx(b1.b(1, 1)).epsilon(1e-6));
    CHECK(std::abs(b1.b(0, 1)) <= 1e-8);

    // Dilute additivity: doubling the particle count roughly doubles B - Id.
    const double ex1 = b1.b.trace() - 2.0;
    const double ex2 = b2.b.trace() - 2.0;
    CHECK(ex1 > 1e-4);
    CHECK(ex2 / ex1 == doctest::Approx(2.0).epsilon(0.35));
}

TEST_CASE("solver rejects bad inputs and reports failed iterations") {
    TorusDomain dom(2, 8.0, 32);
    const auto cfg = pair_config(dom);
    const Eigen::VectorXd e = vec2(0.0, -1.0);

    CHECK_THROWS_AS(solve_sedimentation(dom, cfg, e, 32, 1e-12, 1), SolverError);
    try {
        solve_sedimentation(dom, cfg, e, 32, 1e-12, 1);
    } catch (const SolverError& err) {
        CHECK(err.diagnostics.iterations == 1);
        CHECK_FALSE(err.diagnostics.converged);
        CHECK(err.diagnostics.residual_history.size() == 1);
    }

    CHECK_THROWS(solve_sedimentation(dom, cfg, vec2(0.0, 0.0), 32));
    Eigen::VectorXd e3(3);
    e3 << 0.0, 0.0, 1.0;
    CHECK_THROWS(solve_sedimentation(dom, cfg, e3, 32));
    CHECK_THROWS(solve_sedimentation(dom, cfg, e, 16));  // h = 1/2 too coarse

    ParticleConfiguration overlap{dom, {pt2(0.0, 0.0), pt2(1.5, 0.0)}, 1.0, 0.1};
    CHECK_THROWS(solve_sedimentation(dom, overlap, e, 32));

    ParticleConfiguration empty{dom, {}, 1.0, 0.1};
    const auto esol = solve_sedimentation(dom, empty, e, 32);
    CHECK_THROWS(settling_identity(esol));
    CHECK_THROWS(rigidity_ratio(esol));
}
