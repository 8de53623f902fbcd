#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sedsim/field.hpp"
#include "sedsim/point_process.hpp"
#include "sedsim/statistics.hpp"

namespace sedsim {

// Dilute linearized sedimentation: one Fourier Stokes solve with the
// mean-free ball-indicator source; interactions between particles neglected.
struct LinearSolution {
    TorusDomain dom;  // the solve grid (n_grid of the call)
    ParticleConfiguration config;
    Eigen::VectorXd e;
    SpectralField phi;       // d components, mean-zero, divergence-free
    SpectralField pressure;  // scalar, mean-zero (1 zeroed cell field when skipped)
    std::vector<Eigen::VectorXd> velocities;  // ball averages of phi at the centers
};

LinearSolution solve_linear(const TorusDomain& dom, const ParticleConfiguration& config,
                            const Eigen::VectorXd& e, int n_grid, bool with_pressure = true);

// Disjoint per-particle grid supports (throws on overlap); shared by the
// linearized and the constrained solver.
std::vector<std::vector<std::int64_t>> inclusion_cells(const TorusDomain& grid,
                                                       const ParticleConfiguration& config);

struct SettlingSpeeds {
    double from_velocities = 0.0;  // (1/N) sum e_hat . V_n
    double from_energy = 0.0;      // (lambda |e|)^{-1} avg |grad phi|^2; differs by the (1+alpha) factor
};

SettlingSpeeds linear_settling_speed(const LinearSolution& sol);

// sigma° as the particle-pooled standard deviation of the settling
// velocities around the grand mean, jackknifed over realizations.
ValueWithError linear_fluctuation(const std::vector<std::vector<Eigen::VectorXd>>& velocity_sets);
ValueWithError linear_fluctuation(const std::vector<LinearSolution>& solutions);

// Scalar Laplace proxy kernels: g_ball = ball average of the torus Green
// function, f = integral of grad G over the ball (d components), both as
// grid fields centered at the origin.
struct ScalarProxyKernels {
    SpectralField g_ball;
    SpectralField f;
};

ScalarProxyKernels build_scalar_proxy_kernels(const TorusDomain& dom);

struct ScalarProxyStats {
    ValueWithError speed_proxy_variance;        // Var[sum_n F(x_n)], summed over components
    ValueWithError fluctuation_proxy_variance;  // Var[sum_n G_ball(x_n)]
};

// Streaming evaluation (one kernel component resident at a time), usable up
// to d=4 grids.
ScalarProxyStats scalar_proxy_statistics(const std::vector<ParticleConfiguration>& ensemble,
                                         const TorusDomain& dom);

}  // namespace sedsim
