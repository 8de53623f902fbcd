#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sedsim/field.hpp"
#include "sedsim/point_process.hpp"
#include "sedsim/torus.hpp"

namespace sedsim {

struct SolverDiagnostics {
    std::vector<double> residual_history;  // per-iteration relative residuals
    int iterations = 0;
    double constraint_rel = 0.0;  // relative rigidity violation on inclusion cells
    bool converged = false;
    double wall_seconds = 0.0;
};

struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& what, SolverDiagnostics diag)
        : std::runtime_error(what), diagnostics(std::move(diag)) {}
    SolverDiagnostics diagnostics;
};

// Minimizer of the periodic dissipation subject to rigidity in the inclusions,
// with the net-force zero mode removed (uniform backflow -alpha*e in the fluid).
struct SuspensionSolution {
    TorusDomain dom;          // solve grid (n_grid cells per axis)
    ParticleConfiguration config;
    Eigen::VectorXd e;        // driving direction; zero for strain correctors
    double alpha = 0.0;       // lambda_grid / (1 - lambda_grid)
    double lambda_grid = 0.0;
    SpectralField phi;        // d components
    SpectralField pressure;   // scalar, mean zero over the fluid cells
    std::vector<Eigen::VectorXd> velocities;  // rigid translation per particle
    std::vector<Eigen::VectorXd> angular;     // d=2: 1 component, d=3: 3 components
    SolverDiagnostics diagnostics;
};

SuspensionSolution solve_sedimentation(const TorusDomain& dom, const ParticleConfiguration& config,
                                       const Eigen::VectorXd& e, int n_grid, double tol = 1e-8,
                                       int max_iterations = 5000, bool with_pressure = true);

// L2-orthogonal projection onto fields rigid on every inclusion (divergence and
// mean are preserved; input must be divergence-free with zero mean).
SpectralField project_rigid(const SpectralField& field, const ParticleConfiguration& config,
                            double tol = 1e-8);

struct ReflectionReport {
    std::vector<double> sweep_diffs;  // relative iterate differences per sweep
    int sweeps = 0;
    bool converged = false;
    double min_distance = 0.0;  // minimal periodic center distance
};

struct ReflectionOutcome {
    std::optional<SuspensionSolution> solution;  // empty unless converged
    ReflectionReport report;
};

ReflectionOutcome solve_by_reflections(const TorusDomain& dom, const ParticleConfiguration& config,
                                       const Eigen::VectorXd& e, int n_grid, double tol = 1e-6,
                                       int max_sweeps = 200);

// |dissipation - (1+alpha) sum_n e . int_{I_n} phi| / dissipation.
double check_energy_identity(const SuspensionSolution& sol);

struct SettlingIdentity {
    double lhs = 0.0;  // mean of e_hat . V_n
    double rhs = 0.0;  // volume-averaged dissipation / (alpha |e|)
    double gap = 0.0;  // relative
};
SettlingIdentity settling_identity(const SuspensionSolution& sol);

// Corrector psi for an imposed trace-free symmetric strain E: the trace of
// psi(x) + E (x - x_n) is rigid on every inclusion, psi has minimal energy
// (hence zero net force and torque multipliers). No driving field is involved.
SuspensionSolution solve_colloidal_corrector(const TorusDomain& dom,
                                             const ParticleConfiguration& config,
                                             const Eigen::MatrixXd& strain, int n_grid,
                                             double tol = 1e-8, int max_iterations = 5000);

// Orthonormal (Frobenius) basis of trace-free symmetric d x d matrices.
std::vector<Eigen::MatrixXd> tracefree_symmetric_basis(int d);

struct EffectiveViscosity {
    Eigen::MatrixXd b;         // Id + Gram matrix of the correctors, ensemble mean
    Eigen::MatrixXd b_stderr;  // jackknife standard error per entry
    std::vector<Eigen::MatrixXd> basis;
    int realizations = 0;
};

EffectiveViscosity effective_viscosity(const TorusDomain& dom,
                                       const std::vector<ParticleConfiguration>& ensemble,
                                       int n_grid, double tol = 1e-8);

// Ratio of the RMS central-difference strain rate over interior inclusion
// cells to the RMS over fluid cells (small = rigid inclusions).
double rigidity_ratio(const SuspensionSolution& sol);

// Relative L2 deviation of the inclusion-cell trace from its best rigid fit.
double rigid_trace_residual(const SuspensionSolution& sol);

// First-order surface quadrature of the traction on each inclusion boundary,
// balanced against the driving force; both residuals are relative and O(h).
struct BalanceResidual {
    double force_rel = 0.0;
    double torque_rel = 0.0;
};
BalanceResidual surface_balance_residual(const SuspensionSolution& sol);

}  // namespace sedsim
