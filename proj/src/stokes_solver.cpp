#include "sedsim/stokes_solver.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>

#include "sedsim/linear_model.hpp"
#include "sedsim/spectral_ops.hpp"
#include "sedsim/statistics.hpp"

namespace sedsim {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int rigid_dim(int d) { return d + d * (d - 1) / 2; }

// Per-particle inclusion cells, rigid trace bases and their Gram
// factorizations; the stacked multiplier vector has one entry per inclusion
// cell and component.
struct Workspace {
    TorusDomain grid{2, 1.0, 8};
    int d = 0;
    std::vector<std::vector<std::int64_t>> cells;
    std::vector<Eigen::MatrixXd> basis;  // (K*d) x (d + d(d-1)/2)
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> gram;
    std::vector<std::int64_t> offsets;
    std::int64_t mdofs = 0;
};

Workspace make_workspace(const TorusDomain& grid, const ParticleConfiguration& config) {
    Workspace ws;
    ws.grid = grid;
    ws.d = grid.d;
    ws.cells = inclusion_cells(grid, config);
    const int nb = config.count();
    const int m = rigid_dim(ws.d);
    ws.basis.resize(nb);
    ws.gram.resize(nb);
    ws.offsets.resize(nb);
    for (int n = 0; n < nb; ++n) {
        const auto& cs = ws.cells[n];
        const int K = static_cast<int>(cs.size());
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<long>(K) * ws.d, m);
        for (int c = 0; c < K; ++c) {
            const auto idx = ws.grid.unflat(cs[c]);
            double delta[4] = {0, 0, 0, 0};
            for (int a = 0; a < ws.d; ++a)
                delta[a] = periodic_delta(grid.coord(idx[a]) - config.centers[n][a], grid.L);
            for (int a = 0; a < ws.d; ++a) B(c * ws.d + a, a) = 1.0;
            int col = ws.d;
            for (int a = 0; a < ws.d; ++a)
                for (int b = a + 1; b < ws.d; ++b) {
                    B(c * ws.d + b, col) += delta[a];
                    B(c * ws.d + a, col) -= delta[b];
                    ++col;
                }
        }
        ws.gram[n] = Eigen::LDLT<Eigen::MatrixXd>(B.transpose() * B);
        ws.basis[n] = std::move(B);
        ws.offsets[n] = ws.mdofs;
        ws.mdofs += static_cast<std::int64_t>(K) * ws.d;
    }
    return ws;
}

void gather_traces(const Workspace& ws, const SpectralField& u, Eigen::VectorXd& out) {
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        const auto& cs = ws.cells[n];
        std::int64_t at = ws.offsets[n];
        for (std::int64_t cell : cs)
            for (int a = 0; a < ws.d; ++a) out(at++) = u.comp(a)[cell];
    }
}

void scatter_forces(const Workspace& ws, const Eigen::VectorXd& g, SpectralField& force) {
    std::fill(force.data.begin(), force.data.end(), 0.0);
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        const auto& cs = ws.cells[n];
        std::int64_t at = ws.offsets[n];
        for (std::int64_t cell : cs)
            for (int a = 0; a < ws.d; ++a) force.comp(a)[cell] += g(at++);
    }
}

// Subtracts the best rigid motion per particle (the complement projection of
// the stacked trace vector).
void complement_inplace(const Workspace& ws, Eigen::VectorXd& v) {
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        const long len = static_cast<long>(ws.cells[n].size()) * ws.d;
        auto seg = v.segment(ws.offsets[n], len);
        Eigen::VectorXd coeffs = ws.gram[n].solve(ws.basis[n].transpose() * seg);
        seg -= ws.basis[n] * coeffs;
    }
}

// Discrete (-Lap)^{-1} of the discrete Leray projection, zero mode
// annihilated; runs on the forward-difference symbol family.
SpectralField apply_stokes_inverse(const SpectralField& force) {
    FourierField f = fft_of(force);
    const int d = f.dom.d;
    const FdSymbols fd(f.dom);
    std::complex<double>* comps[4] = {nullptr, nullptr, nullptr, nullptr};
    for (int c = 0; c < d; ++c) comps[c] = f.comp(c);
    for_each_mode(f.dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            for (int c = 0; c < d; ++c) comps[c][mi.flat] = 0.0;
            return;
        }
        std::complex<double> g[4];
        double g2 = 0.0;
        for (int c = 0; c < d; ++c) {
            g[c] = fd(mi.m[c]);
            g2 += std::norm(g[c]);
        }
        std::complex<double> dot = 0.0;
        for (int c = 0; c < d; ++c) dot += std::conj(g[c]) * comps[c][mi.flat];
        dot /= g2;
        for (int c = 0; c < d; ++c) comps[c][mi.flat] = (comps[c][mi.flat] - g[c] * dot) / g2;
    });
    return ifft_of(std::move(f));
}

void axpy_field(double a, const SpectralField& x, SpectralField& y) {
    const std::size_t sz = y.data.size();
    for (std::size_t i = 0; i < sz; ++i) y.data[i] += a * x.data[i];
}

// Adds the velocity response of a multiplier vector to `u` (used to seed warm
// starts).
void add_response(const Workspace& ws, const Eigen::VectorXd& g, SpectralField& scratch,
                  SpectralField& u) {
    scatter_forces(ws, g, scratch);
    SpectralField resp = apply_stokes_inverse(scratch);
    axpy_field(1.0, resp, u);
}

// CG on the Schur complement S = T (-Lap)^{-1} Pi T^* with T the
// rigid-complement trace. On entry `u` holds the unconstrained response
// (plus any warm-start contribution matching `g`); on exit it holds the
// constrained field. Convergence requires both the relative CG residual and
// the relative rigidity violation of the trace to fall below `tol`.
SolverDiagnostics schur_cg(const Workspace& ws, const Eigen::VectorXd& target, Eigen::VectorXd& g,
                           SpectralField& u, double tol, int max_iter, double scale_hint) {
    const auto t0 = Clock::now();
    SolverDiagnostics diag;
    const std::int64_t M = ws.mdofs;

    Eigen::VectorXd trace(M), r(M), tv(M), p(M), v(M);
    double trace_norm = 0.0;
    auto violation = [&](Eigen::VectorXd& out) {
        gather_traces(ws, u, out);
        trace_norm = out.norm();
        complement_inplace(ws, out);
        out = target - out;
    };

    violation(r);
    const double rhs_norm = r.norm();
    const double tiny = 1e-300;
    if (M == 0 || rhs_norm <= tiny) {
        diag.converged = true;
        diag.constraint_rel = 0.0;
        diag.wall_seconds = seconds_since(t0);
        return diag;
    }

    SpectralField force(ws.grid, ws.d);
    p = r;
    double rr = r.squaredNorm();
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd pc = p;
        complement_inplace(ws, pc);
        scatter_forces(ws, pc, force);
        SpectralField q = apply_stokes_inverse(force);
        gather_traces(ws, q, v);
        complement_inplace(ws, v);

        const double pv = p.dot(v);
        if (!(pv > 0.0)) {
            diag.iterations = it;
            diag.wall_seconds = seconds_since(t0);
            throw SolverError("rigidity CG: curvature lost (singular Schur direction)", diag);
        }
        const double gamma = rr / pv;
        g += gamma * p;
        axpy_field(gamma, q, u);
        r -= gamma * v;

        violation(tv);
        const double tv_norm = tv.norm();
        const double rel_cg = tv_norm / rhs_norm;
        const double constraint_rel = tv_norm / std::max({trace_norm, scale_hint, tiny});
        diag.iterations = it;
        diag.residual_history.push_back(std::max(rel_cg, constraint_rel));
        if (rel_cg <= tol && constraint_rel <= tol) {
            diag.converged = true;
            diag.constraint_rel = constraint_rel;
            break;
        }
        if (it % 64 == 0) r = tv;  // true-residual refresh against recurrence drift

        const double rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
        diag.constraint_rel = constraint_rel;
    }
    diag.wall_seconds = seconds_since(t0);
    return diag;
}

double grid_volume_fraction(const Workspace& ws) {
    std::int64_t total = 0;
    for (const auto& cs : ws.cells) total += static_cast<std::int64_t>(cs.size());
    return static_cast<double>(total) / static_cast<double>(ws.grid.cells());
}

void fill_rigid_motion(const Workspace& ws, const SpectralField& u, SuspensionSolution& sol) {
    const int d = ws.d;
    Eigen::VectorXd trace(ws.mdofs);
    gather_traces(ws, u, trace);
    sol.velocities.clear();
    sol.angular.clear();
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        const long len = static_cast<long>(ws.cells[n].size()) * d;
        Eigen::VectorXd coeffs =
            ws.gram[n].solve(ws.basis[n].transpose() * trace.segment(ws.offsets[n], len));
        sol.velocities.push_back(coeffs.head(d));
        if (d == 2) {
            sol.angular.push_back(Eigen::VectorXd::Constant(1, coeffs(2)));
        } else {
            Eigen::VectorXd omega(3);
            omega << coeffs(5), -coeffs(4), coeffs(3);
            sol.angular.push_back(omega);
        }
    }
}

double trace_residual_of(const Workspace& ws, const SpectralField& u) {
    if (ws.mdofs == 0) return 0.0;
    Eigen::VectorXd trace(ws.mdofs);
    gather_traces(ws, u, trace);
    const double denom = trace.norm();
    complement_inplace(ws, trace);
    return denom > 0.0 ? trace.norm() / denom : 0.0;
}

std::vector<int> owner_map(const Workspace& ws) {
    std::vector<int> owner(ws.grid.cells(), -1);
    for (std::size_t n = 0; n < ws.cells.size(); ++n)
        for (std::int64_t c : ws.cells[n]) owner[c] = static_cast<int>(n);
    return owner;
}

// Pressure of the discrete momentum balance -Lap phi + grad P = force,
// shifted to zero mean over the fluid cells.
SpectralField pressure_of(const Workspace& ws, const SpectralField& force) {
    const int d = force.dom.d;
    FourierField f = fft_of(force);
    FourierField ph(force.dom, 1);
    const FdSymbols fd(force.dom);
    std::complex<double>* out = ph.comp(0);
    const std::complex<double>* comps[4] = {nullptr, nullptr, nullptr, nullptr};
    for (int c = 0; c < d; ++c) comps[c] = f.comp(c);
    for_each_mode(force.dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            out[mi.flat] = 0.0;
            return;
        }
        std::complex<double> dot = 0.0;
        double g2 = 0.0;
        for (int c = 0; c < d; ++c) {
            const std::complex<double> g = fd(mi.m[c]);
            dot += std::conj(g) * comps[c][mi.flat];
            g2 += std::norm(g);
        }
        out[mi.flat] = dot / g2;
    });
    SpectralField p = ifft_of(std::move(ph));

    const auto owner = owner_map(ws);
    double fluid_sum = 0.0;
    std::int64_t fluid_cells = 0;
    for (std::int64_t c = 0; c < ws.grid.cells(); ++c)
        if (owner[c] < 0) {
            fluid_sum += p.comp(0)[c];
            ++fluid_cells;
        }
    if (fluid_cells == 0) throw std::runtime_error("pressure normalization: no fluid cells");
    const double mean = fluid_sum / static_cast<double>(fluid_cells);
    for (std::int64_t c = 0; c < ws.grid.cells(); ++c) p.comp(0)[c] -= mean;
    return p;
}

void check_driving(const TorusDomain& dom, const Eigen::VectorXd& e) {
    if (dom.d < 2 || dom.d > 3) throw std::invalid_argument("solver: d must be 2 or 3");
    if (e.size() != dom.d) throw std::invalid_argument("solver: driving vector dimension mismatch");
    if (!(e.norm() > 0.0)) throw std::invalid_argument("solver: driving vector must be nonzero");
}

}  // namespace

SuspensionSolution solve_sedimentation(const TorusDomain& dom, const ParticleConfiguration& config,
                                       const Eigen::VectorXd& e, int n_grid, double tol,
                                       int max_iterations, bool with_pressure) {
    check_driving(dom, e);
    config.require_hardcore();
    const TorusDomain grid(dom.d, dom.L, n_grid);
    grid.require_resolution();
    const Workspace ws = make_workspace(grid, config);

    SuspensionSolution sol{grid,
                           config,
                           e,
                           0.0,
                           0.0,
                           SpectralField(grid, grid.d),
                           SpectralField(grid, 1),
                           {},
                           {},
                           {}};
    sol.lambda_grid = grid_volume_fraction(ws);
    if (sol.lambda_grid >= 0.5)
        throw std::invalid_argument("solve_sedimentation: grid volume fraction must be below 1/2");
    sol.alpha = sol.lambda_grid / (1.0 - sol.lambda_grid);

    SpectralField force(grid, grid.d);
    for (const auto& cs : ws.cells)
        for (std::int64_t cell : cs)
            for (int a = 0; a < grid.d; ++a) force.comp(a)[cell] = (1.0 + sol.alpha) * e(a);
    SpectralField u = apply_stokes_inverse(force);

    Eigen::VectorXd g = Eigen::VectorXd::Zero(ws.mdofs);
    const Eigen::VectorXd target = Eigen::VectorXd::Zero(ws.mdofs);
    sol.diagnostics = schur_cg(ws, target, g, u, tol, max_iterations, 0.0);
    if (!sol.diagnostics.converged)
        throw SolverError("solve_sedimentation: iteration cap reached", sol.diagnostics);

    fill_rigid_motion(ws, u, sol);
    sol.phi = std::move(u);
    if (with_pressure) {
        scatter_forces(ws, g, force);
        for (const auto& cs : ws.cells)
            for (std::int64_t cell : cs)
                for (int a = 0; a < grid.d; ++a) force.comp(a)[cell] += (1.0 + sol.alpha) * e(a);
        sol.pressure = pressure_of(ws, force);
    }
    return sol;
}

SpectralField project_rigid(const SpectralField& field, const ParticleConfiguration& config,
                            double tol) {
    const TorusDomain& grid = field.dom;
    if (field.comps != grid.d) throw std::invalid_argument("project_rigid: need one component per axis");
    grid.require_resolution();
    config.require_hardcore();

    double rms = 0.0;
    for (double x : field.data) rms += x * x;
    rms = std::sqrt(rms / static_cast<double>(field.data.size()));
    for (int c = 0; c < field.comps; ++c)
        if (std::abs(field_mean(field, c)) > 1e-8 * (rms + 1e-300))
            throw std::invalid_argument("project_rigid: input must have zero mean");
    FourierField coeff = fft_of(field);
    const double div2 = spectral_square_integral(divergence_fd(coeff));
    const double grad2 = gradient_square_integral_fd(coeff);
    if (div2 > 1e-16 * (grad2 + 1e-300))
        throw std::invalid_argument("project_rigid: input must be divergence-free");

    const Workspace ws = make_workspace(grid, config);
    SpectralField u = field;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ws.mdofs);
    const Eigen::VectorXd target = Eigen::VectorXd::Zero(ws.mdofs);
    SolverDiagnostics diag = schur_cg(ws, target, g, u, tol, 5000, 0.0);
    if (!diag.converged) throw SolverError("project_rigid: iteration cap reached", diag);
    return u;
}

ReflectionOutcome solve_by_reflections(const TorusDomain& dom, const ParticleConfiguration& config,
                                       const Eigen::VectorXd& e, int n_grid, double tol,
                                       int max_sweeps) {
    check_driving(dom, e);
    config.require_hardcore();
    const TorusDomain grid(dom.d, dom.L, n_grid);
    grid.require_resolution();
    const Workspace ws = make_workspace(grid, config);
    const int nb = config.count();

    ReflectionOutcome out;
    out.report.min_distance =
        nb >= 2 ? min_pairwise_distance(config) : std::numeric_limits<double>::infinity();

    const double lambda_grid = grid_volume_fraction(ws);
    if (lambda_grid >= 0.5)
        throw std::invalid_argument("solve_by_reflections: grid volume fraction must be below 1/2");
    const double alpha = lambda_grid / (1.0 - lambda_grid);

    LinearSolution lin = solve_linear(dom, config, e, n_grid, false);
    SpectralField v = std::move(lin.phi);

    double v0_sq = 0.0;
    for (double x : v.data) v0_sq += x * x;
    const double v0_norm = std::sqrt(v0_sq);

    std::vector<Workspace> single(nb);
    std::vector<Eigen::VectorXd> g(nb), gsum(nb);
    for (int n = 0; n < nb; ++n) {
        ParticleConfiguration one{config.domain, {config.centers[n]}, config.radius, config.delta};
        single[n] = make_workspace(grid, one);
        g[n] = Eigen::VectorXd::Zero(single[n].mdofs);
        gsum[n] = Eigen::VectorXd::Zero(single[n].mdofs);
    }

    int total_inner = 0;
    bool converged = (nb == 0 || v0_norm == 0.0);
    SpectralField scratch(grid, grid.d);
    for (int s = 1; s <= max_sweeps && !converged; ++s) {
        SpectralField vnext = v;
        for (int n = 0; n < nb; ++n) {
            Workspace& wsn = single[n];
            Eigen::VectorXd target(wsn.mdofs);
            gather_traces(wsn, v, target);
            const double trace_scale = target.norm();
            complement_inplace(wsn, target);
            target = -target;

            SpectralField un(grid, grid.d);
            if (g[n].norm() > 0.0) add_response(wsn, g[n], scratch, un);
            SolverDiagnostics diag = schur_cg(wsn, target, g[n], un, tol / 10.0, 5000, trace_scale);
            if (!diag.converged)
                throw SolverError("solve_by_reflections: single-particle solve stalled", diag);
            total_inner += diag.iterations;
            axpy_field(1.0, un, vnext);
            gsum[n] += g[n];
        }
        double diff_sq = 0.0;
        for (std::size_t i = 0; i < v.data.size(); ++i) {
            const double dlt = vnext.data[i] - v.data[i];
            diff_sq += dlt * dlt;
        }
        const double diff = std::sqrt(diff_sq) / (v0_norm > 0.0 ? v0_norm : 1.0);
        out.report.sweep_diffs.push_back(diff);
        out.report.sweeps = s;
        v = std::move(vnext);
        if (!std::isfinite(diff) || diff > 1e8) break;
        if (diff <= tol) converged = true;
    }
    out.report.converged = converged;
    if (!converged) return out;

    SuspensionSolution sol{grid,
                           config,
                           e,
                           alpha,
                           lambda_grid,
                           SpectralField(grid, grid.d),
                           SpectralField(grid, 1),
                           {},
                           {},
                           {}};
    for (double& x : v.data) x *= 1.0 + alpha;
    fill_rigid_motion(ws, v, sol);
    sol.diagnostics.converged = true;
    sol.diagnostics.iterations = total_inner;
    sol.diagnostics.residual_history = out.report.sweep_diffs;
    sol.diagnostics.constraint_rel = trace_residual_of(ws, v);
    sol.phi = std::move(v);

    SpectralField force(grid, grid.d);
    for (int n = 0; n < nb; ++n) {
        std::int64_t at = 0;
        for (std::int64_t cell : ws.cells[n])
            for (int a = 0; a < grid.d; ++a) {
                force.comp(a)[cell] = (1.0 + alpha) * (e(a) + gsum[n](at));
                ++at;
            }
    }
    sol.pressure = pressure_of(ws, force);
    out.solution = std::move(sol);
    return out;
}

double check_energy_identity(const SuspensionSolution& sol) {
    if (!(sol.e.norm() > 0.0))
        throw std::invalid_argument("check_energy_identity: needs a driven solution");
    if (sol.config.count() == 0) return 0.0;
    const double lhs = gradient_square_integral_fd(fft_of(sol.phi));
    const auto cells = inclusion_cells(sol.dom, sol.config);
    const double hd = std::pow(sol.dom.h(), sol.dom.d);
    double rhs = 0.0;
    for (const auto& cs : cells)
        for (std::int64_t cell : cs)
            for (int a = 0; a < sol.dom.d; ++a) rhs += sol.e(a) * sol.phi.comp(a)[cell];
    rhs *= (1.0 + sol.alpha) * hd;
    if (!(lhs > 0.0)) throw std::runtime_error("check_energy_identity: zero dissipation");
    return std::abs(lhs - rhs) / lhs;
}

SettlingIdentity settling_identity(const SuspensionSolution& sol) {
    if (sol.config.count() == 0 || !(sol.alpha > 0.0) || !(sol.e.norm() > 0.0))
        throw std::invalid_argument("settling_identity: needs a driven nonempty solution");
    SettlingIdentity id;
    const Eigen::VectorXd ehat = sol.e / sol.e.norm();
    for (const auto& vn : sol.velocities) id.lhs += ehat.dot(vn);
    id.lhs /= static_cast<double>(sol.velocities.size());
    const double energy = gradient_square_integral_fd(fft_of(sol.phi));
    const double vol = std::pow(sol.dom.L, sol.dom.d);
    id.rhs = energy / (sol.alpha * sol.e.norm() * vol);
    id.gap = std::abs(id.lhs - id.rhs) / std::max(std::abs(id.lhs), 1e-300);
    return id;
}

SuspensionSolution solve_colloidal_corrector(const TorusDomain& dom,
                                             const ParticleConfiguration& config,
                                             const Eigen::MatrixXd& strain, int n_grid, double tol,
                                             int max_iterations) {
    const int d = dom.d;
    if (d < 2 || d > 3) throw std::invalid_argument("solve_colloidal_corrector: d must be 2 or 3");
    if (strain.rows() != d || strain.cols() != d)
        throw std::invalid_argument("solve_colloidal_corrector: strain must be d x d");
    const double sc = strain.norm() + 1.0;
    if ((strain - strain.transpose()).norm() > 1e-10 * sc || std::abs(strain.trace()) > 1e-10 * sc)
        throw std::invalid_argument("solve_colloidal_corrector: strain must be symmetric trace-free");
    config.require_hardcore();
    const TorusDomain grid(d, dom.L, n_grid);
    grid.require_resolution();
    const Workspace ws = make_workspace(grid, config);

    SuspensionSolution sol{grid,
                           config,
                           Eigen::VectorXd::Zero(d),
                           0.0,
                           0.0,
                           SpectralField(grid, d),
                           SpectralField(grid, 1),
                           {},
                           {},
                           {}};
    sol.lambda_grid = grid_volume_fraction(ws);
    sol.alpha = sol.lambda_grid / (1.0 - sol.lambda_grid);

    Eigen::VectorXd target(ws.mdofs);
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        std::int64_t at = ws.offsets[n];
        for (std::int64_t cell : ws.cells[n]) {
            const auto idx = grid.unflat(cell);
            Eigen::VectorXd delta(d);
            for (int a = 0; a < d; ++a)
                delta(a) = periodic_delta(grid.coord(idx[a]) - config.centers[n][a], grid.L);
            const Eigen::VectorXd val = strain * delta;
            for (int a = 0; a < d; ++a) target(at++) = val(a);
        }
    }
    const double scale_hint = target.norm();
    complement_inplace(ws, target);
    target = -target;

    SpectralField u(grid, d);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ws.mdofs);
    sol.diagnostics = schur_cg(ws, target, g, u, tol, max_iterations, scale_hint);
    if (!sol.diagnostics.converged)
        throw SolverError("solve_colloidal_corrector: iteration cap reached", sol.diagnostics);

    fill_rigid_motion(ws, u, sol);
    sol.phi = std::move(u);
    if (ws.mdofs > 0) {
        SpectralField force(grid, d);
        scatter_forces(ws, g, force);
        sol.pressure = pressure_of(ws, force);
    }
    return sol;
}

std::vector<Eigen::MatrixXd> tracefree_symmetric_basis(int d) {
    if (d < 2 || d > 3) throw std::invalid_argument("tracefree_symmetric_basis: d must be 2 or 3");
    std::vector<Eigen::MatrixXd> basis;
    const double s2 = 1.0 / std::sqrt(2.0);
    if (d == 2) {
        Eigen::MatrixXd e1(2, 2), e2(2, 2);
        e1 << s2, 0, 0, -s2;
        e2 << 0, s2, s2, 0;
        basis = {e1, e2};
    } else {
        const double s6 = 1.0 / std::sqrt(6.0);
        Eigen::MatrixXd e1 = Eigen::MatrixXd::Zero(3, 3), e2 = Eigen::MatrixXd::Zero(3, 3);
        e1.diagonal() << s2, -s2, 0;
        e2.diagonal() << s6, s6, -2 * s6;
        basis = {e1, e2};
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
                m(a, b) = m(b, a) = s2;
                basis.push_back(m);
            }
    }
    return basis;
}

namespace {

double cross_gradient_integral(const FourierField& a, const FourierField& b) {
    double acc = 0.0;
    const int d = a.dom.d;
    const FdSymbols fd(a.dom);
    for_each_mode(a.dom, [&](const ModeInfo& mi) {
        double dot = 0.0;
        for (int c = 0; c < d; ++c) {
            const std::complex<double> ac = a.comp(c)[mi.flat];
            const std::complex<double> bc = b.comp(c)[mi.flat];
            dot += ac.real() * bc.real() + ac.imag() * bc.imag();
        }
        double g2 = 0.0;
        for (int c = 0; c < d; ++c) g2 += std::norm(fd(mi.m[c]));
        acc += mi.weight * g2 * dot;
    });
    return acc * std::pow(a.dom.L, a.dom.d);
}

}  // namespace

EffectiveViscosity effective_viscosity(const TorusDomain& dom,
                                       const std::vector<ParticleConfiguration>& ensemble,
                                       int n_grid, double tol) {
    EffectiveViscosity ev;
    ev.basis = tracefree_symmetric_basis(dom.d);
    const int nb = static_cast<int>(ev.basis.size());
    ev.realizations = static_cast<int>(ensemble.size());
    ev.b = Eigen::MatrixXd::Identity(nb, nb);
    ev.b_stderr = Eigen::MatrixXd::Zero(nb, nb);
    if (ensemble.empty()) return ev;

    const double vol = std::pow(dom.L, dom.d);
    std::vector<Eigen::MatrixXd> grams;
    grams.reserve(ensemble.size());
    for (const auto& cfg : ensemble) {
        std::vector<FourierField> coeffs;
        coeffs.reserve(nb);
        for (int i = 0; i < nb; ++i) {
            SuspensionSolution psi = solve_colloidal_corrector(dom, cfg, ev.basis[i], n_grid, tol);
            coeffs.push_back(fft_of(psi.phi));
        }
        Eigen::MatrixXd gmat = Eigen::MatrixXd::Identity(nb, nb);
        for (int i = 0; i < nb; ++i)
            for (int j = i; j < nb; ++j) {
                const double cross = cross_gradient_integral(coeffs[i], coeffs[j]) / vol;
                gmat(i, j) += cross;
                if (j > i) gmat(j, i) += cross;
            }
        grams.push_back(gmat);
    }

    const int m = static_cast<int>(grams.size());
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nb, nb);
    for (const auto& gmat : grams) sum += gmat;
    ev.b = sum / m;
    if (m >= 2) {
        for (int i = 0; i < nb; ++i)
            for (int j = 0; j < nb; ++j) {
                auto loo = [&](int skip) { return (sum(i, j) - grams[skip](i, j)) / (m - 1); };
                ev.b_stderr(i, j) = jackknife_stderr(m, loo, ev.b(i, j));
            }
    }
    return ev;
}

namespace {

struct NeighborIndexer {
    const TorusDomain* grid;
    std::int64_t stride[4];
    NeighborIndexer(const TorusDomain& g) : grid(&g) {
        std::int64_t s = 1;
        for (int a = 0; a < g.d; ++a) {
            stride[a] = s;
            s *= g.n_grid;
        }
    }
    std::int64_t shift(std::int64_t c, int axis, int dir) const {
        const int n = grid->n_grid;
        const int ia = static_cast<int>((c / stride[axis]) % n);
        int ja = ia + dir;
        if (ja < 0) ja += n;
        if (ja >= n) ja -= n;
        return c + static_cast<std::int64_t>(ja - ia) * stride[axis];
    }
};

}  // namespace

double rigidity_ratio(const SuspensionSolution& sol) {
    const TorusDomain& grid = sol.dom;
    const int d = grid.d;
    if (sol.config.count() == 0) throw std::invalid_argument("rigidity_ratio: empty configuration");
    const Workspace ws = make_workspace(grid, sol.config);
    const auto owner = owner_map(ws);
    const NeighborIndexer nbr(grid);
    const std::int64_t nc = grid.cells();

    std::vector<char> interior(nc, 0);
    for (std::int64_t c = 0; c < nc; ++c) {
        if (owner[c] < 0) continue;
        bool inside = true;
        for (int a = 0; a < d && inside; ++a)
            for (int s = -1; s <= 1 && inside; s += 2)
                if (owner[nbr.shift(c, a, s)] != owner[c]) inside = false;
        interior[c] = inside ? 1 : 0;
    }

    const double inv2h = 1.0 / (2.0 * grid.h());
    double incl_acc = 0.0, fluid_acc = 0.0;
    std::int64_t incl_count = 0, fluid_count = 0;
    for (std::int64_t c = 0; c < nc; ++c) {
        const bool is_fluid = owner[c] < 0;
        if (!is_fluid && !interior[c]) continue;
        double s2 = 0.0;
        for (int a = 0; a < d; ++a) {
            const std::int64_t cp = nbr.shift(c, a, +1), cm = nbr.shift(c, a, -1);
            for (int b = a; b < d; ++b) {
                const std::int64_t bp = nbr.shift(c, b, +1), bm = nbr.shift(c, b, -1);
                const double dab = (sol.phi.comp(b)[cp] - sol.phi.comp(b)[cm]) * inv2h;
                const double dba = (sol.phi.comp(a)[bp] - sol.phi.comp(a)[bm]) * inv2h;
                const double sym = 0.5 * (dab + dba);
                s2 += (a == b ? 1.0 : 2.0) * sym * sym;
            }
        }
        if (is_fluid) {
            fluid_acc += s2;
            ++fluid_count;
        } else {
            incl_acc += s2;
            ++incl_count;
        }
    }
    if (incl_count == 0) throw std::runtime_error("rigidity_ratio: no interior inclusion cells");
    if (!(fluid_acc > 0.0)) throw std::runtime_error("rigidity_ratio: vanishing fluid strain");
    return std::sqrt(incl_acc / incl_count) / std::sqrt(fluid_acc / fluid_count);
}

double rigid_trace_residual(const SuspensionSolution& sol) {
    if (sol.config.count() == 0) return 0.0;
    const Workspace ws = make_workspace(sol.dom, sol.config);
    return trace_residual_of(ws, sol.phi);
}

BalanceResidual surface_balance_residual(const SuspensionSolution& sol) {
    const TorusDomain& grid = sol.dom;
    const int d = grid.d;
    if (!(sol.e.norm() > 0.0))
        throw std::invalid_argument("surface_balance_residual: needs a driven solution");
    if (sol.config.count() == 0) return {};
    double pmax = 0.0;
    for (double x : sol.pressure.data) pmax = std::max(pmax, std::abs(x));
    if (pmax == 0.0)
        throw std::invalid_argument("surface_balance_residual: solution lacks a pressure field");

    const Workspace ws = make_workspace(grid, sol.config);
    const auto owner = owner_map(ws);
    const NeighborIndexer nbr(grid);

    // grad[a*d+b] = d_a phi_b sampled on the grid
    std::vector<SpectralField> grad;
    grad.reserve(static_cast<std::size_t>(d) * d);
    {
        FourierField coeff = fft_of(sol.phi);
        const FdSymbols fd(grid);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                FourierField der(grid, 1);
                const std::complex<double>* src = coeff.comp(b);
                std::complex<double>* dst = der.comp(0);
                for_each_mode(grid, [&](const ModeInfo& mi) {
                    dst[mi.flat] = fd(mi.m[a]) * src[mi.flat];
                });
                grad.push_back(ifft_of(std::move(der)));
            }
    }

    auto traction = [&](std::int64_t cell, int axis, double sign, Eigen::VectorXd& t) {
        for (int i = 0; i < d; ++i) {
            double sig = grad[axis * d + i].comp(0)[cell] + grad[i * d + axis].comp(0)[cell];
            if (i == axis) sig -= sol.pressure.comp(0)[cell];
            t(i) = sign * sig;
        }
    };

    const double h = grid.h();
    const double face_area = std::pow(h, d - 1);
    const double hd = std::pow(h, d);
    BalanceResidual worst;
    Eigen::VectorXd tc(d), tn(d);
    for (std::size_t n = 0; n < ws.cells.size(); ++n) {
        Eigen::VectorXd f_surf = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd torque = Eigen::VectorXd::Zero(3);
        for (std::int64_t cell : ws.cells[n]) {
            const auto idx = grid.unflat(cell);
            for (int a = 0; a < d; ++a)
                for (int s = -1; s <= 1; s += 2) {
                    const std::int64_t other = nbr.shift(cell, a, s);
                    if (owner[other] == static_cast<int>(n)) continue;
                    traction(cell, a, s, tc);
                    traction(other, a, s, tn);
                    const Eigen::VectorXd tr = 0.5 * face_area * (tc + tn);
                    f_surf += tr;
                    Eigen::Vector3d delta = Eigen::Vector3d::Zero(), t3 = Eigen::Vector3d::Zero();
                    for (int b = 0; b < d; ++b) {
                        double x = grid.coord(idx[b]) - sol.config.centers[n][b];
                        if (b == a) x += 0.5 * s * h;
                        delta(b) = periodic_delta(x, grid.L);
                        t3(b) = tr(b);
                    }
                    torque += delta.cross(t3);
                }
        }
        const double fg = static_cast<double>(ws.cells[n].size()) * hd * sol.e.norm();
        const Eigen::VectorXd grav =
            static_cast<double>(ws.cells[n].size()) * hd * sol.e;
        worst.force_rel = std::max(worst.force_rel, (grav + f_surf).norm() / fg);
        worst.torque_rel = std::max(worst.torque_rel, torque.norm() / fg);
    }
    return worst;
}

}  // namespace sedsim
