#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sedsim/field.hpp"
#include "sedsim/point_process.hpp"
#include "sedsim/torus.hpp"

namespace sedsim {

// Volume of {x in Q_L : |x|_per <= r}, i.e. the ball clipped to the cube.
// Analytic in d=1,2 for all r; d=3,4 require r <= L/2 (throws beyond).
double torus_ball_volume(int d, double L, double r);
double torus_shell_volume(int d, double L, double r_lo, double r_hi);

struct PairCorrelationEstimate {
    std::vector<double> bin_edges;  // B+1 edges
    std::vector<double> g2;         // B values, convention g2 = f2 - 1
    std::vector<double> stderrs;    // jackknife over realizations
    double intensity = 0.0;         // pooled rho estimate
};

// Shell-count estimator over ordered pairs with exact torus shell volumes;
// bins are [lo, hi). Pre: >= 2 realizations, every bin at least 2h wide.
PairCorrelationEstimate estimate_pair_correlation(const std::vector<ParticleConfiguration>& ensemble,
                                                  const std::vector<double>& bin_edges);

struct StructureFactorEstimate {
    std::vector<double> k_mag;      // exact dual magnitudes 2*pi*sqrt(m^2)/L
    std::vector<double> s;          // E |sum_n e^{-ik.x_n}|^2 / N, degeneracy-averaged
    std::vector<double> stderrs;    // jackknife over realizations
    std::vector<int> degeneracy;    // modes folded into each magnitude
};

StructureFactorEstimate estimate_structure_factor(const std::vector<ParticleConfiguration>& ensemble,
                                                  double k_max);

struct ValueWithError {
    double value = 0.0;
    double stderr_ = 0.0;
};

// L^2 Var[N] / (rho^2 L^d), the finite-volume surrogate of L^2 |int h2|.
ValueWithError hyperuniformity_metric(const std::vector<ParticleConfiguration>& ensemble);

struct PowerLawFit {
    double exponent = 0.0;
    double exponent_stderr = 0.0;
    double r_squared = 0.0;
    double amplitude = 0.0;  // exp(intercept)
};

// Weighted least squares on log-log data; requires >= 3 strictly positive
// points. y_errors may be empty (unweighted).
PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::vector<double>& y_errors = {});

struct LogLinearFit {
    double slope = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 0.0;
    double intercept = 0.0;
};

// Weighted least squares of y against ln x (used for log-law detection via
// y^2 vs ln L).
LogLinearFit fit_log_linear(const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::vector<double>& y_errors = {});

struct NumberVarianceCurve {
    std::vector<double> radii;
    std::vector<double> variance;
    std::vector<double> stderrs;
    PowerLawFit fit;  // NaN-filled when some variance is nonpositive
};

// Var[#(P cap B_R(0))] per radius over the ensemble (center fixed at the
// origin), with a power-law growth fit. Pre: radii <= L/4, >= 20 realizations.
NumberVarianceCurve number_variance_curve(const std::vector<ParticleConfiguration>& ensemble,
                                          const std::vector<double>& radii);

struct FunctionalVariance {
    double variance = 0.0;
    double stderr_ = 0.0;
    double mixing_bound = 0.0;       // rho^2 int |zeta|^2
    double hyperuniform_bound = 0.0; // rho^2 int |grad zeta|^2 (NaN if not requested)
};

// Variance of Y = sum_n zeta(x_n) with the two reference functionals of the
// variance dichotomy; requesting the hyperuniform bound requires mean-zero
// zeta. Grid version interpolates zeta at the points; the callable version
// evaluates it exactly and uses a cell-center discretization for the bounds.
FunctionalVariance linear_functional_variance(const std::vector<ParticleConfiguration>& ensemble,
                                              const SpectralField& zeta,
                                              bool want_hyperuniform_bound = true);
FunctionalVariance linear_functional_variance(const std::vector<ParticleConfiguration>& ensemble,
                                              const TorusDomain& grid_dom,
                                              const std::function<double(const Point&)>& zeta,
                                              bool want_hyperuniform_bound = true);

struct EfronSteinCheck {
    double variance = 0.0;
    double variance_stderr = 0.0;
    double es_bound = 0.0;  // (1/2) E sum_sites (Y - Y'_site)^2
    double es_bound_stderr = 0.0;
    bool holds = false;     // variance <= bound + 3 combined stderr
};

// Empirical Efron-Stein inequality for the perturbed lattice: Y' redraws one
// site's displacement via resample_in_ball over the unit ball at the site.
// Requires u_max == 1 so that the resampling law equals the displacement law.
EfronSteinCheck efron_stein_lattice_check(
    const TorusDomain& dom, double spacing, double u_max, int realizations,
    std::uint64_t master_seed, const std::function<double(const ParticleConfiguration&)>& functional);

// Jackknife standard error of a statistic computed from per-realization
// records by `fold` (fold receives the index set to keep).
double jackknife_stderr(int m, const std::function<double(int skip)>& leave_one_out, double full_value);

double sample_variance(const std::vector<double>& xs);  // unbiased, M-1

}  // namespace sedsim
