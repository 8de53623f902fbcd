#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sedsim/point_process.hpp"
#include "sedsim/statistics.hpp"

namespace sedsim {

enum class ModelKind { linear, full, scalar_proxy };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ExperimentConfig {
    int d = 3;
    ModelKind model = ModelKind::linear;
    EnsembleSpec ensemble;
    std::vector<double> lengths;  // strictly increasing box sizes
    int cells_per_unit = 4;       // n_grid = L * cells_per_unit, so h is L-independent
    Eigen::VectorXd e;            // driving direction (unused by scalar_proxy)
    double tol = 1e-8;
    std::string out_dir;          // empty: keep everything in memory
    int workers = 1;
    double failure_cap = 0.05;

    void validate() const;
    int grid_cells(double L) const;  // throws unless L*cells_per_unit is even and >= 8
};

struct RealizationRecord {
    int index = -1;
    bool ok = false;
    std::string error;
    int particle_count = 0;
    double lambda = 0.0;   // volume fraction of the realization
    double mean_speed = 0.0;  // NaN when no particles
    std::vector<Eigen::VectorXd> velocities;
    double phi_sq_mean = 0.0;      // L^{-d} int |phi|^2 of the solved field
    double proxy_g_sum = 0.0;      // sum_n G_ball(x_n)
    Eigen::VectorXd proxy_f_sum;   // sum_n F(x_n)
    double wall_seconds = 0.0;
};

// One ensemble at box size L: samples realization i from the spec's seed
// stream, runs the configured model, itemizes failures. With out_dir set,
// per-realization records are written under <out_dir>/records and reruns
// reuse the completed ones.
std::vector<RealizationRecord> run_ensemble(const ExperimentConfig& config, double L);

struct ScalingPoint {
    double L = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
    int realizations_used = 0;
    double mean_count = 0.0;
    double mean_lambda = 0.0;
};

struct ScalingResult {
    std::string quantity;
    std::vector<ScalingPoint> points;
    PowerLawFit power_fit;           // value against L
    LogLinearFit value_sq_log_fit;   // value^2 against ln L
    int schema_version = 1;
};

// Both fits recomputed from the points (error-weighted unless any stderr is
// zero); shared by sweeps and by synthetic-injection tests.
ScalingResult make_scaling_result(const std::string& quantity,
                                  const std::vector<ScalingPoint>& points);

struct SweepFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runs run_ensemble per L and aggregates. Velocity models produce
// "mean_speed", "sigma" (pooled per-particle velocity fluctuation) and
// "sigma_field" = (E[L^{-d} int |phi|^2])^{1/2}, the point fluctuation of the
// velocity field; by stationarity the latter equals the trace variance of the
// field at any fixed point. The two sigmas share the asymptotic exponent, but
// per-particle pooling excludes the hardcore near field, which biases
// exponent fits on small boxes upward. The scalar proxy produces
// "speed_proxy_variance" and "fluctuation_proxy_variance". Throws
// SweepFailure when solver failures exceed failure_cap at any L (or when
// every realization fails).
std::map<std::string, ScalingResult> scaling_sweep(const ExperimentConfig& config);

// JSON round-trip; loading a newer schema_version fails with an explicit
// version error.
void persist_result(const ScalingResult& result, const std::string& path);
ScalingResult load_result(const std::string& path);

// <base>_data.csv with (L, value, stderr) and <base>_fit.csv with both
// fitted curves sampled at 50 points across [L_min, L_max].
void emit_plot_data(const ScalingResult& result, const std::string& base_path);

}  // namespace sedsim
