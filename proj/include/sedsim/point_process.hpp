#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sedsim/rng.hpp"
#include "sedsim/torus.hpp"

namespace sedsim {

// A realization of a hardcore point process: N unit balls centered at
// `centers` (canonical representatives in Q_L), pairwise periodic distance
// >= 2(1+delta). sample_poisson records delta = 0 and is the one sampler
// whose output may violate the hardcore condition; fluid solvers reject it.
struct ParticleConfiguration {
    TorusDomain domain;
    std::vector<Point> centers;
    double radius = 1.0;
    double delta = 0.0;

    int count() const { return static_cast<int>(centers.size()); }
    double intensity() const { return count() / std::pow(domain.L, domain.d); }
    double volume_fraction() const {
        return count() * unit_ball_volume(domain.d) / std::pow(domain.L, domain.d);
    }
    double backflow() const {
        const double lam = volume_fraction();
        return lam / (1.0 - lam);
    }

    // Hardcore + density sanity used by the fluid solvers (Hd).
    void require_hardcore() const;
};

ParticleConfiguration sample_poisson(const TorusDomain& dom, double rho, std::uint64_t seed);

// Matern type-II thinning of a Poisson(rho_proposal) proposal with hardcore
// distance 2(1+delta); ties broken by uniform marks.
ParticleConfiguration sample_matern_hardcore(const TorusDomain& dom, double rho_proposal,
                                             double delta, std::uint64_t seed);

// Closed-form retained intensity of the Matern II process (test oracle):
// (1 - exp(-rho_p * V_h)) / V_h with V_h = |B_{2(1+delta)}|.
double matern_intensity(int d, double rho_proposal, double delta);

struct RsaSample {
    ParticleConfiguration config;
    bool saturated = false;  // target fraction not reached within max_attempts
};

RsaSample sample_rsa(const TorusDomain& dom, double lambda_target, double delta,
                     std::uint64_t seed, std::int64_t max_attempts);

// One particle per site of the spacing-a lattice (L/a sites per axis),
// displaced by an i.i.d. uniform draw from the ball of radius u_max. The
// recorded hardcore slack is the deterministic worst case,
// delta = (a - 2 u_max)/2 - 1. By default the whole lattice also receives a
// uniform global translation so the ensemble is statistically stationary;
// pass stationarize = false to keep the sites fixed (the conditional ensemble
// used by the per-site Efron-Stein construction).
ParticleConfiguration sample_perturbed_lattice(const TorusDomain& dom, double spacing,
                                               double u_max, std::uint64_t seed,
                                               bool stationarize = true);

// Center of lattice site `flat_site` in the ordering used by
// sample_perturbed_lattice (axis 0 fastest).
Point lattice_site_center(const TorusDomain& dom, double spacing, std::int64_t flat_site);

enum class ResampleMode { move, oscillate };

// Redraws the points of `config` inside B_ell(center), keeping the outside
// fixed; `move` keeps the interior count, `oscillate` redraws it as
// Poisson(intensity * |B_ell|) truncated by hardcore feasibility. Returns
// nullopt when rejection sampling exhausts its attempt budget.
std::optional<ParticleConfiguration> resample_in_ball(const ParticleConfiguration& config,
                                                      const Point& center, double ell,
                                                      ResampleMode mode, std::uint64_t seed);

// Exact minimum over periodic pair distances, cell-list accelerated; result
// is bit-identical to the O(N^2) scan. Throws for N < 2.
double min_pairwise_distance(const ParticleConfiguration& config);

enum class ProcessKind { poisson, matern_hardcore, rsa, perturbed_lattice };

std::string process_kind_name(ProcessKind kind);
ProcessKind process_kind_from_name(const std::string& name);

// One ensemble = M independent realizations of one sampler; realization i is
// drawn from the stream (master_seed, i, "sample/<kind>") so it is
// reproducible in isolation.
struct EnsembleSpec {
    ProcessKind kind = ProcessKind::poisson;
    double rho = 0.0;            // poisson intensity / matern proposal intensity
    double lambda_target = 0.0;  // rsa
    double spacing = 0.0;        // perturbed lattice
    double u_max = 0.0;          // perturbed lattice
    double delta = 0.0;          // hardcore slack (matern, rsa)
    int realizations = 1;
    std::uint64_t master_seed = 1;
};

ParticleConfiguration sample_ensemble(const EnsembleSpec& spec, const TorusDomain& dom,
                                      std::uint64_t index);

std::vector<ParticleConfiguration> sample_ensemble_all(const EnsembleSpec& spec,
                                                       const TorusDomain& dom);

}  // namespace sedsim
