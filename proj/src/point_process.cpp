#include "sedsim/point_process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sedsim {
namespace {

Point canonical(const Point& x, double L) {
    Point y = x;
    for (int a = 0; a < y.size(); ++a) y[a] = wrap_canonical(y[a], L);
    return y;
}

Point uniform_point(RngStream& rng, const TorusDomain& dom) {
    Point x(dom.d);
    for (int a = 0; a < dom.d; ++a) x[a] = rng.uniform(-dom.L / 2.0, dom.L / 2.0);
    return x;
}

bool clear_of(const std::vector<Point>& pts, const Point& x, double dist, const TorusDomain& dom) {
    for (const Point& p : pts)
        if (periodic_distance(p, x, dom) < dist) return false;
    return true;
}

void check_fraction(const ParticleConfiguration& cfg) {
    if (cfg.volume_fraction() >= 0.5)
        throw std::runtime_error("sampler produced volume fraction >= 1/2 (unphysical density)");
}

double brute_min_distance(const std::vector<Point>& pts, const TorusDomain& dom) {
    double best = std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(pts.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) best = std::min(best, periodic_distance(pts[i], pts[j], dom));
    return best;
}

}  // namespace

void ParticleConfiguration::require_hardcore() const {
    if (delta <= 0.0) throw std::invalid_argument("configuration violates Hd: delta must be > 0");
    if (volume_fraction() >= 0.5)
        throw std::invalid_argument("configuration violates Hd: volume fraction >= 1/2");
    if (count() >= 2 && min_pairwise_distance(*this) < 2.0 * (1.0 + delta) - 1e-12)
        throw std::invalid_argument("configuration violates Hd: hardcore distance");
}

ParticleConfiguration sample_poisson(const TorusDomain& dom, double rho, std::uint64_t seed) {
    if (!(rho > 0.0)) throw std::invalid_argument("sample_poisson: rho must be > 0");
    RngStream rng(seed);
    const long n = rng.poisson(rho * std::pow(dom.L, dom.d));
    ParticleConfiguration cfg{dom, {}, 1.0, 0.0};
    cfg.centers.reserve(n);
    for (long i = 0; i < n; ++i) cfg.centers.push_back(uniform_point(rng, dom));
    return cfg;
}

double matern_intensity(int d, double rho_proposal, double delta) {
    const double vh = ball_volume(d, 2.0 * (1.0 + delta));
    return (1.0 - std::exp(-rho_proposal * vh)) / vh;
}

ParticleConfiguration sample_matern_hardcore(const TorusDomain& dom, double rho_proposal,
                                             double delta, std::uint64_t seed) {
    if (!(rho_proposal > 0.0))
        throw std::invalid_argument("sample_matern_hardcore: rho_proposal must be > 0");
    if (!(delta > 0.0)) throw std::invalid_argument("sample_matern_hardcore: delta must be > 0");
    const double rc = 2.0 * (1.0 + delta);
    if (!(rc < dom.L / 2.0))
        throw std::invalid_argument("sample_matern_hardcore: hardcore range must be < L/2");

    RngStream rng(seed);
    const long n = rng.poisson(rho_proposal * std::pow(dom.L, dom.d));
    std::vector<Point> prop(n);
    std::vector<double> mark(n);
    for (long i = 0; i < n; ++i) prop[i] = uniform_point(rng, dom);
    for (long i = 0; i < n; ++i) mark[i] = rng.uniform();

    // Type II thinning: a proposal survives iff it carries the smallest mark
    // among all proposals (kept or not) within the hardcore range. The
    // dependent "only kept points block" variant has a different intensity.
    auto precedes = [&](long a, long b) {
        return mark[a] < mark[b] || (mark[a] == mark[b] && a < b);
    };
    ParticleConfiguration cfg{dom, {}, 1.0, delta};
    for (long i = 0; i < n; ++i) {
        bool keep = true;
        for (long j = 0; j < n && keep; ++j) {
            if (j == i) continue;
            if (precedes(j, i) && periodic_distance(prop[i], prop[j], dom) < rc) keep = false;
        }
        if (keep) cfg.centers.push_back(prop[i]);
    }
    check_fraction(cfg);
    return cfg;
}

RsaSample sample_rsa(const TorusDomain& dom, double lambda_target, double delta,
                     std::uint64_t seed, std::int64_t max_attempts) {
    if (!(lambda_target > 0.0)) throw std::invalid_argument("sample_rsa: lambda_target must be > 0");
    if (!(delta > 0.0)) throw std::invalid_argument("sample_rsa: delta must be > 0");
    // Saturation guards keep sequential parking far from jamming.
    const double sat_guard = dom.d == 2 ? 0.35 : dom.d == 3 ? 0.25 : dom.d == 1 ? 0.5 : 0.15;
    if (lambda_target > sat_guard)
        throw std::invalid_argument("sample_rsa: lambda_target beyond the saturation guard");

    const double rc = 2.0 * (1.0 + delta);
    RngStream rng(seed);
    RsaSample out{ParticleConfiguration{dom, {}, 1.0, delta}, true};
    for (std::int64_t att = 0; att < max_attempts; ++att) {
        if (out.config.volume_fraction() >= lambda_target) break;
        const Point x = uniform_point(rng, dom);
        if (clear_of(out.config.centers, x, rc, dom)) out.config.centers.push_back(x);
    }
    out.saturated = out.config.volume_fraction() < lambda_target;
    check_fraction(out.config);
    return out;
}

Point lattice_site_center(const TorusDomain& dom, double spacing, std::int64_t flat_site) {
    const auto sites = static_cast<std::int64_t>(std::llround(dom.L / spacing));
    Point c(dom.d);
    for (int a = 0; a < dom.d; ++a) {
        const std::int64_t i = flat_site % sites;
        flat_site /= sites;
        c[a] = (i + 0.5) * spacing - dom.L / 2.0;
    }
    return c;
}

ParticleConfiguration sample_perturbed_lattice(const TorusDomain& dom, double spacing,
                                               double u_max, std::uint64_t seed,
                                               bool stationarize) {
    const double ratio = dom.L / spacing;
    const auto sites = static_cast<std::int64_t>(std::llround(ratio));
    if (sites < 1 || std::abs(ratio - sites) > 1e-9)
        throw std::invalid_argument("sample_perturbed_lattice: L must be an integer multiple of spacing");
    if (!(u_max >= 0.0) || !(u_max < spacing / 2.0))
        throw std::invalid_argument("sample_perturbed_lattice: need 0 <= u_max < spacing/2");
    const double delta = (spacing - 2.0 * u_max) / 2.0 - 1.0;
    if (!(delta > 0.0))
        throw std::invalid_argument("sample_perturbed_lattice: spacing - 2*u_max must exceed 2 (hardcore)");

    std::int64_t total = 1;
    for (int a = 0; a < dom.d; ++a) total *= sites;

    RngStream rng(seed);
    Point shift = Point::Zero(dom.d);
    if (stationarize)
        for (int a = 0; a < dom.d; ++a) shift[a] = rng.uniform(-dom.L / 2.0, dom.L / 2.0);
    ParticleConfiguration cfg{dom, {}, 1.0, delta};
    cfg.centers.reserve(total);
    for (std::int64_t s = 0; s < total; ++s) {
        Point x = lattice_site_center(dom, spacing, s) + shift;
        if (u_max > 0.0) {
            const Eigen::VectorXd u = rng.point_in_ball(dom.d, u_max);
            for (int a = 0; a < dom.d; ++a) x[a] += u[a];
        }
        cfg.centers.push_back(canonical(x, dom.L));
    }
    check_fraction(cfg);
    return cfg;
}

std::optional<ParticleConfiguration> resample_in_ball(const ParticleConfiguration& config,
                                                      const Point& center, double ell,
                                                      ResampleMode mode, std::uint64_t seed) {
    if (!(ell > 0.0) || ell > config.domain.L / 2.0)
        throw std::invalid_argument("resample_in_ball: need 0 < ell <= L/2");

    const TorusDomain& dom = config.domain;
    std::vector<Point> outside;
    long inside_count = 0;
    for (const Point& p : config.centers) {
        if (periodic_distance(p, center, dom) <= ell)
            ++inside_count;
        else
            outside.push_back(p);
    }

    RngStream rng(seed);
    long target = inside_count;
    if (mode == ResampleMode::oscillate)
        target = rng.poisson(config.intensity() * ball_volume(dom.d, ell));

    const double rc = 2.0 * (1.0 + config.delta);
    const std::int64_t budget = 200 * std::max<std::int64_t>(target, 1);

    std::vector<Point> placed;
    std::int64_t attempts = 0;
    while (static_cast<long>(placed.size()) < target) {
        if (attempts++ >= budget) {
            if (mode == ResampleMode::move) return std::nullopt;  // caller retries with a new seed
            break;  // oscillate: count truncated by feasibility
        }
        Point x(dom.d);
        const Eigen::VectorXd u = rng.point_in_ball(dom.d, ell);
        for (int a = 0; a < dom.d; ++a) x[a] = wrap_canonical(center[a] + u[a], dom.L);
        if (clear_of(outside, x, rc, dom) && clear_of(placed, x, rc, dom)) placed.push_back(x);
    }

    ParticleConfiguration out = config;
    out.centers = std::move(outside);
    out.centers.insert(out.centers.end(), placed.begin(), placed.end());
    return out;
}

double min_pairwise_distance(const ParticleConfiguration& config) {
    const int n = config.count();
    if (n < 2) throw std::invalid_argument("min_pairwise_distance: need at least 2 points");
    const TorusDomain& dom = config.domain;

    // ~1 point per cell on average; tiny grids are not worth the bookkeeping.
    const int m = static_cast<int>(std::floor(std::pow(static_cast<double>(n), 1.0 / dom.d)));
    if (m < 4) return brute_min_distance(config.centers, dom);
    const double cell = dom.L / m;

    std::int64_t mcells = 1;
    for (int a = 0; a < dom.d; ++a) mcells *= m;
    std::vector<std::vector<int>> bucket(mcells);
    std::vector<std::array<int, 4>> home(n);
    for (int i = 0; i < n; ++i) {
        std::array<int, 4> idx{0, 0, 0, 0};
        std::int64_t f = 0;
        for (int a = dom.d - 1; a >= 0; --a) {
            int c = static_cast<int>(std::floor((config.centers[i][a] + dom.L / 2.0) / cell));
            c = std::clamp(c, 0, m - 1);
            idx[a] = c;
            f = f * m + c;
        }
        home[i] = idx;
        bucket[f].push_back(i);
    }

    double best = std::numeric_limits<double>::infinity();
    // Expanding Chebyshev shells: points in shell s are at distance
    // >= (s-1)*cell, so the scan can stop once that bound passes `best`.
    for (int i = 0; i < n; ++i) {
        for (int s = 0; 2 * s <= m; ++s) {
            if (best < std::numeric_limits<double>::infinity() && (s - 1) * cell >= best) break;
            std::array<int, 4> off{0, 0, 0, 0};
            auto scan = [&](auto&& self, int axis, bool boundary) -> void {
                if (axis == dom.d) {
                    if (s > 0 && !boundary) return;  // interior of the shell was already visited
                    std::int64_t f = 0;
                    for (int a = dom.d - 1; a >= 0; --a) {
                        int c = (home[i][a] + off[a]) % m;
                        if (c < 0) c += m;
                        f = f * m + c;
                    }
                    for (int j : bucket[f]) {
                        if (j <= i) continue;
                        best = std::min(best, periodic_distance(config.centers[i], config.centers[j], dom));
                    }
                    return;
                }
                const int lo = std::max(-s, -(m - 1) / 2);
                const int hi = std::min(s, m / 2);
                for (int o = lo; o <= hi; ++o) {
                    off[axis] = o;
                    self(self, axis + 1, boundary || std::abs(o) == s);
                }
            };
            scan(scan, 0, false);
        }
    }
    return best;
}

std::string process_kind_name(ProcessKind kind) {
    switch (kind) {
        case ProcessKind::poisson: return "poisson";
        case ProcessKind::matern_hardcore: return "matern_hardcore";
        case ProcessKind::rsa: return "rsa";
        case ProcessKind::perturbed_lattice: return "perturbed_lattice";
    }
    throw std::logic_error("process_kind_name: bad kind");
}

ProcessKind process_kind_from_name(const std::string& name) {
    if (name == "poisson") return ProcessKind::poisson;
    if (name == "matern_hardcore") return ProcessKind::matern_hardcore;
    if (name == "rsa") return ProcessKind::rsa;
    if (name == "perturbed_lattice") return ProcessKind::perturbed_lattice;
    throw std::invalid_argument("unknown process kind: " + name);
}

ParticleConfiguration sample_ensemble(const EnsembleSpec& spec, const TorusDomain& dom,
                                      std::uint64_t index) {
    const std::uint64_t seed =
        derive_seed(spec.master_seed, index, "sample/" + process_kind_name(spec.kind));
    switch (spec.kind) {
        case ProcessKind::poisson: return sample_poisson(dom, spec.rho, seed);
        case ProcessKind::matern_hardcore:
            return sample_matern_hardcore(dom, spec.rho, spec.delta, seed);
        case ProcessKind::rsa: {
            RsaSample s = sample_rsa(dom, spec.lambda_target, spec.delta, seed, 1000000);
            if (s.saturated) throw std::runtime_error("sample_ensemble: rsa saturated before target");
            return s.config;
        }
        case ProcessKind::perturbed_lattice:
            return sample_perturbed_lattice(dom, spec.spacing, spec.u_max, seed);
    }
    throw std::logic_error("sample_ensemble: bad kind");
}

std::vector<ParticleConfiguration> sample_ensemble_all(const EnsembleSpec& spec,
                                                       const TorusDomain& dom) {
    std::vector<ParticleConfiguration> out;
    out.reserve(spec.realizations);
    for (int i = 0; i < spec.realizations; ++i)
        out.push_back(sample_ensemble(spec, dom, static_cast<std::uint64_t>(i)));
    return out;
}

}  // namespace sedsim
