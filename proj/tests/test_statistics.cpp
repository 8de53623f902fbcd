#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "sedsim/point_process.hpp"
#include "sedsim/rng.hpp"
#include "sedsim/spectral_ops.hpp"
#include "sedsim/statistics.hpp"

using namespace sedsim;

namespace {

constexpr double kPi = std::numbers::pi;

Point pt2(double x, double y) {
    Point p(2);
    p << x, y;
    return p;
}

std::vector<ParticleConfiguration> poisson_ensemble(const TorusDomain& dom, double rho, int m,
                                                    std::uint64_t seed0) {
    std::vector<ParticleConfiguration> out;
    out.reserve(m);
    for (int r = 0; r < m; ++r) out.push_back(sample_poisson(dom, rho, seed0 + r));
    return out;
}

std::vector<ParticleConfiguration> lattice_ensemble(const TorusDomain& dom, double spacing,
                                                    double u_max, int m, std::uint64_t seed0) {
    std::vector<ParticleConfiguration> out;
    out.reserve(m);
    for (int r = 0; r < m; ++r) out.push_back(sample_perturbed_lattice(dom, spacing, u_max, seed0 + r));
    return out;
}

std::vector<ParticleConfiguration> translated(const std::vector<ParticleConfiguration>& in,
                                              const Point& t) {
    std::vector<ParticleConfiguration> out = in;
    for (auto& cfg : out)
        for (auto& p : cfg.centers)
            for (int a = 0; a < cfg.domain.d; ++a)
                p[a] = wrap_canonical(p[a] + t[a], cfg.domain.L);
    return out;
}

// Simpson quadrature of r*J0(k*r) over [lo, hi].
double radial_bessel_integral(double k, double lo, double hi) {
    const int n = 200;
    const double dr = (hi - lo) / n;
    auto f = [&](double r) { return r * std::cyl_bessel_j(0.0, k * r); };
    double acc = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * dr);
    return acc * dr / 3.0;
}

}  // namespace

TEST_CASE("torus ball volume: closed forms, clipping, additivity") {
    CHECK(torus_ball_volume(1, 10.0, 2.0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(torus_ball_volume(1, 10.0, 7.0) == doctest::Approx(10.0).epsilon(1e-14));

    // d=2: plain disk below L/2, full square beyond (L/2)*sqrt(2), and the
    // clipped formula must match both limits exactly.
    const double L = 10.0;
    CHECK(torus_ball_volume(2, L, 3.0) == doctest::Approx(kPi * 9.0).epsilon(1e-14));
    CHECK(torus_ball_volume(2, L, L / 2.0) == doctest::Approx(kPi * 25.0).epsilon(1e-12));
    const double rc = (L / 2.0) * std::numbers::sqrt2;
    CHECK(torus_ball_volume(2, L, rc) == doctest::Approx(L * L).epsilon(1e-12));
    CHECK(torus_ball_volume(2, L, rc + 0.1) == doctest::Approx(L * L).epsilon(1e-14));

    // Clipped regime cross-checked by cell counting.
    const double r = 6.0;
    const int n = 1024;
    const double h = L / n;
    long count = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dx = periodic_delta(i * h, L);
            const double dy = periodic_delta(j * h, L);
            if (dx * dx + dy * dy <= r * r) ++count;
        }
    CHECK(std::abs(count * h * h - torus_ball_volume(2, L, r)) < 1.0);

    CHECK(torus_ball_volume(3, 12.0, 4.0) == doctest::Approx(4.0 / 3.0 * kPi * 64.0).epsilon(1e-14));
    CHECK(torus_ball_volume(4, 12.0, 3.0) == doctest::Approx(kPi * kPi * 81.0 / 2.0).epsilon(1e-14));
    CHECK_THROWS(torus_ball_volume(3, 12.0, 6.5));
    CHECK_THROWS(torus_ball_volume(4, 12.0, 6.5));
    CHECK_THROWS(torus_ball_volume(2, 12.0, -1.0));

    const double a = torus_shell_volume(2, L, 1.0, 4.0);
    const double b = torus_shell_volume(2, L, 4.0, 7.0);
    CHECK(a + b == doctest::Approx(torus_shell_volume(2, L, 1.0, 7.0)).epsilon(1e-13));
    CHECK_THROWS(torus_shell_volume(2, L, 3.0, 3.0));
}

TEST_CASE("pair correlation: poisson flat, hardcore hole, two-point oracle") {
    TorusDomain dom(2, 20.0, 64);
    const auto ens = poisson_ensemble(dom, 0.05, 200, 900);
    const std::vector<double> edges{0.5, 2.0, 3.5, 5.0, 6.5, 8.0};
    const auto est = estimate_pair_correlation(ens, edges);
    for (std::size_t b = 0; b < est.g2.size(); ++b) {
        CHECK(est.g2[b] >= -1.0);
        CHECK(std::abs(est.g2[b]) <= 4.0 * est.stderrs[b]);
    }
    CHECK(est.intensity == doctest::Approx(0.05).epsilon(0.1));

    // Matern hardcore: bins strictly inside 2(1+delta) hold no pairs at all,
    // so the estimator returns exactly -1 there.
    std::vector<ParticleConfiguration> mat;
    for (int r = 0; r < 50; ++r) mat.push_back(sample_matern_hardcore(dom, 0.05, 0.1, 300 + r));
    const auto hard = estimate_pair_correlation(mat, {0.7, 1.4, 2.1});
    CHECK(hard.g2[0] == -1.0);
    CHECK(hard.g2[1] == -1.0);

    // Deterministic two-point configurations: hand-computed shell estimate.
    TorusDomain fine(2, 12.0, 120);
    ParticleConfiguration two{fine, {pt2(0.0, 0.0), pt2(3.0, 0.0)}, 1.0, 0.05};
    const auto det = estimate_pair_correlation({two, two}, {2.9, 3.1});
    const double vol = 144.0;
    const double rho = 2.0 / vol;
    const double vsh = torus_shell_volume(2, 12.0, 2.9, 3.1);
    const double expected = 4.0 / (rho * rho * vol * vsh * 2.0) - 1.0;
    CHECK(det.g2[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(det.intensity == doctest::Approx(rho).epsilon(1e-14));

    CHECK_THROWS(estimate_pair_correlation({two}, {2.9, 3.1}));
    CHECK_THROWS(estimate_pair_correlation({two, two}, {2.9, 2.95}));  // width < 2h
    CHECK_THROWS(estimate_pair_correlation({two, two}, {3.1, 2.9}));
}

TEST_CASE("pair correlation vs count variance: exact full-range identity") {
    // With bins covering every attainable distance, the shell sums telescope:
    // rho^2 L^d (int g2 + 1/rho) = mean[N^2] - mean[N]^2, which is the
    // MLE count variance, i.e. (M-1)/M times the unbiased one.
    TorusDomain dom(2, 12.0, 64);
    const int m = 60;
    const auto ens = poisson_ensemble(dom, 0.15, m, 4100);
    std::vector<double> edges;
    for (int b = 0; b <= 8; ++b) edges.push_back(b);
    edges.push_back(8.49);  // just past the torus diameter L/sqrt(2)
    const auto est = estimate_pair_correlation(ens, edges);

    double int_g2 = 0.0;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
        int_g2 += est.g2[b] * torus_shell_volume(2, 12.0, edges[b], edges[b + 1]);
    const double vol = 144.0;
    const double route_pairs = est.intensity * est.intensity * vol * int_g2 + est.intensity * vol;

    std::vector<double> counts;
    for (const auto& cfg : ens) counts.push_back(cfg.count());
    const double route_counts = sample_variance(counts) * (m - 1) / m;
    CHECK(route_pairs == doctest::Approx(route_counts).epsilon(1e-9));
}

TEST_CASE("structure factor: poisson unity, lattice bragg peaks and nulls") {
    TorusDomain dom(2, 16.0, 64);
    const double dk = 2.0 * kPi / 16.0;
    const auto ens = poisson_ensemble(dom, 0.15, 250, 1700);
    const auto est = estimate_structure_factor(ens, 6.2 * dk);
    REQUIRE(est.s.size() >= 10);
    for (std::size_t g = 0; g < est.s.size(); ++g) {
        CHECK(est.s[g] >= 0.0);
        CHECK(std::abs(est.s[g] - 1.0) <= 4.0 * est.stderrs[g]);
    }

    // Rigid lattice (u_max = 0, random global shift only): exact phase
    // cancellation off the reciprocal lattice, full peak N on it.
    const auto lat = lattice_ensemble(dom, 4.0, 0.0, 30, 50);
    const auto sl = estimate_structure_factor(lat, 4.05 * dk);
    bool saw_bragg = false;
    for (std::size_t g = 0; g < sl.s.size(); ++g) {
        const double msq = std::pow(sl.k_mag[g] / dk, 2);
        if (std::abs(msq - 16.0) < 0.5) {
            CHECK(sl.s[g] == doctest::Approx(16.0).epsilon(1e-9));
            saw_bragg = true;
        } else {
            CHECK(sl.s[g] <= 1e-10);
        }
    }
    CHECK(saw_bragg);

    CHECK_THROWS(estimate_structure_factor(lat, 0.5 * dk));
}

TEST_CASE("structure factor: perturbed lattice small-k suppression grows with L") {
    // S(2pi/L) ~ 1 - |char fn of the displacement|^2 -> 0 as L grows.
    double prev_s = 0.0, prev_se = 0.0;
    bool first = true;
    for (double L : {16.0, 32.0, 64.0}) {
        TorusDomain dom(2, L, static_cast<int>(L) * 4);
        const auto ens = lattice_ensemble(dom, 8.0, 2.4, 300, 7000 + static_cast<int>(L));
        const auto est = estimate_structure_factor(ens, 1.2 * (2.0 * kPi / L));
        REQUIRE(est.s.size() == 1);
        if (!first)
            CHECK(prev_s - est.s[0] >
                  3.0 * std::sqrt(prev_se * prev_se + est.stderrs[0] * est.stderrs[0]));
        prev_s = est.s[0];
        prev_se = est.stderrs[0];
        first = false;
    }
}

TEST_CASE("structure factor and g2 routes agree on a matern ensemble") {
    // S(k) = 1 + rho * 2pi int g2(r) J0(kr) r dr in d=2; g2 of the hardcore
    // thinning vanishes identically beyond twice the exclusion radius, so a
    // binned transform truncated at L/2 carries no systematic tail.
    TorusDomain dom(2, 20.0, 80);
    std::vector<ParticleConfiguration> ens;
    for (int r = 0; r < 200; ++r) ens.push_back(sample_matern_hardcore(dom, 0.05, 0.1, 9200 + r));

    const std::vector<double> edges{0.0, 1.1, 2.2, 2.75, 3.3, 3.85, 4.4, 5.5, 6.6, 7.7, 8.8, 10.0};
    const auto g2 = estimate_pair_correlation(ens, edges);

    const double dk = 2.0 * kPi / 20.0;
    const auto sf = estimate_structure_factor(ens, 2.2 * dk);
    int gi = -1;
    for (std::size_t g = 0; g < sf.k_mag.size(); ++g)
        if (std::abs(sf.k_mag[g] - 2.0 * dk) < 1e-9) gi = static_cast<int>(g);
    REQUIRE(gi >= 0);
    const double k = sf.k_mag[gi];

    double ft = 0.0, ft_err = 0.0;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        const double ib = radial_bessel_integral(k, edges[b], edges[b + 1]);
        ft += g2.g2[b] * ib;
        ft_err += std::pow(g2.stderrs[b] * ib, 2);
    }
    const double predicted = 1.0 + g2.intensity * 2.0 * kPi * ft;
    const double sigma =
        std::sqrt(sf.stderrs[gi] * sf.stderrs[gi] + std::pow(g2.intensity * 2.0 * kPi, 2) * ft_err);
    CHECK(std::abs(sf.s[gi] - predicted) <= 4.0 * sigma + 0.05);
}

TEST_CASE("hyperuniformity metric: lattice zero, poisson L^2/rho growth") {
    TorusDomain dom(2, 16.0, 64);
    const auto lat = lattice_ensemble(dom, 4.0, 0.9, 25, 60);
    const auto zero = hyperuniformity_metric(lat);
    CHECK(zero.value == 0.0);
    CHECK(zero.stderr_ == 0.0);

    const auto poi = poisson_ensemble(dom, 0.2, 300, 2400);
    const auto grow = hyperuniformity_metric(poi);
    CHECK(grow.stderr_ > 0.0);
    CHECK(std::abs(grow.value - 16.0 * 16.0 / 0.2) <= 4.0 * grow.stderr_);

    CHECK_THROWS(hyperuniformity_metric(poisson_ensemble(dom, 0.2, 10, 67)));
}

TEST_CASE("number variance curve: poisson volume law, lattice surface law") {
    TorusDomain dom(3, 24.0, 96);
    const std::vector<double> radii{2.0, 3.0, 4.5, 6.0};

    const auto poi = poisson_ensemble(dom, 0.02, 200, 5200);
    const auto pc = number_variance_curve(poi, radii);
    for (std::size_t i = 0; i < radii.size(); ++i)
        CHECK(std::abs(pc.variance[i] - 0.02 * ball_volume(3, radii[i])) <= 4.0 * pc.stderrs[i]);
    CHECK(pc.fit.exponent == doctest::Approx(3.0).epsilon(0.1));

    const auto lat = lattice_ensemble(dom, 4.0, 0.9, 250, 5600);
    const auto lc = number_variance_curve(lat, radii);
    CHECK(std::abs(lc.fit.exponent - 2.0) <= 0.4);
    CHECK(lc.variance[3] < 0.5 * pc.variance[3]);

    // Degenerate ensemble: identical configurations, zero variance, no fit.
    std::vector<ParticleConfiguration> same(
        25, sample_perturbed_lattice(dom, 4.0, 0.0, 9, /*stationarize=*/false));
    const auto dc = number_variance_curve(same, radii);
    for (double v : dc.variance) CHECK(v == 0.0);
    CHECK(std::isnan(dc.fit.exponent));

    CHECK_THROWS(number_variance_curve(poi, {7.0}));  // beyond L/4
    CHECK_THROWS(number_variance_curve(std::vector<ParticleConfiguration>(
                                           5, sample_poisson(dom, 0.02, 3)),
                                       radii));
}

TEST_CASE("linear functional variance: constants, campbell, dichotomy") {
    TorusDomain dom(2, 16.0, 64);
    const double vol = 256.0;
    const auto lat = lattice_ensemble(dom, 4.0, 0.9, 200, 80);
    const auto poi = poisson_ensemble(dom, 1.0 / 16.0, 300, 3100);

    auto constant = [](const Point&) { return 2.5; };
    const auto lv = linear_functional_variance(lat, dom, constant, /*want_hyperuniform_bound=*/false);
    CHECK(lv.variance == 0.0);
    CHECK(std::isnan(lv.hyperuniform_bound));

    const auto pv = linear_functional_variance(poi, dom, constant, false);
    CHECK(std::abs(pv.variance - 2.5 * 2.5 * (1.0 / 16.0) * vol) <= 4.0 * pv.stderr_);
    CHECK(pv.mixing_bound > 0.0);
    CHECK_THROWS(linear_functional_variance(poi, dom, constant, true));

    // Long-wavelength mean-zero mode: Poisson tracks the Campbell value
    // rho int zeta^2, the perturbed lattice sits far below it and within a
    // small multiple of the gradient functional.
    auto mode = [&](const Point& x) { return std::cos(2.0 * kPi * x[0] / dom.L); };
    const auto pm = linear_functional_variance(poi, dom, mode, true);
    const auto lm = linear_functional_variance(lat, dom, mode, true);
    const double int_z2 = vol / 2.0;
    const double rho_poi = [&] {
        double n = 0.0;
        for (const auto& c : poi) n += c.count();
        return n / (poi.size() * vol);
    }();
    CHECK(pm.mixing_bound == doctest::Approx(rho_poi * rho_poi * int_z2).epsilon(1e-10));
    CHECK(std::abs(pm.variance - (1.0 / 16.0) * int_z2) <= 4.0 * pm.stderr_);
    CHECK(lm.variance < 0.2 * pm.variance);
    CHECK(lm.variance <= 10.0 * lm.hyperuniform_bound);

    // Grid-field version: quadrature of the bounds is exact for a pure mode.
    SpectralField zf(dom, 1);
    for (std::int64_t c = 0; c < dom.cells(); ++c) {
        const auto idx = dom.unflat(c);
        zf.at(0, c) = std::cos(2.0 * kPi * dom.coord(idx[0]) / dom.L);
    }
    const auto gm = linear_functional_variance(lat, zf, true);
    const double rho_hat = [&] {
        double n = 0.0;
        for (const auto& c : lat) n += c.count();
        return n / (lat.size() * vol);
    }();
    CHECK(gm.mixing_bound == doctest::Approx(rho_hat * rho_hat * int_z2).epsilon(1e-10));
    const double k1 = 2.0 * kPi / dom.L;
    CHECK(gm.hyperuniform_bound ==
          doctest::Approx(rho_hat * rho_hat * k1 * k1 * int_z2).epsilon(1e-10));
}

TEST_CASE("estimators are invariant under a global translation") {
    TorusDomain dom(2, 16.0, 64);
    const auto ens = poisson_ensemble(dom, 0.1, 40, 7700);
    const auto moved = translated(ens, pt2(0.7, -1.3));

    const std::vector<double> edges{1.0, 2.5, 4.0};
    const auto g0 = estimate_pair_correlation(ens, edges);
    const auto g1 = estimate_pair_correlation(moved, edges);
    for (std::size_t b = 0; b < g0.g2.size(); ++b)
        CHECK(g0.g2[b] == doctest::Approx(g1.g2[b]).epsilon(1e-12));

    const double dk = 2.0 * kPi / 16.0;
    const auto s0 = estimate_structure_factor(ens, 3.1 * dk);
    const auto s1 = estimate_structure_factor(moved, 3.1 * dk);
    for (std::size_t g = 0; g < s0.s.size(); ++g)
        CHECK(s0.s[g] == doctest::Approx(s1.s[g]).epsilon(1e-9));

    const auto h0 = hyperuniformity_metric(ens);
    const auto h1 = hyperuniformity_metric(moved);
    CHECK(h0.value == h1.value);
}

TEST_CASE("power law and log-linear fits: exact data recovered to rounding") {
    const std::vector<double> xs{2.0, 3.0, 5.0, 8.0, 13.0};
    std::vector<double> ys;
    for (double x : xs) ys.push_back(3.7 * std::pow(x, 1.6));
    const auto fit = fit_power_law(xs, ys);
    CHECK(fit.exponent == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(fit.amplitude == doctest::Approx(3.7).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.exponent_stderr <= 1e-12);

    const auto wfit = fit_power_law(xs, ys, {0.1, 0.2, 0.5, 1.0, 2.0});
    CHECK(wfit.exponent == doctest::Approx(1.6).epsilon(1e-12));

    std::vector<double> flat(xs.size(), 4.2);
    CHECK(fit_power_law(xs, flat).exponent == doctest::Approx(0.0).epsilon(1e-12));

    // Synthetic noisy half-power data.
    const std::vector<double> noise{1.03, 0.96, 1.05, 0.98, 1.02, 0.95, 1.04, 0.97};
    std::vector<double> nx, ny;
    for (int i = 0; i < 8; ++i) {
        nx.push_back(2.0 * (i + 1));
        ny.push_back(std::sqrt(nx.back()) * noise[i]);
    }
    CHECK(std::abs(fit_power_law(nx, ny).exponent - 0.5) <= 0.1);

    std::vector<double> lys;
    for (double x : xs) lys.push_back(2.5 + 0.8 * std::log(x));
    const auto lfit = fit_log_linear(xs, lys);
    CHECK(lfit.slope == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(lfit.intercept == doctest::Approx(2.5).epsilon(1e-12));

    CHECK_THROWS(fit_power_law({1.0, 2.0}, {1.0, 2.0}));
    CHECK_THROWS(fit_power_law({1.0, 2.0, 3.0}, {1.0, -2.0, 3.0}));
    CHECK_THROWS(fit_power_law({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(fit_log_linear({1.0, 2.0, 3.0}, {1.0, 2.0}));
}

TEST_CASE("sample variance and jackknife of the mean") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    CHECK(sample_variance(xs) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS(sample_variance({1.0}));

    // Jackknife of the mean reduces to s/sqrt(m) identically.
    const std::vector<double> v{0.3, 1.7, -2.2, 0.9, 4.1, -0.6};
    const int m = static_cast<int>(v.size());
    double full = 0.0;
    for (double x : v) full += x;
    full /= m;
    auto loo = [&](int skip) {
        double s = 0.0;
        for (int i = 0; i < m; ++i)
            if (i != skip) s += v[i];
        return s / (m - 1);
    };
    const double se = jackknife_stderr(m, loo, full);
    CHECK(se == doctest::Approx(std::sqrt(sample_variance(v) / m)).epsilon(1e-12));
}

TEST_CASE("efron-stein bound for perturbed-lattice functionals") {
    TorusDomain dom(2, 18.0, 72);
    const double L = dom.L;

    auto y1 = [&](const ParticleConfiguration& c) {
        double s = 0.0;
        for (const auto& p : c.centers) s += std::cos(2.0 * kPi * p[0] / L);
        return s;
    };
    auto y2 = [&](const ParticleConfiguration& c) {
        double s = 0.0;
        for (const auto& p : c.centers)
            s += std::sin(2.0 * kPi * p[1] / L) + 0.5 * std::cos(4.0 * kPi * p[0] / L);
        return s;
    };
    auto y3 = [&](const ParticleConfiguration& c) {
        return y1(c) * y1(c) / static_cast<double>(c.count());
    };

    const auto c1 = efron_stein_lattice_check(dom, 4.5, 1.0, 40, 11, y1);
    const auto c2 = efron_stein_lattice_check(dom, 4.5, 1.0, 40, 12, y2);
    const auto c3 = efron_stein_lattice_check(dom, 4.5, 1.0, 40, 13, y3);
    CHECK(c1.holds);
    CHECK(c2.holds);
    CHECK(c3.holds);

    // For a sum of independent per-site terms the bound is an equality.
    CHECK(std::abs(c1.variance - c1.es_bound) <=
          4.0 * (c1.variance_stderr + c1.es_bound_stderr));
    CHECK(c1.es_bound > 0.0);

    CHECK_THROWS(efron_stein_lattice_check(dom, 4.5, 0.9, 40, 11, y1));
    CHECK_THROWS(efron_stein_lattice_check(dom, 4.5, 1.0, 10, 11, y1));
}
