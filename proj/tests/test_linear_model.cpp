#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "sedsim/linear_model.hpp"
#include "sedsim/point_process.hpp"
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

Point pt3(double x, double y, double z) {
    Point p(3);
    p << x, y, z;
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

ParticleConfiguration four_particles(const TorusDomain& dom) {
    return ParticleConfiguration{
        dom, {pt2(-5.0, -5.0), pt2(-1.0, 3.0), pt2(4.0, -2.0), pt2(6.0, 5.0)}, 1.0, 0.1};
}

}  // namespace

TEST_CASE("linear solve: superposition over particles") {
    TorusDomain dom(2, 16.0, 64);
    const auto cfg = four_particles(dom);
    const Eigen::VectorXd e = vec2(1.0, 0.5);
    const auto full = solve_linear(dom, cfg, e, 64);

    SpectralField acc(full.dom, dom.d);
    SpectralField pacc(full.dom, 1);
    std::vector<Eigen::VectorXd> vel_sum(cfg.count(), Eigen::VectorXd::Zero(dom.d));
    for (int n = 0; n < cfg.count(); ++n) {
        ParticleConfiguration one{dom, {cfg.centers[n]}, 1.0, 0.1};
        const auto sol = solve_linear(dom, one, e, 64);
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += sol.phi.data[i];
        for (std::size_t i = 0; i < pacc.data.size(); ++i) pacc.data[i] += sol.pressure.data[i];
        vel_sum[n] += ball_average(sol.phi, cfg.centers[n]);
        for (int k = 0; k < cfg.count(); ++k)
            if (k != n) vel_sum[k] += ball_average(sol.phi, cfg.centers[k]);
    }
    CHECK(rel_l2(full.phi.data, acc.data) <= 1e-12);
    CHECK(rel_l2(full.pressure.data, pacc.data) <= 1e-12);
    for (int n = 0; n < cfg.count(); ++n)
        CHECK((full.velocities[n] - vel_sum[n]).norm() <= 1e-12 * (vel_sum[n].norm() + 1e-6));

    TorusDomain d3(3, 8.0, 32);
    ParticleConfiguration c3{d3, {pt3(-2.0, 0.0, 0.0), pt3(2.0, 0.5, 1.0)}, 1.0, 0.02};
    Eigen::VectorXd e3(3);
    e3 << 0.0, 0.0, -1.0;
    const auto f3 = solve_linear(d3, c3, e3, 32);
    SpectralField a3(f3.dom, 3);
    for (const auto& center : c3.centers) {
        ParticleConfiguration one{d3, {center}, 1.0, 0.02};
        const auto s = solve_linear(d3, one, e3, 32);
        for (std::size_t i = 0; i < a3.data.size(); ++i) a3.data[i] += s.phi.data[i];
    }
    CHECK(rel_l2(f3.phi.data, a3.data) <= 1e-12);
}

TEST_CASE("linear solve: incompressibility, zero mean, gravity parity") {
    TorusDomain dom(2, 16.0, 64);
    const auto cfg = four_particles(dom);
    const Eigen::VectorXd e = vec2(0.3, -1.0);
    const auto sol = solve_linear(dom, cfg, e, 64);

    double scale = 0.0;
    for (double v : sol.phi.data) scale = std::max(scale, std::abs(v));
    REQUIRE(scale > 0.0);

    FourierField ph = fft_of(sol.phi);
    const SpectralField div = ifft_of(divergence_fd(ph));
    for (double v : div.data) CHECK(std::abs(v) <= 1e-12 * scale);
    for (int c = 0; c < 2; ++c) {
        double mean = 0.0;
        const double* p = sol.phi.comp(c);
        for (std::int64_t i = 0; i < sol.dom.cells(); ++i) mean += p[i];
        CHECK(std::abs(mean / sol.dom.cells()) <= 1e-13 * scale);
    }

    const auto neg = solve_linear(dom, cfg, (-e).eval(), 64);
    for (std::size_t i = 0; i < sol.phi.data.size(); ++i)
        CHECK(sol.phi.data[i] == doctest::Approx(-neg.phi.data[i]).epsilon(1e-12).scale(scale));
}

TEST_CASE("linear solve: discrete momentum balance per mode") {
    TorusDomain dom(2, 10.0, 40);
    ParticleConfiguration cfg{dom, {pt2(-2.5, -1.0), pt2(2.0, 2.5)}, 1.0, 0.1};
    const Eigen::VectorXd e = vec2(1.0, -0.7);
    const auto sol = solve_linear(dom, cfg, e, 40);

    SpectralField ind(sol.dom, 1);
    for (const auto& cells : inclusion_cells(sol.dom, cfg))
        for (std::int64_t c : cells) ind.at(0, c) = 1.0;
    FourierField sh = fft_of(ind);
    FourierField uh = fft_of(sol.phi);
    FourierField phh = fft_of(sol.pressure);
    const FdSymbols fd(sol.dom);

    double src_scale = 0.0;
    for_each_mode(sol.dom, [&](const ModeInfo& mi) {
        src_scale = std::max(src_scale, std::abs(sh.comp(0)[mi.flat]));
    });
    for_each_mode(sol.dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) return;
        double g2 = 0.0;
        for (int c = 0; c < 2; ++c) g2 += std::norm(fd(mi.m[c]));
        for (int c = 0; c < 2; ++c) {
            const std::complex<double> resid = g2 * uh.comp(c)[mi.flat] +
                                               fd(mi.m[c]) * phh.comp(0)[mi.flat] -
                                               sh.comp(0)[mi.flat] * e[c];
            CHECK(std::abs(resid) <= 1e-11 * src_scale);
        }
    });

    const auto nop = solve_linear(dom, cfg, e, 40, /*with_pressure=*/false);
    for (double v : nop.pressure.data) CHECK(v == 0.0);
    CHECK(rel_l2(nop.phi.data, sol.phi.data) <= 1e-14);
}

TEST_CASE("settling speeds: discrete energy identity ties the two routes") {
    TorusDomain dom(2, 16.0, 96);
    const auto cfg = four_particles(dom);
    const Eigen::VectorXd e = vec2(0.0, -1.0);
    const auto sol = solve_linear(dom, cfg, e, 96);
    const auto speeds = linear_settling_speed(sol);

    // Exact by the summation-by-parts structure: |grad phi|^2 integrates to
    // h^d sum_n N_b(n) e.V_n (phi is divergence-free and mean-zero).
    const double energy = gradient_square_integral_fd(fft_of(sol.phi));
    const auto cells = inclusion_cells(sol.dom, cfg);
    const double hd = std::pow(sol.dom.h(), 2);
    double rhs = 0.0;
    for (int n = 0; n < cfg.count(); ++n) rhs += hd * cells[n].size() * e.dot(sol.velocities[n]);
    CHECK(energy == doctest::Approx(rhs).epsilon(1e-10));

    const double lam = cfg.volume_fraction();
    CHECK(speeds.from_energy ==
          doctest::Approx(energy / (std::pow(dom.L, 2) * lam * e.norm())).epsilon(1e-12));

    // The routes differ only through the cell-counted ball measure, so they
    // agree up to grid resolution of the disk.
    CHECK(speeds.from_energy / speeds.from_velocities == doctest::Approx(1.0).epsilon(0.2));

    ParticleConfiguration empty{dom, {}, 1.0, 0.1};
    CHECK_THROWS(linear_settling_speed(LinearSolution{sol.dom, empty, e, sol.phi, sol.pressure, {}}));
}

TEST_CASE("linear solve: input validation") {
    TorusDomain dom(2, 16.0, 64);
    const Eigen::VectorXd e = vec2(1.0, 0.0);
    Eigen::VectorXd e3(3);
    e3 << 1.0, 0.0, 0.0;
    const auto cfg = four_particles(dom);

    TorusDomain d1(1, 16.0, 64);
    ParticleConfiguration c1{d1, {}, 1.0, 0.1};
    Eigen::VectorXd e1(1);
    e1 << 1.0;
    CHECK_THROWS(solve_linear(d1, c1, e1, 64));
    CHECK_THROWS(solve_linear(dom, cfg, e3, 64));

    ParticleConfiguration overlap{dom, {pt2(0.0, 0.0), pt2(1.5, 0.0)}, 1.0, 0.1};
    CHECK_THROWS(solve_linear(dom, overlap, e, 64));

    ParticleConfiguration nodelta{dom, {pt2(0.0, 0.0), pt2(5.0, 0.0)}, 1.0, 0.0};
    CHECK_THROWS(solve_linear(dom, nodelta, e, 64));

    CHECK_THROWS(solve_linear(dom, cfg, e, 32));  // h = 1/2 too coarse
}

TEST_CASE("pooled fluctuation: hand-built velocity sets") {
    std::vector<std::vector<Eigen::VectorXd>> sets;
    for (int r = 0; r < 24; ++r) {
        if (r % 2 == 0)
            sets.push_back({vec2(1.0, 0.0), vec2(-1.0, 0.0)});
        else
            sets.push_back({vec2(0.0, 2.0), vec2(0.0, -2.0)});
    }
    const auto sig = linear_fluctuation(sets);
    CHECK(sig.value == doctest::Approx(std::sqrt(2.5)).epsilon(1e-14));
    CHECK(sig.stderr_ > 0.0);

    // Empty realizations contribute no particles but keep the estimator defined.
    sets[3].clear();
    CHECK_NOTHROW(linear_fluctuation(sets));

    CHECK_THROWS(linear_fluctuation(std::vector<std::vector<Eigen::VectorXd>>(10, sets[0])));
    CHECK_THROWS(linear_fluctuation(
        std::vector<std::vector<Eigen::VectorXd>>(25, std::vector<Eigen::VectorXd>{})));
}

TEST_CASE("scalar proxy kernels: green-function ball averages and gradients") {
    TorusDomain dom(2, 16.0, 64);
    const auto ker = build_scalar_proxy_kernels(dom);
    REQUIRE(ker.g_ball.comps == 1);
    REQUIRE(ker.f.comps == 2);

    CHECK(std::abs(field_mean(ker.g_ball, 0)) <= 1e-13);

    // The spectral stencil product reproduces direct ball averages of the
    // periodic Green function at grid points.
    const SpectralField green = laplace_green(dom, Point::Zero(2));
    for (auto [i, j] : {std::pair<int, int>{0, 0}, {7, 3}, {40, 12}, {21, 55}}) {
        Point x(2);
        x << dom.coord(i), dom.coord(j);
        const double direct = ball_average(green, x)[0];
        const double viaker = ker.g_ball.at(0, dom.flat({i, j, 0, 0}));
        CHECK(viaker == doctest::Approx(direct).epsilon(1e-10));
    }

    // Evenness of the ball-averaged Green function.
    for (auto [i, j] : {std::pair<int, int>{5, 9}, {13, 40}}) {
        const double a = ker.g_ball.at(0, dom.flat({i, j, 0, 0}));
        const double b = ker.g_ball.at(0, dom.flat({(64 - i) % 64, (64 - j) % 64, 0, 0}));
        CHECK(a == doctest::Approx(b).epsilon(1e-10));
    }

    // f is the ball-measure-weighted spectral gradient of g_ball.
    const std::int64_t nb = static_cast<std::int64_t>(ball_cells(dom, Point::Zero(2)).size());
    const double ball_meas = nb * std::pow(dom.h(), 2);
    FourierField gh = fft_of(ker.g_ball);
    FourierField gradh = gradient(gh);
    const SpectralField grad = ifft_of(std::move(gradh));
    double fscale = 0.0;
    for (double v : ker.f.data) fscale = std::max(fscale, std::abs(v));
    for (std::size_t i = 0; i < ker.f.data.size(); ++i)
        CHECK(std::abs(ker.f.data[i] - ball_meas * grad.data[i]) <= 1e-12 * fscale);
}

TEST_CASE("scalar proxy statistics: direct evaluation and campbell variance") {
    TorusDomain dom(2, 16.0, 64);
    std::vector<ParticleConfiguration> ens;
    for (int r = 0; r < 150; ++r) ens.push_back(sample_poisson(dom, 0.08, 6100 + r));
    const auto stats = scalar_proxy_statistics(ens, dom);

    // Recompute both sums from the public kernels.
    const auto ker = build_scalar_proxy_kernels(dom);
    const int m = static_cast<int>(ens.size());
    std::vector<double> gsum(m, 0.0), f0(m, 0.0), f1(m, 0.0);
    for (int r = 0; r < m; ++r)
        for (const auto& p : ens[r].centers) {
            gsum[r] += interpolate(ker.g_ball, p)[0];
            const SpectralField& f = ker.f;
            // interpolate returns all components at once
            const Eigen::VectorXd fv = interpolate(f, p);
            f0[r] += fv[0];
            f1[r] += fv[1];
        }
    CHECK(stats.fluctuation_proxy_variance.value ==
          doctest::Approx(sample_variance(gsum)).epsilon(1e-12));
    CHECK(stats.speed_proxy_variance.value ==
          doctest::Approx(sample_variance(f0) + sample_variance(f1)).epsilon(1e-12));

    // Poisson: E[sum F] = rho int F = 0 and Var[sum zeta] = rho int zeta^2.
    double mean_f0 = 0.0, mean_f1 = 0.0, mean_g = 0.0;
    for (int r = 0; r < m; ++r) {
        mean_f0 += f0[r];
        mean_f1 += f1[r];
        mean_g += gsum[r];
    }
    mean_f0 /= m;
    mean_f1 /= m;
    mean_g /= m;
    const double se_f0 = std::sqrt(sample_variance(f0) / m);
    const double se_f1 = std::sqrt(sample_variance(f1) / m);
    const double se_g = std::sqrt(sample_variance(gsum) / m);
    CHECK(std::abs(mean_f0) <= 4.0 * se_f0);
    CHECK(std::abs(mean_f1) <= 4.0 * se_f1);
    CHECK(std::abs(mean_g) <= 4.0 * se_g);

    const double hd = std::pow(dom.h(), 2);
    double int_f2 = 0.0, int_g2 = 0.0;
    for (std::size_t i = 0; i < ker.f.data.size(); ++i) int_f2 += ker.f.data[i] * ker.f.data[i];
    for (std::size_t i = 0; i < ker.g_ball.data.size(); ++i)
        int_g2 += ker.g_ball.data[i] * ker.g_ball.data[i];
    int_f2 *= hd;
    int_g2 *= hd;
    CHECK(std::abs(stats.speed_proxy_variance.value - 0.08 * int_f2) <=
          4.0 * stats.speed_proxy_variance.stderr_ + 0.02 * 0.08 * int_f2);
    CHECK(std::abs(stats.fluctuation_proxy_variance.value - 0.08 * int_g2) <=
          4.0 * stats.fluctuation_proxy_variance.stderr_ + 0.02 * 0.08 * int_g2);

    CHECK_THROWS(scalar_proxy_statistics({ens[0]}, dom));
}

TEST_CASE("field fluctuation equals pointwise variance under stationarity") {
    // The mean of the cell-averaged |phi|^2 is, by stationarity of the
    // ensemble, the trace of the covariance of phi at any fixed point; the
    // two Monte Carlo routes must agree within their combined errors.
    TorusDomain dom(2, 16.0, 64);
    const Eigen::VectorXd e = vec2(0.0, -1.0);
    const int m = 200;

    std::vector<double> qs(m);
    std::array<std::int64_t, 3> probes{0, dom.flat({17, 5, 0, 0}), dom.flat({40, 51, 0, 0})};
    std::vector<std::array<double, 3>> probe0(m), probe1(m);
    for (int r = 0; r < m; ++r) {
        const auto cfg = sample_matern_hardcore(dom, 0.02, 0.1, 8300 + r);
        if (cfg.count() == 0) {
            qs[r] = 0.0;
            probe0[r] = {0.0, 0.0, 0.0};
            probe1[r] = {0.0, 0.0, 0.0};
            continue;
        }
        const auto sol = solve_linear(dom, cfg, e, 64);
        double acc = 0.0;
        for (double v : sol.phi.data) acc += v * v;
        qs[r] = acc / static_cast<double>(dom.cells());
        for (int k = 0; k < 3; ++k) {
            probe0[r][k] = sol.phi.at(0, probes[k]);
            probe1[r][k] = sol.phi.at(1, probes[k]);
        }
    }

    double qbar = 0.0;
    for (double q : qs) qbar += q;
    qbar /= m;
    const double q_se = std::sqrt(sample_variance(qs) / m);

    for (int k = 0; k < 3; ++k) {
        std::vector<double> a(m), b(m);
        for (int r = 0; r < m; ++r) {
            a[r] = probe0[r][k];
            b[r] = probe1[r][k];
        }
        const double trace_var = sample_variance(a) + sample_variance(b);
        const double tv_se = (sample_variance(a) + sample_variance(b)) * std::sqrt(2.0 / (m - 1));
        CHECK(std::abs(trace_var - qbar) <= 4.0 * std::sqrt(tv_se * tv_se + q_se * q_se));
    }
}
