#include "sedsim/linear_model.hpp"

#include <cmath>
#include <stdexcept>

#include "sedsim/spectral_ops.hpp"

namespace sedsim {

std::vector<std::vector<std::int64_t>> inclusion_cells(const TorusDomain& dom,
                                                       const ParticleConfiguration& config) {
    std::vector<std::vector<std::int64_t>> cells(config.count());
    std::vector<char> taken(dom.cells(), 0);
    for (int n = 0; n < config.count(); ++n) {
        cells[n] = ball_cells(dom, config.centers[n]);
        for (std::int64_t c : cells[n]) {
            if (taken[c]) throw std::invalid_argument("overlapping particles on the grid");
            taken[c] = 1;
        }
    }
    return cells;
}

LinearSolution solve_linear(const TorusDomain& dom, const ParticleConfiguration& config,
                            const Eigen::VectorXd& e, int n_grid, bool with_pressure) {
    const int d = dom.d;
    if (d < 2 || d > 3) throw std::invalid_argument("solve_linear: d must be 2 or 3");
    if (e.size() != d) throw std::invalid_argument("solve_linear: gravity dimension mismatch");
    config.require_hardcore();

    const TorusDomain grid(dom.d, dom.L, n_grid);
    grid.require_resolution();
    const auto cells = inclusion_cells(grid, config);

    // Cell-center indicator source; the lambda subtraction is the zero mode.
    SpectralField ind(grid, 1);
    for (const auto& cs : cells)
        for (std::int64_t c : cs) ind.at(0, c) = 1.0;
    FourierField s = fft_of(ind);
    const std::complex<double>* sc = s.comp(0);

    FourierField u(grid, d);
    std::complex<double>* uc[4];
    for (int c = 0; c < d; ++c) uc[c] = u.comp(c);
    FourierField p(grid, with_pressure ? 1 : 0);
    std::complex<double>* pc = with_pressure ? p.comp(0) : nullptr;
    const FdSymbols fd(grid);

    for_each_mode(grid, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            for (int c = 0; c < d; ++c) uc[c][mi.flat] = 0.0;
            if (pc) pc[mi.flat] = 0.0;
            return;
        }
        const std::complex<double> f = sc[mi.flat];
        std::complex<double> g[4];
        double g2 = 0.0;
        for (int c = 0; c < d; ++c) {
            g[c] = fd(mi.m[c]);
            g2 += std::norm(g[c]);
        }
        std::complex<double> ge = 0.0;
        for (int c = 0; c < d; ++c) ge += std::conj(g[c]) * e[c];
        ge /= g2;
        for (int c = 0; c < d; ++c) uc[c][mi.flat] = f * (e[c] - g[c] * ge) / g2;
        if (pc) pc[mi.flat] = ge * f;
    });

    LinearSolution sol{grid,
                       config,
                       e,
                       ifft_of(std::move(u)),
                       with_pressure ? ifft_of(std::move(p)) : SpectralField(grid, 1),
                       {}};
    sol.velocities.reserve(config.count());
    for (int n = 0; n < config.count(); ++n)
        sol.velocities.push_back(ball_average(sol.phi, config.centers[n]));
    return sol;
}

SettlingSpeeds linear_settling_speed(const LinearSolution& sol) {
    const int n = sol.config.count();
    if (n == 0) throw std::invalid_argument("linear_settling_speed: empty configuration");
    const double emag = sol.e.norm();
    SettlingSpeeds out;
    for (const auto& v : sol.velocities) out.from_velocities += sol.e.dot(v) / emag;
    out.from_velocities /= n;

    const double energy = gradient_square_integral_fd(fft_of(sol.phi));
    const double lam = sol.config.volume_fraction();
    out.from_energy = energy / (std::pow(sol.dom.L, sol.dom.d) * lam * emag);
    return out;
}

ValueWithError linear_fluctuation(const std::vector<std::vector<Eigen::VectorXd>>& velocity_sets) {
    const int m = static_cast<int>(velocity_sets.size());
    if (m < 20) throw std::invalid_argument("linear_fluctuation: need >= 20 realizations");
    int d = 0;
    for (const auto& vs : velocity_sets)
        if (!vs.empty()) d = static_cast<int>(vs.front().size());
    if (d == 0) throw std::invalid_argument("linear_fluctuation: all realizations empty");

    // Per-realization sufficient statistics for the pooled covariance trace.
    std::vector<Eigen::VectorXd> s1(m, Eigen::VectorXd::Zero(d));
    std::vector<double> s2(m, 0.0), cnt(m, 0.0);
    for (int r = 0; r < m; ++r)
        for (const auto& v : velocity_sets[r]) {
            s1[r] += v;
            s2[r] += v.squaredNorm();
            cnt[r] += 1.0;
        }

    auto sigma = [&](int skip) {
        Eigen::VectorXd t1 = Eigen::VectorXd::Zero(d);
        double t2 = 0.0, tc = 0.0;
        for (int r = 0; r < m; ++r) {
            if (r == skip) continue;
            t1 += s1[r];
            t2 += s2[r];
            tc += cnt[r];
        }
        if (tc < 2.0) return 0.0;
        const Eigen::VectorXd mu = t1 / tc;
        const double var = std::max(0.0, t2 / tc - mu.squaredNorm());
        return std::sqrt(var);
    };

    ValueWithError out;
    out.value = sigma(-1);
    out.stderr_ = jackknife_stderr(m, [&](int skip) { return sigma(skip); }, out.value);
    return out;
}

ValueWithError linear_fluctuation(const std::vector<LinearSolution>& solutions) {
    std::vector<std::vector<Eigen::VectorXd>> sets;
    sets.reserve(solutions.size());
    for (const auto& s : solutions) sets.push_back(s.velocities);
    return linear_fluctuation(sets);
}

namespace {

// Coefficients of the ball-average stencil (value 1/N_b on the origin-ball
// cells) and the cell count; shared by both kernels.
FourierField stencil_coefficients(const TorusDomain& dom, std::int64_t* n_ball) {
    SpectralField w(dom, 1);
    const auto cells = ball_cells(dom, Point::Zero(dom.d));
    if (cells.size() < 8) throw std::invalid_argument("scalar proxy: ball resolves fewer than 8 cells");
    for (std::int64_t c : cells) w.at(0, c) = 1.0 / cells.size();
    *n_ball = static_cast<std::int64_t>(cells.size());
    return fft_of(w);
}

}  // namespace

ScalarProxyKernels build_scalar_proxy_kernels(const TorusDomain& dom) {
    dom.require_resolution();
    std::int64_t nb = 0;
    FourierField wh = stencil_coefficients(dom, &nb);
    const std::complex<double>* wc = wh.comp(0);
    const double nd = static_cast<double>(dom.cells());
    const double invvol = 1.0 / std::pow(dom.L, dom.d);
    const double ball_meas = nb * std::pow(dom.h(), dom.d);

    FourierField gh(dom, 1);
    FourierField fh(dom, dom.d);
    std::complex<double>* gc = gh.comp(0);
    std::complex<double>* fc[4];
    for (int a = 0; a < dom.d; ++a) fc[a] = fh.comp(a);
    const std::complex<double> i1(0.0, 1.0);
    for_each_mode(dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            gc[mi.flat] = 0.0;
            for (int a = 0; a < dom.d; ++a) fc[a][mi.flat] = 0.0;
            return;
        }
        const std::complex<double> green = invvol / mi.k2;  // cell delta at the origin
        const std::complex<double> avg = green * wc[mi.flat] * nd;
        gc[mi.flat] = avg;
        for (int a = 0; a < dom.d; ++a) fc[a][mi.flat] = i1 * mi.kt[a] * avg * ball_meas;
    });
    return ScalarProxyKernels{ifft_of(std::move(gh)), ifft_of(std::move(fh))};
}

ScalarProxyStats scalar_proxy_statistics(const std::vector<ParticleConfiguration>& ensemble,
                                         const TorusDomain& dom) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 2) throw std::invalid_argument("scalar_proxy_statistics: need >= 2 realizations");
    dom.require_resolution();

    std::int64_t nb = 0;
    FourierField wh = stencil_coefficients(dom, &nb);
    const std::complex<double>* wc = wh.comp(0);
    const double nd = static_cast<double>(dom.cells());
    const double invvol = 1.0 / std::pow(dom.L, dom.d);
    const double ball_meas = nb * std::pow(dom.h(), dom.d);
    const std::complex<double> i1(0.0, 1.0);

    // One kernel component resident at a time: comp -1 is G_ball, 0..d-1 the
    // components of F. Peak memory = stencil spectrum + one work spectrum +
    // one real field.
    std::vector<double> gsum(m, 0.0);
    std::vector<Eigen::VectorXd> fsum(m, Eigen::VectorXd::Zero(dom.d));
    for (int comp = -1; comp < dom.d; ++comp) {
        FourierField work(dom, 1);
        std::complex<double>* kc = work.comp(0);
        for_each_mode(dom, [&](const ModeInfo& mi) {
            if (mi.zero_mode) {
                kc[mi.flat] = 0.0;
                return;
            }
            const std::complex<double> avg = invvol / mi.k2 * wc[mi.flat] * nd;
            kc[mi.flat] = comp < 0 ? avg : i1 * mi.kt[comp] * avg * ball_meas;
        });
        const SpectralField kernel = ifft_of(std::move(work));
        for (int r = 0; r < m; ++r)
            for (const Point& p : ensemble[r].centers) {
                const double v = interpolate(kernel, p)[0];
                if (comp < 0)
                    gsum[r] += v;
                else
                    fsum[r][comp] += v;
            }
    }

    auto var_of = [&](const std::function<double(int)>& value) {
        std::vector<double> ys(m);
        for (int r = 0; r < m; ++r) ys[r] = value(r);
        ValueWithError out;
        out.value = sample_variance(ys);
        auto loo = [&](int skip) {
            std::vector<double> sub;
            sub.reserve(m - 1);
            for (int r = 0; r < m; ++r)
                if (r != skip) sub.push_back(ys[r]);
            return sample_variance(sub);
        };
        out.stderr_ = jackknife_stderr(m, loo, out.value);
        return out;
    };

    ScalarProxyStats out;
    out.fluctuation_proxy_variance = var_of([&](int r) { return gsum[r]; });

    // Component variances add; jackknife the summed statistic directly.
    auto fvar = [&](int skip) {
        double acc = 0.0;
        for (int a = 0; a < dom.d; ++a) {
            std::vector<double> ys;
            ys.reserve(m);
            for (int r = 0; r < m; ++r)
                if (r != skip) ys.push_back(fsum[r][a]);
            acc += sample_variance(ys);
        }
        return acc;
    };
    out.speed_proxy_variance.value = fvar(-1);
    out.speed_proxy_variance.stderr_ =
        jackknife_stderr(m, [&](int skip) { return fvar(skip); }, out.speed_proxy_variance.value);
    return out;
}

}  // namespace sedsim
