#include "sedsim/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

#include "sedsim/spectral_ops.hpp"

namespace sedsim {
namespace {

constexpr double kPi = std::numbers::pi;

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / xs.size();
}

struct Wls {
    double slope, intercept, slope_stderr, r_squared;
};

// Weighted least squares of y against x; stderr scaled by residual variance
// so exact data reports zero uncertainty.
Wls wls_fit(const std::vector<double>& x, const std::vector<double>& y,
            const std::vector<double>& w) {
    const int n = static_cast<int>(x.size());
    double sw = 0, sx = 0, sy = 0;
    for (int i = 0; i < n; ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double xb = sx / sw, yb = sy / sw;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - xb) * (x[i] - xb);
        sxy += w[i] * (x[i] - xb) * (y[i] - yb);
    }
    if (sxx <= 0.0) throw std::invalid_argument("fit: degenerate abscissae");
    Wls out{};
    out.slope = sxy / sxx;
    out.intercept = yb - out.slope * xb;
    double ss_res = 0, ss_tot = 0;
    for (int i = 0; i < n; ++i) {
        const double r = y[i] - (out.intercept + out.slope * x[i]);
        ss_res += w[i] * r * r;
        ss_tot += w[i] * (y[i] - yb) * (y[i] - yb);
    }
    const double s2 = n > 2 ? ss_res / (n - 2) : 0.0;
    out.slope_stderr = std::sqrt(s2 / sxx);
    out.r_squared = ss_tot > 1e-300 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-300 ? 1.0 : 0.0);
    return out;
}

}  // namespace

double sample_variance(const std::vector<double>& xs) {
    const int m = static_cast<int>(xs.size());
    if (m < 2) throw std::invalid_argument("sample_variance: need >= 2 samples");
    const double mu = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return acc / (m - 1);
}

double jackknife_stderr(int m, const std::function<double(int)>& leave_one_out, double full_value) {
    if (m < 2) return 0.0;
    std::vector<double> vals(m);
    for (int i = 0; i < m; ++i) vals[i] = leave_one_out(i);
    const double mu = mean_of(vals);
    double acc = 0.0;
    for (double v : vals) acc += (v - mu) * (v - mu);
    (void)full_value;
    return std::sqrt(acc * (m - 1) / m);
}

double torus_ball_volume(int d, double L, double r) {
    if (r < 0.0) throw std::invalid_argument("torus_ball_volume: r < 0");
    const double half = L / 2.0;
    switch (d) {
        case 1:
            return std::min(2.0 * r, L);
        case 2: {
            if (r <= half) return kPi * r * r;
            if (r >= half * std::numbers::sqrt2) return L * L;
            const double seg = r * r * std::acos(half / r) - half * std::sqrt(r * r - half * half);
            return kPi * r * r - 4.0 * seg;
        }
        case 3:
            if (r > half + 1e-12)
                throw std::invalid_argument("torus_ball_volume: r > L/2 unsupported in d=3");
            return ball_volume(3, r);
        case 4:
            if (r > half + 1e-12)
                throw std::invalid_argument("torus_ball_volume: r > L/2 unsupported in d=4");
            return ball_volume(4, r);
        default:
            throw std::invalid_argument("torus_ball_volume: d must be in 1..4");
    }
}

double torus_shell_volume(int d, double L, double r_lo, double r_hi) {
    if (!(r_hi > r_lo)) throw std::invalid_argument("torus_shell_volume: need r_hi > r_lo");
    return torus_ball_volume(d, L, r_hi) - torus_ball_volume(d, L, r_lo);
}

PairCorrelationEstimate estimate_pair_correlation(const std::vector<ParticleConfiguration>& ensemble,
                                                  const std::vector<double>& bin_edges) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 2) throw std::invalid_argument("estimate_pair_correlation: need >= 2 realizations");
    const int nb = static_cast<int>(bin_edges.size()) - 1;
    if (nb < 1) throw std::invalid_argument("estimate_pair_correlation: need at least one bin");
    const TorusDomain& dom = ensemble.front().domain;
    for (int b = 0; b < nb; ++b) {
        if (!(bin_edges[b + 1] > bin_edges[b]))
            throw std::invalid_argument("estimate_pair_correlation: edges must increase");
        if (bin_edges[b + 1] - bin_edges[b] < 2.0 * dom.h() - 1e-12)
            throw std::invalid_argument("estimate_pair_correlation: bin width must be >= 2h");
    }

    std::vector<double> vshell(nb);
    for (int b = 0; b < nb; ++b)
        vshell[b] = torus_shell_volume(dom.d, dom.L, bin_edges[b], bin_edges[b + 1]);

    const double vol = std::pow(dom.L, dom.d);
    std::vector<std::vector<double>> counts(m, std::vector<double>(nb, 0.0));  // ordered pairs
    std::vector<double> npts(m);
    for (int r = 0; r < m; ++r) {
        const auto& pts = ensemble[r].centers;
        npts[r] = static_cast<double>(pts.size());
        const int n = static_cast<int>(pts.size());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double dist = periodic_distance(pts[i], pts[j], dom);
                const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), dist);
                const int b = static_cast<int>(it - bin_edges.begin()) - 1;
                if (b >= 0 && b < nb && dist >= bin_edges[b] && dist < bin_edges[b + 1])
                    counts[r][b] += 2.0;
            }
    }

    auto estimate = [&](int skip) {
        std::vector<double> g(nb, 0.0);
        double ntot = 0.0;
        int used = 0;
        for (int r = 0; r < m; ++r) {
            if (r == skip) continue;
            ntot += npts[r];
            ++used;
        }
        const double rho = ntot / (used * vol);
        for (int b = 0; b < nb; ++b) {
            double c = 0.0;
            for (int r = 0; r < m; ++r)
                if (r != skip) c += counts[r][b];
            g[b] = rho > 0.0 ? c / (rho * rho * vol * vshell[b] * used) - 1.0 : -1.0;
        }
        return g;
    };

    PairCorrelationEstimate out;
    out.bin_edges = bin_edges;
    out.g2 = estimate(-1);
    out.intensity = mean_of(npts) / vol;
    out.stderrs.resize(nb, 0.0);
    std::vector<std::vector<double>> jack(m);
    for (int r = 0; r < m; ++r) jack[r] = estimate(r);
    for (int b = 0; b < nb; ++b) {
        double mu = 0.0;
        for (int r = 0; r < m; ++r) mu += jack[r][b];
        mu /= m;
        double acc = 0.0;
        for (int r = 0; r < m; ++r) acc += (jack[r][b] - mu) * (jack[r][b] - mu);
        out.stderrs[b] = std::sqrt(acc * (m - 1) / m);
    }
    return out;
}

StructureFactorEstimate estimate_structure_factor(const std::vector<ParticleConfiguration>& ensemble,
                                                  double k_max) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 2) throw std::invalid_argument("estimate_structure_factor: need >= 2 realizations");
    const TorusDomain& dom = ensemble.front().domain;
    const double dk = 2.0 * kPi / dom.L;
    const int mmax = static_cast<int>(std::floor(k_max / dk + 1e-12));
    if (mmax < 1) throw std::invalid_argument("estimate_structure_factor: k_max below 2*pi/L");
    const long m2max = static_cast<long>(mmax) * mmax;

    // Canonical half of the dual lattice (first nonzero component positive);
    // |phase sum|^2 is even in k, so each pair is visited once.
    std::vector<std::array<int, 4>> modes;
    std::array<int, 4> mv{0, 0, 0, 0};
    auto rec = [&](auto&& self, int axis) -> void {
        if (axis == dom.d) {
            long m2 = 0;
            for (int a = 0; a < dom.d; ++a) m2 += static_cast<long>(mv[a]) * mv[a];
            if (m2 == 0 || m2 > m2max) return;
            for (int a = dom.d - 1; a >= 0; --a) {
                if (mv[a] > 0) break;
                if (mv[a] < 0) return;  // keep the lexicographically positive half
            }
            modes.push_back(mv);
            return;
        }
        for (int v = -mmax; v <= mmax; ++v) {
            mv[axis] = v;
            self(self, axis + 1);
        }
    };
    rec(rec, 0);

    std::map<long, std::vector<int>> groups;  // |m|^2 -> mode indices
    for (int i = 0; i < static_cast<int>(modes.size()); ++i) {
        long m2 = 0;
        for (int a = 0; a < dom.d; ++a) m2 += static_cast<long>(modes[i][a]) * modes[i][a];
        groups[m2].push_back(i);
    }

    const int ng = static_cast<int>(groups.size());
    std::vector<std::vector<double>> per_real(m, std::vector<double>(ng, 0.0));
    std::vector<char> usable(m, 1);
    for (int r = 0; r < m; ++r) {
        const auto& pts = ensemble[r].centers;
        const int n = static_cast<int>(pts.size());
        if (n == 0) {
            usable[r] = 0;
            continue;
        }
        std::vector<double> mode_val(modes.size());
        for (std::size_t q = 0; q < modes.size(); ++q) {
            double re = 0.0, im = 0.0;
            for (int i = 0; i < n; ++i) {
                double ph = 0.0;
                for (int a = 0; a < dom.d; ++a) ph -= dk * modes[q][a] * pts[i][a];
                re += std::cos(ph);
                im += std::sin(ph);
            }
            mode_val[q] = (re * re + im * im) / n;
        }
        int gi = 0;
        for (const auto& [m2, idxs] : groups) {
            double acc = 0.0;
            for (int q : idxs) acc += mode_val[q];
            per_real[r][gi++] = acc / idxs.size();
        }
    }

    auto estimate = [&](int skip, int gi) {
        double acc = 0.0;
        int used = 0;
        for (int r = 0; r < m; ++r) {
            if (r == skip || !usable[r]) continue;
            acc += per_real[r][gi];
            ++used;
        }
        if (used == 0) throw std::runtime_error("estimate_structure_factor: no nonempty realizations");
        return acc / used;
    };

    StructureFactorEstimate out;
    int gi = 0;
    for (const auto& [m2, idxs] : groups) {
        out.k_mag.push_back(dk * std::sqrt(static_cast<double>(m2)));
        out.degeneracy.push_back(2 * static_cast<int>(idxs.size()));
        const double full = estimate(-1, gi);
        out.s.push_back(full);
        out.stderrs.push_back(
            jackknife_stderr(m, [&](int skip) { return estimate(skip, gi); }, full));
        ++gi;
    }
    return out;
}

ValueWithError hyperuniformity_metric(const std::vector<ParticleConfiguration>& ensemble) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 20) throw std::invalid_argument("hyperuniformity_metric: need >= 20 realizations");
    const TorusDomain& dom = ensemble.front().domain;
    const double vol = std::pow(dom.L, dom.d);
    std::vector<double> ns(m);
    for (int r = 0; r < m; ++r) ns[r] = ensemble[r].count();

    auto metric = [&](int skip) {
        double s1 = 0.0, cnt = 0.0;
        for (int r = 0; r < m; ++r)
            if (r != skip) {
                s1 += ns[r];
                cnt += 1.0;
            }
        const double mu = s1 / cnt;
        double var = 0.0;
        for (int r = 0; r < m; ++r)
            if (r != skip) var += (ns[r] - mu) * (ns[r] - mu);
        var /= (cnt - 1.0);
        const double rho = mu / vol;
        if (rho == 0.0) return 0.0;
        return dom.L * dom.L * var / (rho * rho * vol);
    };

    ValueWithError out;
    out.value = metric(-1);
    out.stderr_ = jackknife_stderr(m, [&](int skip) { return metric(skip); }, out.value);
    return out;
}

PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys,
                          const std::vector<double>& y_errors) {
    const int n = static_cast<int>(xs.size());
    if (n < 3 || ys.size() != xs.size())
        throw std::invalid_argument("fit_power_law: need >= 3 matched points");
    std::vector<double> lx(n), ly(n), w(n, 1.0);
    for (int i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("fit_power_law: data must be strictly positive");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    if (!y_errors.empty()) {
        if (y_errors.size() != xs.size()) throw std::invalid_argument("fit_power_law: error size mismatch");
        bool ok = true;
        for (double e : y_errors)
            if (!(e > 0.0)) ok = false;
        if (ok)
            for (int i = 0; i < n; ++i) w[i] = (ys[i] / y_errors[i]) * (ys[i] / y_errors[i]);
    }
    const Wls f = wls_fit(lx, ly, w);
    return PowerLawFit{f.slope, f.slope_stderr, f.r_squared, std::exp(f.intercept)};
}

LogLinearFit fit_log_linear(const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::vector<double>& y_errors) {
    const int n = static_cast<int>(xs.size());
    if (n < 3 || ys.size() != xs.size())
        throw std::invalid_argument("fit_log_linear: need >= 3 matched points");
    std::vector<double> lx(n), w(n, 1.0);
    for (int i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0)) throw std::invalid_argument("fit_log_linear: xs must be positive");
        lx[i] = std::log(xs[i]);
    }
    if (!y_errors.empty()) {
        if (y_errors.size() != xs.size()) throw std::invalid_argument("fit_log_linear: error size mismatch");
        bool ok = true;
        for (double e : y_errors)
            if (!(e > 0.0)) ok = false;
        if (ok)
            for (int i = 0; i < n; ++i) w[i] = 1.0 / (y_errors[i] * y_errors[i]);
    }
    const Wls f = wls_fit(lx, ys, w);
    return LogLinearFit{f.slope, f.slope_stderr, f.r_squared, f.intercept};
}

NumberVarianceCurve number_variance_curve(const std::vector<ParticleConfiguration>& ensemble,
                                          const std::vector<double>& radii) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 20) throw std::invalid_argument("number_variance_curve: need >= 20 realizations");
    const TorusDomain& dom = ensemble.front().domain;
    for (double r : radii)
        if (!(r > 0.0) || r > dom.L / 4.0)
            throw std::invalid_argument("number_variance_curve: radii must lie in (0, L/4]");

    const int nr = static_cast<int>(radii.size());
    Point origin = Point::Zero(dom.d);
    std::vector<std::vector<double>> counts(nr, std::vector<double>(m, 0.0));
    for (int r = 0; r < m; ++r)
        for (const Point& p : ensemble[r].centers) {
            const double dist = periodic_distance(p, origin, dom);
            for (int i = 0; i < nr; ++i)
                if (dist <= radii[i]) counts[i][r] += 1.0;
        }

    NumberVarianceCurve out;
    out.radii = radii;
    out.variance.resize(nr);
    out.stderrs.resize(nr);
    for (int i = 0; i < nr; ++i) {
        out.variance[i] = sample_variance(counts[i]);
        auto loo = [&](int skip) {
            std::vector<double> sub;
            sub.reserve(m - 1);
            for (int r = 0; r < m; ++r)
                if (r != skip) sub.push_back(counts[i][r]);
            return sample_variance(sub);
        };
        out.stderrs[i] = jackknife_stderr(m, loo, out.variance[i]);
    }

    bool positive = nr >= 3;
    for (double v : out.variance)
        if (!(v > 0.0)) positive = false;
    if (positive) {
        out.fit = fit_power_law(out.radii, out.variance, out.stderrs);
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.fit = PowerLawFit{nan, nan, nan, nan};
    }
    return out;
}

namespace {

FunctionalVariance functional_variance_impl(const std::vector<ParticleConfiguration>& ensemble,
                                            const std::function<double(const Point&)>& eval,
                                            double int_zeta, double int_zeta2, double int_grad2,
                                            double rms, bool want_hyper) {
    const int m = static_cast<int>(ensemble.size());
    if (m < 2) throw std::invalid_argument("linear_functional_variance: need >= 2 realizations");
    if (want_hyper && std::abs(int_zeta) > 1e-8 * (rms + 1e-300))
        throw std::invalid_argument("linear_functional_variance: hyperuniform bound requires mean-zero zeta");

    const TorusDomain& dom = ensemble.front().domain;
    const double vol = std::pow(dom.L, dom.d);
    std::vector<double> ys(m, 0.0), ns(m);
    for (int r = 0; r < m; ++r) {
        for (const Point& p : ensemble[r].centers) ys[r] += eval(p);
        ns[r] = ensemble[r].count();
    }
    const double rho = mean_of(ns) / vol;

    FunctionalVariance out;
    out.variance = sample_variance(ys);
    auto loo = [&](int skip) {
        std::vector<double> sub;
        sub.reserve(m - 1);
        for (int r = 0; r < m; ++r)
            if (r != skip) sub.push_back(ys[r]);
        return sample_variance(sub);
    };
    out.stderr_ = jackknife_stderr(m, loo, out.variance);
    out.mixing_bound = rho * rho * int_zeta2;
    out.hyperuniform_bound =
        want_hyper ? rho * rho * int_grad2 : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace

FunctionalVariance linear_functional_variance(const std::vector<ParticleConfiguration>& ensemble,
                                              const SpectralField& zeta, bool want_hyperuniform_bound) {
    if (zeta.comps != 1) throw std::invalid_argument("linear_functional_variance: scalar zeta expected");
    const TorusDomain& dom = zeta.dom;
    const double hd = std::pow(dom.h(), dom.d);
    double iz = 0.0, iz2 = 0.0;
    const double* p = zeta.comp(0);
    for (std::int64_t c = 0; c < dom.cells(); ++c) {
        iz += p[c];
        iz2 += p[c] * p[c];
    }
    iz *= hd;
    iz2 *= hd;
    FourierField zh = fft_of(zeta);
    double grad2 = 0.0;
    const std::complex<double>* zc = zh.comp(0);
    for_each_mode(dom, [&](const ModeInfo& mi) { grad2 += mi.weight * mi.kt2 * std::norm(zc[mi.flat]); });
    grad2 *= std::pow(dom.L, dom.d);
    const double rms = std::sqrt(iz2 / std::pow(dom.L, dom.d));
    auto eval = [&](const Point& x) { return interpolate(zeta, x)[0]; };
    return functional_variance_impl(ensemble, eval, iz, iz2, grad2, rms, want_hyperuniform_bound);
}

FunctionalVariance linear_functional_variance(const std::vector<ParticleConfiguration>& ensemble,
                                              const TorusDomain& grid_dom,
                                              const std::function<double(const Point&)>& zeta,
                                              bool want_hyperuniform_bound) {
    SpectralField zf(grid_dom, 1);
    Point x(grid_dom.d);
    for (std::int64_t c = 0; c < grid_dom.cells(); ++c) {
        const auto idx = grid_dom.unflat(c);
        for (int a = 0; a < grid_dom.d; ++a)
            x[a] = wrap_canonical(grid_dom.coord(idx[a]), grid_dom.L);
        zf.at(0, c) = zeta(x);
    }
    const double hd = std::pow(grid_dom.h(), grid_dom.d);
    double iz = 0.0, iz2 = 0.0;
    for (std::int64_t c = 0; c < grid_dom.cells(); ++c) {
        iz += zf.at(0, c);
        iz2 += zf.at(0, c) * zf.at(0, c);
    }
    iz *= hd;
    iz2 *= hd;
    FourierField zh = fft_of(zf);
    double grad2 = 0.0;
    const std::complex<double>* zc = zh.comp(0);
    for_each_mode(grid_dom,
                  [&](const ModeInfo& mi) { grad2 += mi.weight * mi.kt2 * std::norm(zc[mi.flat]); });
    grad2 *= std::pow(grid_dom.L, grid_dom.d);
    const double rms = std::sqrt(iz2 / std::pow(grid_dom.L, grid_dom.d));
    return functional_variance_impl(ensemble, zeta, iz, iz2, grad2, rms, want_hyperuniform_bound);
}

EfronSteinCheck efron_stein_lattice_check(
    const TorusDomain& dom, double spacing, double u_max, int realizations,
    std::uint64_t master_seed, const std::function<double(const ParticleConfiguration&)>& functional) {
    if (std::abs(u_max - 1.0) > 1e-12)
        throw std::invalid_argument(
            "efron_stein_lattice_check: unit-ball resampling matches the displacement law only for u_max = 1");
    if (realizations < 20) throw std::invalid_argument("efron_stein_lattice_check: need >= 20 realizations");

    std::vector<double> ys(realizations), osc(realizations, 0.0);
    for (int r = 0; r < realizations; ++r) {
        const std::uint64_t seed = derive_seed(master_seed, r, "sample/perturbed_lattice");
        // Per-site resampling pairs ball s with site s, so use the conditional
        // (unshifted) lattice here.
        const ParticleConfiguration cfg =
            sample_perturbed_lattice(dom, spacing, u_max, seed, /*stationarize=*/false);
        ys[r] = functional(cfg);
        for (int s = 0; s < cfg.count(); ++s) {
            const Point site = lattice_site_center(dom, spacing, s);
            const auto resampled = resample_in_ball(
                cfg, site, 1.0, ResampleMode::move,
                derive_seed(master_seed, static_cast<std::uint64_t>(r) * cfg.count() + s, "es/resample"));
            if (!resampled) throw std::runtime_error("efron_stein_lattice_check: resample failed");
            const double yp = functional(*resampled);
            osc[r] += 0.5 * (ys[r] - yp) * (ys[r] - yp);
        }
    }

    EfronSteinCheck out;
    out.variance = sample_variance(ys);
    out.es_bound = mean_of(osc);
    auto var_loo = [&](int skip) {
        std::vector<double> sub;
        for (int r = 0; r < realizations; ++r)
            if (r != skip) sub.push_back(ys[r]);
        return sample_variance(sub);
    };
    auto es_loo = [&](int skip) {
        double acc = 0.0;
        for (int r = 0; r < realizations; ++r)
            if (r != skip) acc += osc[r];
        return acc / (realizations - 1);
    };
    out.variance_stderr = jackknife_stderr(realizations, var_loo, out.variance);
    out.es_bound_stderr = jackknife_stderr(realizations, es_loo, out.es_bound);
    out.holds = out.variance <= out.es_bound +
                                    3.0 * std::sqrt(out.variance_stderr * out.variance_stderr +
                                                    out.es_bound_stderr * out.es_bound_stderr);
    return out;
}

}  // namespace sedsim
