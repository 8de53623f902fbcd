#include "sedsim/spectral_ops.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace sedsim {

void apply_inverse_laplacian(FourierField& f) {
    for (int c = 0; c < f.comps; ++c) {
        std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) {
            cd[mi.flat] = mi.zero_mode ? 0.0 : cd[mi.flat] / mi.k2;
        });
    }
}

void apply_leray(FourierField& f) {
    const int d = f.dom.d;
    if (f.comps != d) throw std::invalid_argument("apply_leray: need d components");
    std::complex<double>* cd[4];
    for (int c = 0; c < d; ++c) cd[c] = f.comp(c);
    for_each_mode(f.dom, [&](const ModeInfo& mi) {
        if (mi.kt2 == 0.0) return;
        std::complex<double> s = 0.0;
        for (int c = 0; c < d; ++c) s += mi.kt[c] * cd[c][mi.flat];
        s /= mi.kt2;
        for (int c = 0; c < d; ++c) cd[c][mi.flat] -= mi.kt[c] * s;
    });
}

FourierField gradient(const FourierField& scalar) {
    if (scalar.comps != 1) throw std::invalid_argument("gradient: scalar input expected");
    const int d = scalar.dom.d;
    FourierField out(scalar.dom, d);
    const std::complex<double>* s = scalar.comp(0);
    std::complex<double>* od[4];
    for (int c = 0; c < d; ++c) od[c] = out.comp(c);
    const std::complex<double> i1(0.0, 1.0);
    for_each_mode(scalar.dom, [&](const ModeInfo& mi) {
        for (int c = 0; c < d; ++c) od[c][mi.flat] = i1 * mi.kt[c] * s[mi.flat];
    });
    return out;
}

FourierField divergence(const FourierField& vec) {
    const int d = vec.dom.d;
    if (vec.comps != d) throw std::invalid_argument("divergence: need d components");
    FourierField out(vec.dom, 1);
    const std::complex<double>* cd[4];
    for (int c = 0; c < d; ++c) cd[c] = vec.comp(c);
    std::complex<double>* o = out.comp(0);
    const std::complex<double> i1(0.0, 1.0);
    for_each_mode(vec.dom, [&](const ModeInfo& mi) {
        std::complex<double> s = 0.0;
        for (int c = 0; c < d; ++c) s += mi.kt[c] * cd[c][mi.flat];
        o[mi.flat] = i1 * s;
    });
    return out;
}

double dirichlet_energy(const FourierField& f) {
    double acc = 0.0;
    for (int c = 0; c < f.comps; ++c) {
        const std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) {
            acc += mi.weight * mi.k2 * std::norm(cd[mi.flat]);
        });
    }
    return acc * std::pow(f.dom.L, f.dom.d);
}

double gradient_square_integral(const FourierField& f) {
    double acc = 0.0;
    for (int c = 0; c < f.comps; ++c) {
        const std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) {
            acc += mi.weight * mi.kt2 * std::norm(cd[mi.flat]);
        });
    }
    return acc * std::pow(f.dom.L, f.dom.d);
}

FdSymbols::FdSymbols(const TorusDomain& dom) : n(dom.n_grid), sym(dom.n_grid) {
    const double h = dom.h();
    for (int m = 0; m < n; ++m) {
        const double th = 2.0 * std::numbers::pi * m / n;
        sym[m] = std::complex<double>(std::cos(th) - 1.0, std::sin(th)) / h;
    }
}

void apply_inverse_laplacian_fd(FourierField& f) {
    const FdSymbols fd(f.dom);
    const int d = f.dom.d;
    for (int c = 0; c < f.comps; ++c) {
        std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) {
            if (mi.zero_mode) {
                cd[mi.flat] = 0.0;
                return;
            }
            double g2 = 0.0;
            for (int a = 0; a < d; ++a) g2 += std::norm(fd(mi.m[a]));
            cd[mi.flat] /= g2;
        });
    }
}

void apply_leray_fd(FourierField& f) {
    const int d = f.dom.d;
    if (f.comps != d) throw std::invalid_argument("apply_leray_fd: need d components");
    const FdSymbols fd(f.dom);
    std::complex<double>* cd[4];
    for (int c = 0; c < d; ++c) cd[c] = f.comp(c);
    for_each_mode(f.dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) return;
        std::complex<double> g[4];
        double g2 = 0.0;
        for (int c = 0; c < d; ++c) {
            g[c] = fd(mi.m[c]);
            g2 += std::norm(g[c]);
        }
        std::complex<double> s = 0.0;
        for (int c = 0; c < d; ++c) s += std::conj(g[c]) * cd[c][mi.flat];
        s /= g2;
        for (int c = 0; c < d; ++c) cd[c][mi.flat] -= g[c] * s;
    });
}

FourierField gradient_fd(const FourierField& scalar) {
    if (scalar.comps != 1) throw std::invalid_argument("gradient_fd: scalar input expected");
    const int d = scalar.dom.d;
    const FdSymbols fd(scalar.dom);
    FourierField out(scalar.dom, d);
    const std::complex<double>* s = scalar.comp(0);
    std::complex<double>* od[4];
    for (int c = 0; c < d; ++c) od[c] = out.comp(c);
    for_each_mode(scalar.dom, [&](const ModeInfo& mi) {
        for (int c = 0; c < d; ++c) od[c][mi.flat] = fd(mi.m[c]) * s[mi.flat];
    });
    return out;
}

FourierField divergence_fd(const FourierField& vec) {
    const int d = vec.dom.d;
    if (vec.comps != d) throw std::invalid_argument("divergence_fd: need d components");
    const FdSymbols fd(vec.dom);
    FourierField out(vec.dom, 1);
    const std::complex<double>* cd[4];
    for (int c = 0; c < d; ++c) cd[c] = vec.comp(c);
    std::complex<double>* o = out.comp(0);
    for_each_mode(vec.dom, [&](const ModeInfo& mi) {
        std::complex<double> s = 0.0;
        for (int c = 0; c < d; ++c) s -= std::conj(fd(mi.m[c])) * cd[c][mi.flat];
        o[mi.flat] = s;
    });
    return out;
}

double gradient_square_integral_fd(const FourierField& f) {
    const FdSymbols fd(f.dom);
    const int d = f.dom.d;
    double acc = 0.0;
    for (int c = 0; c < f.comps; ++c) {
        const std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) {
            double g2 = 0.0;
            for (int a = 0; a < d; ++a) g2 += std::norm(fd(mi.m[a]));
            acc += mi.weight * g2 * std::norm(cd[mi.flat]);
        });
    }
    return acc * std::pow(f.dom.L, f.dom.d);
}

SpectralField laplace_green(const TorusDomain& dom, const Point& source) {
    FourierField g(dom, 1);
    std::complex<double>* cd = g.comp(0);
    // Coefficients of a unit point mass on the cell holding `source`:
    // exp(-i k . x_cell) / L^d.
    Point xc(dom.d);
    const auto idx = dom.cell_of(source);
    for (int a = 0; a < dom.d; ++a) xc[a] = dom.coord(idx[a]);
    const double invvol = 1.0 / std::pow(dom.L, dom.d);
    for_each_mode(dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            cd[mi.flat] = 0.0;
            return;
        }
        double ph = 0.0;
        for (int a = 0; a < dom.d; ++a) ph -= mi.k[a] * xc[a];
        cd[mi.flat] = std::polar(invvol / mi.k2, ph);
    });
    return ifft_of(std::move(g));
}

StokesletSolution averaged_stokeslet(const TorusDomain& dom, const Eigen::VectorXd& e) {
    const int d = dom.d;
    if (e.size() != d) throw std::invalid_argument("averaged_stokeslet: direction size mismatch");
    dom.require_resolution();

    SpectralField ind(dom, 1);
    Point origin = Point::Zero(d);
    for (std::int64_t cell : ball_cells(dom, origin)) ind.at(0, cell) = 1.0;
    FourierField s = fft_of(ind);
    const std::complex<double>* sc = s.comp(0);

    FourierField u(dom, d);
    FourierField p(dom, 1);
    std::complex<double>* uc[4];
    for (int c = 0; c < d; ++c) uc[c] = u.comp(c);
    std::complex<double>* pc = p.comp(0);
    const std::complex<double> i1(0.0, 1.0);

    for_each_mode(dom, [&](const ModeInfo& mi) {
        if (mi.zero_mode) {
            for (int c = 0; c < d; ++c) uc[c][mi.flat] = 0.0;
            pc[mi.flat] = 0.0;
            return;
        }
        const std::complex<double> f = sc[mi.flat];
        double kte = 0.0;
        for (int c = 0; c < d; ++c) kte += mi.kt[c] * e[c];
        for (int c = 0; c < d; ++c) {
            double ec = e[c];
            if (mi.kt2 > 0.0) ec -= mi.kt[c] * kte / mi.kt2;
            uc[c][mi.flat] = f * ec / mi.k2;
        }
        pc[mi.flat] = (mi.kt2 > 0.0) ? -i1 * kte * f / mi.kt2 : 0.0;
    });

    StokesletSolution out{ifft_of(std::move(u)), ifft_of(std::move(p))};
    return out;
}

std::vector<std::int64_t> ball_cells(const TorusDomain& dom, const Point& center, double radius) {
    const int d = dom.d;
    const int n = dom.n_grid;
    const double h = dom.h();
    std::vector<std::int64_t> out;

    const auto c0 = dom.cell_of(center);
    int reach = static_cast<int>(std::ceil(radius / h)) + 1;
    int lo = -reach, hi = reach;
    if (2 * reach + 1 > n) {  // offsets must enumerate distinct cells once
        lo = -n / 2 + 1;
        hi = n / 2;
    }

    std::array<int, 4> off{};
    const double r2 = radius * radius;
    std::array<int, 4> idx{};
    auto visit = [&](auto&& self, int axis) -> void {
        if (axis == d) {
            double dist2 = 0.0;
            for (int a = 0; a < d; ++a) {
                idx[a] = ((c0[a] + off[a]) % n + n) % n;
                const double dx = periodic_delta(dom.coord(idx[a]) - center[a], dom.L);
                dist2 += dx * dx;
            }
            if (dist2 <= r2) out.push_back(dom.flat(idx));
            return;
        }
        for (int o = lo; o <= hi; ++o) {
            off[axis] = o;
            self(self, axis + 1);
        }
    };
    visit(visit, 0);
    return out;
}

Eigen::VectorXd ball_average(const SpectralField& f, const Point& center, double radius) {
    const auto cells = ball_cells(f.dom, center, radius);
    if (cells.size() < 8) throw std::runtime_error("ball_average: ball resolves fewer than 8 cells");
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.comps);
    for (int c = 0; c < f.comps; ++c) {
        const double* p = f.comp(c);
        double s = 0.0;
        for (std::int64_t cell : cells) s += p[cell];
        acc[c] = s / static_cast<double>(cells.size());
    }
    return acc;
}

Eigen::VectorXd interpolate(const SpectralField& f, const Point& x) {
    const int d = f.dom.d;
    const int n = f.dom.n_grid;
    const double h = f.dom.h();

    int base[4];
    double frac[4];
    for (int a = 0; a < d; ++a) {
        const double t = x[a] / h;
        const double fl = std::floor(t);
        base[a] = static_cast<int>(std::llround(fl)) % n;
        if (base[a] < 0) base[a] += n;
        frac[a] = t - fl;
    }

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f.comps);
    const int corners = 1 << d;
    std::array<int, 4> idx{};
    for (int m = 0; m < corners; ++m) {
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const bool up = (m >> a) & 1;
            w *= up ? frac[a] : 1.0 - frac[a];
            idx[a] = up ? (base[a] + 1) % n : base[a];
        }
        if (w == 0.0) continue;
        const std::int64_t cell = f.dom.flat(idx);
        for (int c = 0; c < f.comps; ++c) acc[c] += w * f.at(c, cell);
    }
    return acc;
}

}  // namespace sedsim
