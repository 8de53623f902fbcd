#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "sedsim/fft.hpp"
#include "sedsim/torus.hpp"

namespace sedsim {

// Real grid field with `comps` components stored component-major: component c
// occupies the contiguous block [c*cells, (c+1)*cells) with axis-0-fastest
// cell ordering.
struct SpectralField {
    TorusDomain dom;
    int comps = 1;
    std::vector<double> data;

    SpectralField(const TorusDomain& dom_, int comps_)
        : dom(dom_), comps(comps_), data(static_cast<std::size_t>(comps_) * dom_.cells(), 0.0) {}

    double* comp(int c) { return data.data() + static_cast<std::size_t>(c) * dom.cells(); }
    const double* comp(int c) const { return data.data() + static_cast<std::size_t>(c) * dom.cells(); }

    double& at(int c, std::int64_t cell) { return comp(c)[cell]; }
    double at(int c, std::int64_t cell) const { return comp(c)[cell]; }
};

// Half-complex coefficient field in the convention of fft_r2c: entry m holds
// c_m with f(x) = sum_m c_m exp(i k_m . x) over the full spectrum, the
// conjugate half being implicit.
struct FourierField {
    TorusDomain dom;
    int comps = 1;
    std::vector<std::complex<double>> data;

    FourierField(const TorusDomain& dom_, int comps_)
        : dom(dom_), comps(comps_), data(static_cast<std::size_t>(comps_) * spectral_size(dom_)) {}

    std::complex<double>* comp(int c) { return data.data() + static_cast<std::size_t>(c) * spectral_size(dom); }
    const std::complex<double>* comp(int c) const {
        return data.data() + static_cast<std::size_t>(c) * spectral_size(dom);
    }
};

inline FourierField fft_of(const SpectralField& f) {
    FourierField out(f.dom, f.comps);
    for (int c = 0; c < f.comps; ++c) fft_r2c(f.dom, f.comp(c), out.comp(c));
    return out;
}

// Consumes its argument (the c2r transform scrambles the coefficient buffer).
inline SpectralField ifft_of(FourierField&& f) {
    SpectralField out(f.dom, f.comps);
    for (int c = 0; c < f.comps; ++c) fft_c2r(f.dom, f.comp(c), out.comp(c));
    f.data.clear();
    return out;
}

// Per-mode wavenumber data for the stored (half-complex) spectrum. `kt` is
// the odd-symmetric wavenumber with the Nyquist entry zeroed; first
// derivatives, divergences and projections use `kt`, the inverse Laplacian
// uses the full `k2`. `weight` counts how many full-spectrum modes the stored
// entry represents (2 when the conjugate partner is not stored).
struct ModeInfo {
    std::int64_t flat;
    int m[4];       // signed mode numbers; m[0] in [0, n/2]
    double k[4];    // 2*pi*m/L with Nyquist kept positive
    double kt[4];   // Nyquist zeroed
    double k2;      // |k|^2 including Nyquist
    double kt2;
    double weight;
    bool zero_mode;
};

// Visits every stored spectral entry. f(const ModeInfo&).
template <class F>
void for_each_mode(const TorusDomain& dom, F&& f) {
    const int n = dom.n_grid;
    const int nc = n / 2 + 1;
    const double dk = 2.0 * std::numbers::pi / dom.L;

    std::vector<int> msig(n);
    std::vector<double> kfull(n), ktil(n);
    for (int m = 0; m < n; ++m) {
        const int s = (m <= n / 2) ? m : m - n;
        msig[m] = s;
        kfull[m] = dk * s;
        ktil[m] = (2 * std::abs(s) == n) ? 0.0 : dk * s;
    }

    std::int64_t rest_cells = 1;
    for (int a = 1; a < dom.d; ++a) rest_cells *= n;

    ModeInfo info{};
    for (std::int64_t r = 0; r < rest_cells; ++r) {
        std::int64_t t = r;
        double k2r = 0.0, kt2r = 0.0;
        for (int a = 1; a < dom.d; ++a) {
            const int ma = static_cast<int>(t % n);
            t /= n;
            info.m[a] = msig[ma];
            info.k[a] = kfull[ma];
            info.kt[a] = ktil[ma];
            k2r += kfull[ma] * kfull[ma];
            kt2r += ktil[ma] * ktil[ma];
        }
        const std::int64_t base = r * nc;
        for (int m0 = 0; m0 < nc; ++m0) {
            info.flat = base + m0;
            info.m[0] = m0;
            info.k[0] = dk * m0;
            info.kt[0] = (2 * m0 == n) ? 0.0 : dk * m0;
            info.k2 = k2r + info.k[0] * info.k[0];
            info.kt2 = kt2r + info.kt[0] * info.kt[0];
            info.weight = (m0 > 0 && 2 * m0 < n) ? 2.0 : 1.0;
            info.zero_mode = info.k2 == 0.0;
            f(static_cast<const ModeInfo&>(info));
        }
    }
}

// L^d * sum over the full spectrum of |c_m|^2 = integral of f^2 over the box.
inline double spectral_square_integral(const FourierField& f) {
    double acc = 0.0;
    const double vol = std::pow(f.dom.L, f.dom.d);
    for (int c = 0; c < f.comps; ++c) {
        const std::complex<double>* cd = f.comp(c);
        for_each_mode(f.dom, [&](const ModeInfo& mi) { acc += mi.weight * std::norm(cd[mi.flat]); });
    }
    return vol * acc;
}

inline double field_mean(const SpectralField& f, int c) {
    double acc = 0.0;
    const double* p = f.comp(c);
    const std::int64_t nc = f.dom.cells();
    for (std::int64_t i = 0; i < nc; ++i) acc += p[i];
    return acc / static_cast<double>(nc);
}

}  // namespace sedsim
