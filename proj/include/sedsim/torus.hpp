#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

namespace sedsim {

// Points are d-vectors with d <= 4; fixed max size avoids heap churn in pair loops.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

// Periodic cube Q_L = (-L/2, L/2]^d discretized by n_grid cells per axis.
// Grid cell i along an axis has center coordinate i*h (h = L/n_grid), taken
// modulo L; axis 0 varies fastest in flat storage.
struct TorusDomain {
    int d = 3;
    double L = 1.0;
    int n_grid = 8;

    TorusDomain() = default;
    TorusDomain(int d_, double L_, int n_) : d(d_), L(L_), n_grid(n_) {
        if (d < 1 || d > 4) throw std::invalid_argument("TorusDomain: d must be in 1..4");
        if (!(L >= 1.0)) throw std::invalid_argument("TorusDomain: L must be >= 1");
        if (n_grid < 8 || n_grid % 2 != 0)
            throw std::invalid_argument("TorusDomain: n_grid must be even and >= 8");
    }

    double h() const { return L / n_grid; }

    std::int64_t cells() const {
        std::int64_t c = 1;
        for (int a = 0; a < d; ++a) c *= n_grid;
        return c;
    }

    // Field solves need at least 8 cells across a unit-ball diameter.
    void require_resolution() const {
        if (h() > 0.25 + 1e-12)
            throw std::invalid_argument("TorusDomain: grid spacing h = L/n_grid must be <= 1/4 for field solves");
    }

    std::int64_t flat(const std::array<int, 4>& idx) const {
        std::int64_t f = 0;
        for (int a = d - 1; a >= 0; --a) f = f * n_grid + idx[a];
        return f;
    }

    std::array<int, 4> unflat(std::int64_t f) const {
        std::array<int, 4> idx{0, 0, 0, 0};
        for (int a = 0; a < d; ++a) {
            idx[a] = static_cast<int>(f % n_grid);
            f /= n_grid;
        }
        return idx;
    }

    // center coordinate of cell i along one axis, in [0, L)
    double coord(int i) const { return i * h(); }

    // nearest cell index along one axis for an arbitrary coordinate
    int cell_along(double x) const {
        double t = x / h();
        long i = std::lround(std::floor(t + 0.5));
        long n = n_grid;
        i %= n;
        if (i < 0) i += n;
        return static_cast<int>(i);
    }

    std::array<int, 4> cell_of(const Point& x) const {
        std::array<int, 4> idx{0, 0, 0, 0};
        for (int a = 0; a < d; ++a) idx[a] = cell_along(x[a]);
        return idx;
    }
};

// wrap a signed coordinate difference into (-L/2, L/2]
inline double periodic_delta(double dx, double L) {
    double t = dx - L * std::floor(dx / L);  // [0, L)
    if (t > 0.5 * L) t -= L;
    return t;
}

// canonical representative in (-L/2, L/2]
inline double wrap_canonical(double x, double L) {
    double t = x - L * std::floor(x / L + 0.5);  // [-L/2, L/2)
    if (t == -0.5 * L) t = 0.5 * L;
    return t;
}

inline double periodic_distance(const Point& x, const Point& y, const TorusDomain& dom) {
    double s = 0.0;
    for (int a = 0; a < dom.d; ++a) {
        double t = periodic_delta(x[a] - y[a], dom.L);
        s += t * t;
    }
    return std::sqrt(s);
}

inline double unit_ball_volume(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return M_PI;
        case 3: return 4.0 * M_PI / 3.0;
        case 4: return M_PI * M_PI / 2.0;
        default: throw std::invalid_argument("unit_ball_volume: d must be in 1..4");
    }
}

inline double ball_volume(int d, double r) { return unit_ball_volume(d) * std::pow(r, d); }

}  // namespace sedsim
