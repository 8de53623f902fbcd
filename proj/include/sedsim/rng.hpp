#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>

namespace sedsim {

// Sedimentation runs derive every random stream from (master_seed, realization
// index, stage tag) so that realization i is reproducible in isolation and new
// stages never perturb existing streams.

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::string_view tag) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64_next(s);
    s ^= hash_tag(tag);
    std::uint64_t b = splitmix64_next(s);
    s ^= index * 0xda942042e4dd58b5ull + 0x2545f4914f6cdd1dull;
    std::uint64_t c = splitmix64_next(s);
    return a ^ (b << 1) ^ c;
}

// All distributions are hand-rolled on top of mt19937_64 raw draws; the
// standard library distribution objects are implementation-defined and would
// break the cross-platform determinism contract.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    RngStream(std::uint64_t master, std::uint64_t index, std::string_view tag)
        : eng_(derive_seed(master, index, tag)) {}

    std::uint64_t raw() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // exponential-spacing method: deterministic, O(mean) draws
    long poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
        long count = 0;
        double acc = 0.0;
        while (true) {
            acc += -std::log1p(-uniform());
            if (acc > mean) break;
            ++count;
        }
        return count;
    }

    // uniform point in the d-ball of given radius (rejection from the cube)
    Eigen::VectorXd point_in_ball(int d, double radius) {
        Eigen::VectorXd u(d);
        while (true) {
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) {
                u[a] = uniform(-1.0, 1.0);
                r2 += u[a] * u[a];
            }
            if (r2 <= 1.0) return radius * u;
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace sedsim
