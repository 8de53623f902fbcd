#pragma once

#include <complex>
#include <cstdint>

#include "sedsim/torus.hpp"

namespace sedsim {

// Half-complex (r2c) spectral layout: axis 0 is the halved axis with extent
// n/2+1 and stride 1; axes 1..d-1 keep extent n_grid. Matches the real-space
// convention that axis 0 varies fastest.
inline std::int64_t spectral_size(const TorusDomain& dom) {
    std::int64_t s = dom.n_grid / 2 + 1;
    for (int a = 1; a < dom.d; ++a) s *= dom.n_grid;
    return s;
}

// out = forward DFT of `in`, scaled by n^{-d} so that
//   f(x_j) = sum_m out[m] exp(+i k_m . x_j).
// Input is preserved.
void fft_r2c(const TorusDomain& dom, const double* in, std::complex<double>* out);

// Plain synthesis sum of the coefficient array (no scaling); `in` is destroyed.
void fft_c2r(const TorusDomain& dom, std::complex<double>* in, double* out);

}  // namespace sedsim
