#include "sedsim/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace sedsim {
namespace {

struct PlanKey {
    int d;
    int n;
    bool forward;
    bool operator<(const PlanKey& o) const {
        if (d != o.d) return d < o.d;
        if (n != o.n) return n < o.n;
        return forward < o.forward;
    }
};

std::mutex plan_mutex;
std::map<PlanKey, fftw_plan> plan_cache;

// FFTW orders dimensions slowest-first; our axis 0 is the fastest (and for
// r2c the halved) one, so it goes last.
fftw_plan get_plan(const TorusDomain& dom, bool forward, double* re, fftw_complex* cx) {
    const PlanKey key{dom.d, dom.n_grid, forward};
    std::lock_guard<std::mutex> lock(plan_mutex);
    auto it = plan_cache.find(key);
    if (it != plan_cache.end()) return it->second;

    int dims[4];
    for (int a = 0; a < dom.d; ++a) dims[a] = dom.n_grid;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan p = forward ? fftw_plan_dft_r2c(dom.d, dims, re, cx, flags)
                          : fftw_plan_dft_c2r(dom.d, dims, cx, re, flags);
    if (!p) throw std::runtime_error("fftw planning failed");
    plan_cache.emplace(key, p);
    return p;
}

}  // namespace

void fft_r2c(const TorusDomain& dom, const double* in, std::complex<double>* out) {
    auto* cx = reinterpret_cast<fftw_complex*>(out);
    auto* re = const_cast<double*>(in);  // r2c out-of-place preserves input
    fftw_plan p = get_plan(dom, true, re, cx);
    fftw_execute_dft_r2c(p, re, cx);
    const double scale = 1.0 / static_cast<double>(dom.cells());
    const std::int64_t ns = spectral_size(dom);
    for (std::int64_t i = 0; i < ns; ++i) out[i] *= scale;
}

void fft_c2r(const TorusDomain& dom, std::complex<double>* in, double* out) {
    auto* cx = reinterpret_cast<fftw_complex*>(in);
    fftw_plan p = get_plan(dom, false, out, cx);
    fftw_execute_dft_c2r(p, cx, out);
}

}  // namespace sedsim
