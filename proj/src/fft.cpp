#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

namespace neoseize::detail {
namespace {

// FFTW planning is not thread-safe; execution on fresh buffers is.
std::mutex g_plan_mutex;

struct Plans {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  explicit Plans(std::size_t size) : n(size) {
    std::lock_guard lock(g_plan_mutex);
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~Plans() {
    std::lock_guard lock(g_plan_mutex);
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(spec);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

Plans& plans_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plans>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plans>(n);
  return *slot;
}

}  // namespace

void forward_real(std::span<const double> x, std::span<std::complex<double>> out) {
  Plans& p = plans_for(x.size());
  std::copy(x.begin(), x.end(), p.real);
  fftw_execute(p.forward);
  for (std::size_t k = 0; k <= x.size() / 2; ++k) out[k] = {p.spec[k][0], p.spec[k][1]};
}

void power_spectrum(std::span<const double> x, std::span<double> out) {
  Plans& p = plans_for(x.size());
  std::copy(x.begin(), x.end(), p.real);
  fftw_execute(p.forward);
  for (std::size_t k = 0; k <= x.size() / 2; ++k) {
    out[k] = p.spec[k][0] * p.spec[k][0] + p.spec[k][1] * p.spec[k][1];
  }
}

void inverse_real(std::span<const std::complex<double>> half, std::span<double> out) {
  Plans& p = plans_for(out.size());
  for (std::size_t k = 0; k <= out.size() / 2; ++k) {
    p.spec[k][0] = half[k].real();
    p.spec[k][1] = half[k].imag();
  }
  fftw_execute(p.inverse);
  std::copy(p.real, p.real + out.size(), out.begin());
}

}  // namespace neoseize::detail
