#include "xtime/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>

#include "xtime/error.hpp"

namespace xtime::fft {
namespace {

// FFTW planning is not thread-safe and plans are tied to their buffers, so
// one plan pair per length is cached and executions are serialized.
struct PlanPair {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  explicit PlanPair(std::size_t length) : n(length) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(half_bins(n));
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~PlanPair() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(spec);
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
};

std::mutex g_mutex;

PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<PlanPair>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<PlanPair>(n)).first;
  return *it->second;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) throw Error("fft", "empty signal");
  std::lock_guard lock(g_mutex);
  PlanPair& p = plans_for(n);
  std::copy(signal.begin(), signal.end(), p.real);
  fftw_execute(p.forward);
  std::vector<std::complex<double>> out(half_bins(n));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.spec[k][0], p.spec[k][1]};
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  if (n == 0) throw Error("fft", "empty signal");
  if (spectrum.size() != half_bins(n)) throw Error("fft", "spectrum size does not match signal length");
  std::lock_guard lock(g_mutex);
  PlanPair& p = plans_for(n);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    p.spec[k][0] = spectrum[k].real();
    p.spec[k][1] = spectrum[k].imag();
  }
  // c2r assumes a Hermitian input; these bins must be real.
  p.spec[0][1] = 0.0;
  if (n % 2 == 0) p.spec[n / 2][1] = 0.0;
  fftw_execute(p.inverse);
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = p.real[t] * scale;
  return out;
}

}  // namespace xtime::fft
