#include "evf/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace evf::fft {
namespace {

// One cached plan pair per length. FFTW's planner is not thread-safe, so
// planning and execution share a lock.
struct PlanSet {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  explicit PlanSet(std::size_t len) : n(len) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~PlanSet() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(real);
    fftw_free(spec);
  }
  PlanSet(const PlanSet&) = delete;
  PlanSet& operator=(const PlanSet&) = delete;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

PlanSet& plans_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<PlanSet>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, std::make_unique<PlanSet>(n)).first;
  return *it->second;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::lock_guard lock(plan_mutex());
  PlanSet& p = plans_for(n);
  std::copy(x.begin(), x.end(), p.real);
  fftw_execute(p.forward);
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {p.spec[k][0], p.spec[k][1]};
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  if (n == 0) return {};
  if (spectrum.size() != n / 2 + 1) throw std::invalid_argument("irfft: spectrum length must be n/2+1");
  std::lock_guard lock(plan_mutex());
  PlanSet& p = plans_for(n);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    p.spec[k][0] = spectrum[k].real();
    p.spec[k][1] = spectrum[k].imag();
  }
  // c2r destroys its input; fine, it is rewritten on every call.
  fftw_execute(p.inverse);
  return std::vector<double>(p.real, p.real + n);
}

}  // namespace evf::fft
