#pragma once

// Thin RAII layer over FFTW3 (double precision).
//
// Plans are created once per (kind, length) with FFTW_ESTIMATE, which selects
// the algorithm without timing measurements; results are therefore identical
// from run to run. Planning is serialized behind a mutex (the FFTW planner is
// not thread-safe); execution uses the new-array interface and is safe to call
// concurrently.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <new>
#include <span>
#include <utility>
#include <vector>

#include "envdiag/error.hpp"

namespace envdiag::fft {

using cplx = std::complex<double>;

template <class T>
struct FftwAllocator {
  using value_type = T;
  FftwAllocator() = default;
  template <class U>
  constexpr FftwAllocator(const FftwAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    void* p = fftw_malloc(n * sizeof(T));
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { fftw_free(p); }

  template <class U>
  bool operator==(const FftwAllocator<U>&) const noexcept { return true; }
};

using RealBuffer = std::vector<double, FftwAllocator<double>>;
using ComplexBuffer = std::vector<cplx, FftwAllocator<cplx>>;

namespace detail {

enum class Kind { r2c, c2r, c2c_forward, c2c_backward };

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Kind kind, int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find({kind, n});
    if (it != plans_.end()) return it->second;
    fftw_plan plan = make(kind, n);
    if (plan == nullptr) throw AnalysisError("fft: FFTW failed to create a plan");
    plans_.emplace(std::make_pair(kind, n), plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  static fftw_plan make(Kind kind, int n) {
    const auto nc = static_cast<std::size_t>(n);
    ComplexBuffer c(nc);
    ComplexBuffer c2(nc);
    RealBuffer r(nc);
    auto* cp = reinterpret_cast<fftw_complex*>(c.data());
    auto* cp2 = reinterpret_cast<fftw_complex*>(c2.data());
    switch (kind) {
      case Kind::r2c:
        return fftw_plan_dft_r2c_1d(n, r.data(), cp, FFTW_ESTIMATE);
      case Kind::c2r:
        return fftw_plan_dft_c2r_1d(n, cp, r.data(), FFTW_ESTIMATE);
      case Kind::c2c_forward:
        return fftw_plan_dft_1d(n, cp, cp2, FFTW_FORWARD, FFTW_ESTIMATE);
      case Kind::c2c_backward:
        return fftw_plan_dft_1d(n, cp, cp2, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    return nullptr;
  }

  std::mutex mutex_;
  std::map<std::pair<Kind, int>, fftw_plan> plans_;
};

inline int checked_size(std::size_t n) {
  if (n == 0 || n > static_cast<std::size_t>(1) << 30) throw ParameterError("fft: unsupported transform length");
  return static_cast<int>(n);
}

}  // namespace detail

/// One-sided spectrum (nfft/2 + 1 bins) of `x` zero-padded to `nfft` samples.
inline ComplexBuffer rfft(std::span<const double> x, std::size_t nfft) {
  if (nfft < x.size()) throw ParameterError("fft: nfft shorter than input");
  const int n = detail::checked_size(nfft);
  RealBuffer in(nfft, 0.0);
  std::copy(x.begin(), x.end(), in.begin());
  ComplexBuffer out(nfft / 2 + 1);
  fftw_execute_dft_r2c(detail::PlanCache::instance().get(detail::Kind::r2c, n), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

inline ComplexBuffer rfft(std::span<const double> x) { return rfft(x, x.size()); }

/// Inverse of rfft for a length-n real signal, including the 1/n factor.
inline RealBuffer irfft(std::span<const cplx> half, std::size_t n) {
  if (half.size() != n / 2 + 1) throw ParameterError("fft: half-spectrum size mismatch");
  const int nn = detail::checked_size(n);
  ComplexBuffer in(half.begin(), half.end());  // c2r destroys its input
  RealBuffer out(n);
  fftw_execute_dft_c2r(detail::PlanCache::instance().get(detail::Kind::c2r, nn),
                       reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
  return out;
}

/// Full complex transform. The inverse direction includes the 1/n factor.
inline ComplexBuffer cfft(std::span<const cplx> x, bool inverse) {
  const int n = detail::checked_size(x.size());
  ComplexBuffer in(x.begin(), x.end());
  ComplexBuffer out(x.size());
  const auto kind = inverse ? detail::Kind::c2c_backward : detail::Kind::c2c_forward;
  fftw_execute_dft(detail::PlanCache::instance().get(kind, n), reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(x.size());
    for (cplx& v : out) v *= scale;
  }
  return out;
}

}  // namespace envdiag::fft
