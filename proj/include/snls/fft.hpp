#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace snls::detail {

// FFTW planning is not thread-safe, execution with the new-array interface is.
// Plans are created once per (dim, points, direction) under a lock and shared.
// FFTW_ESTIMATE keeps plan selection deterministic across runs and
// FFTW_UNALIGNED lets the plans run on arbitrary std::vector storage.
class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

  fftw_plan plan(int dim, std::size_t points, int sign) {
    const auto key = std::make_tuple(dim, points, sign);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    int n[3] = {static_cast<int>(points), static_cast<int>(points), static_cast<int>(points)};
    std::size_t total = 1;
    for (int axis = 0; axis < dim; ++axis) total *= points;
    auto* scratch = fftw_alloc_complex(total);
    fftw_plan p = fftw_plan_dft(dim, n, scratch, scratch, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    if (p == nullptr) throw std::runtime_error("FFTW failed to create a plan");
    plans_.emplace(key, p);
    return p;
  }

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans_;
};

/// Unnormalized in-place DFT; sign is FFTW_FORWARD or FFTW_BACKWARD.
inline void dft_inplace(int dim, std::size_t points, int sign, std::complex<double>* data) {
  fftw_plan p = FftPlanCache::instance().plan(dim, points, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p, buf, buf);
}

}  // namespace snls::detail
