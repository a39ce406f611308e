// FFTW-backed discrete Fourier transforms between physical samples and
// spectral coefficients.
//
// Conventions: the forward transform is the plain unnormalized sum; the
// inverse carries the 1/(nx*ny) factor.  Plans are created with FFTW_ESTIMATE
// so repeated runs of the same binary produce bit-identical coefficients.
// FFTW planning is not thread-safe, so plan creation/destruction is guarded
// by a process-wide mutex; each thread keeps its own plan+buffer cache, which
// makes concurrent transforms on distinct fields safe.
#pragma once

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "pfkit/grid.hpp"

namespace pfkit {
namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class FftPlanCache {
 public:
  struct Entry {
    fftw_plan plan = nullptr;
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
  };

  Entry& get(int nx, int ny, int sign) {
    auto key = std::make_tuple(nx, ny, sign);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    Entry e;
    auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    e.in = fftw_alloc_complex(n);
    e.out = fftw_alloc_complex(n);
    // Row-major layout with x fastest: ny is the outer (first) dimension.
    e.plan = fftw_plan_dft_2d(ny, nx, e.in, e.out, sign, FFTW_ESTIMATE);
    return cache_.emplace(key, e).first->second;
  }

  ~FftPlanCache() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    for (auto& [key, e] : cache_) {
      fftw_destroy_plan(e.plan);
      fftw_free(e.in);
      fftw_free(e.out);
    }
  }

 private:
  std::map<std::tuple<int, int, int>, Entry> cache_;
};

inline FftPlanCache& fft_plans() {
  thread_local FftPlanCache cache;
  return cache;
}

}  // namespace detail

inline SpectralCoeffs dft_forward(const ScalarField& f) {
  f.grid.validate();
  auto& e = detail::fft_plans().get(f.grid.nx, f.grid.ny, FFTW_FORWARD);
  const auto n = static_cast<std::size_t>(f.size());
  for (std::size_t i = 0; i < n; ++i) {
    e.in[i][0] = f.a[i];
    e.in[i][1] = 0.0;
  }
  fftw_execute(e.plan);
  SpectralCoeffs c(f.grid);
  for (std::size_t i = 0; i < n; ++i) c.c[i] = {e.out[i][0], e.out[i][1]};
  return c;
}

// Inverse transform of Hermitian-symmetric coefficients.  The imaginary part
// of the result is a numerical residue: below 1e-10 relative to the field
// scale it is discarded, above it the input was not the transform of a real
// field and NonHermitianInput is thrown.
inline ScalarField dft_inverse(const SpectralCoeffs& c) {
  c.grid.validate();
  auto& e = detail::fft_plans().get(c.grid.nx, c.grid.ny, FFTW_BACKWARD);
  const auto n = static_cast<std::size_t>(c.grid.size());
  for (std::size_t i = 0; i < n; ++i) {
    e.in[i][0] = c.c[i].real();
    e.in[i][1] = c.c[i].imag();
  }
  fftw_execute(e.plan);

  const double scale = 1.0 / static_cast<double>(n);
  ScalarField f(c.grid);
  double max_re = 0.0;
  double max_im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double re = e.out[i][0] * scale;
    const double im = e.out[i][1] * scale;
    f.a[i] = re;
    max_re = std::max(max_re, std::abs(re));
    max_im = std::max(max_im, std::abs(im));
  }
  if (max_im > 1e-10 * std::max(1.0, max_re))
    throw NonHermitianInput("dft_inverse: imaginary residue " + std::to_string(max_im) +
                            " exceeds 1e-10 relative tolerance");
  return f;
}

}  // namespace pfkit
