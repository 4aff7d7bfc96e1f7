// Copyright 2026 The reverbswap Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "reverbswap/fft.h"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>

namespace reverbswap {

namespace {
// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct RealFft::Plans {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
    fftw_free(real);
    fftw_free(spec);
  }
};

RealFft::RealFft(int n) : n_(n), plans_(std::make_unique<Plans>()) {
  if (n < 2) throw std::invalid_argument("FFT size must be at least 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  plans_->real = fftw_alloc_real(n);
  plans_->spec = fftw_alloc_complex(n / 2 + 1);
  plans_->r2c = fftw_plan_dft_r2c_1d(n, plans_->real, plans_->spec,
                                     FFTW_ESTIMATE);
  plans_->c2r = fftw_plan_dft_c2r_1d(n, plans_->spec, plans_->real,
                                     FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
}

RealFft::~RealFft() = default;

void RealFft::forward(std::span<const double> in,
                      std::span<std::complex<double>> out) const {
  if (static_cast<int>(in.size()) != n_ ||
      static_cast<int>(out.size()) != bins()) {
    throw std::invalid_argument("RealFft::forward size mismatch");
  }
  std::copy(in.begin(), in.end(), plans_->real);
  fftw_execute(plans_->r2c);
  for (int k = 0; k < bins(); ++k) {
    out[k] = {plans_->spec[k][0], plans_->spec[k][1]};
  }
}

void RealFft::inverse(std::span<const std::complex<double>> in,
                      std::span<double> out) const {
  if (static_cast<int>(in.size()) != bins() ||
      static_cast<int>(out.size()) != n_) {
    throw std::invalid_argument("RealFft::inverse size mismatch");
  }
  for (int k = 0; k < bins(); ++k) {
    plans_->spec[k][0] = in[k].real();
    plans_->spec[k][1] = in[k].imag();
  }
  fftw_execute(plans_->c2r);
  std::copy(plans_->real, plans_->real + n_, out.begin());
}

}  // namespace reverbswap
