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

#ifndef REVERBSWAP_FFT_H_
#define REVERBSWAP_FFT_H_

#include <complex>
#include <memory>
#include <span>

namespace reverbswap {

// Real-input FFT of a fixed size (FFTW backed). forward() produces the
// n/2 + 1 non-negative-frequency bins; inverse() is unnormalized, so
// inverse(forward(x)) == n * x.
class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in,
               std::span<std::complex<double>> out) const;
  void inverse(std::span<const std::complex<double>> in,
               std::span<double> out) const;

 private:
  struct Plans;
  int n_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace reverbswap

#endif  // REVERBSWAP_FFT_H_
