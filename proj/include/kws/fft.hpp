#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace kws {

/// Iterative radix-2 FFT for a fixed power-of-two size. Twiddles and the
/// bit-reversal permutation are computed once at construction.
class Fft {
 public:
  explicit Fft(std::size_t size);

  std::size_t size() const { return size_; }

  /// In-place forward transform (no scaling).
  void forward(std::span<std::complex<double>> data) const;

  /// |X[k]|^2 for k = 0..size/2 of a real input zero-padded to size().
  void power_spectrum(std::span<const double> input, std::span<double> out) const;

 private:
  std::size_t size_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::size_t> bitrev_;
};

}  // namespace kws
