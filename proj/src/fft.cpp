#include "kws/fft.hpp"

#include <bit>
#include <numbers>

#include "kws/errors.hpp"

namespace kws {

Fft::Fft(std::size_t size) : size_(size), twiddles_(size / 2), bitrev_(size) {
  if (size < 2 || !std::has_single_bit(size)) {
    throw ValidationError("FFT size must be a power of two >= 2");
  }
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / size;
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
  const int bits = std::countr_zero(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void Fft::forward(std::span<std::complex<double>> data) const {
  KWS_REQUIRE(data.size() == size_, "FFT input has wrong length");
  for (std::size_t i = 0; i < size_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const auto t = twiddles_[j * step] * data[start + j + half];
        data[start + j + half] = data[start + j] - t;
        data[start + j] += t;
      }
    }
  }
}

void Fft::power_spectrum(std::span<const double> input, std::span<double> out) const {
  KWS_REQUIRE(input.size() <= size_, "FFT input longer than transform");
  KWS_REQUIRE(out.size() == size_ / 2 + 1, "power spectrum output has wrong length");
  std::vector<std::complex<double>> buf(size_);
  for (std::size_t i = 0; i < input.size(); ++i) buf[i] = input[i];
  forward(buf);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
}

}  // namespace kws
