#include "melstorm/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "melstorm/error.hpp"

namespace melstorm {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n == 0) throw Error("fft: size must be at least 1");
  if (pow2_) {
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
    bitrev_.resize(n);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      }
      bitrev_[i] = r;
    }
    return;
  }

  // chirp[k] = exp(-i pi k^2 / n); k^2 is reduced mod 2n to keep the angle small.
  chirp_.resize(n);
  const std::size_t period = 2 * n;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % period;
    const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(angle), std::sin(angle)};
  }
  const std::size_t m = next_pow2(2 * n - 1);
  padded_ = std::make_unique<FftPlan>(m);
  kernel_fft_.assign(m, Complex{});
  kernel_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    kernel_fft_[k] = std::conj(chirp_[k]);
    kernel_fft_[m - k] = std::conj(chirp_[k]);
  }
  padded_->forward(kernel_fft_);
}

FftPlan::~FftPlan() = default;
FftPlan::FftPlan(FftPlan&&) noexcept = default;
FftPlan& FftPlan::operator=(FftPlan&&) noexcept = default;

void FftPlan::forward(std::span<Complex> data) const {
  if (data.size() != n_) {
    throw Error("fft: plan of size " + std::to_string(n_) + " applied to " + std::to_string(data.size()) +
                " samples");
  }
  if (pow2_) {
    radix2(data);
  } else {
    bluestein(data);
  }
}

void FftPlan::inverse(std::span<Complex> data) const {
  for (auto& v : data) v = std::conj(v);
  forward(data);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : data) v = std::conj(v) * scale;
}

void FftPlan::radix2(std::span<Complex> data) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex t = twiddles_[k * step] * data[start + k + half];
        const Complex u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
}

void FftPlan::bluestein(std::span<Complex> data) const {
  const std::size_t m = padded_->size();
  std::vector<Complex> work(m, Complex{});
  for (std::size_t k = 0; k < n_; ++k) work[k] = data[k] * chirp_[k];
  padded_->forward(work);
  for (std::size_t k = 0; k < m; ++k) work[k] *= kernel_fft_[k];
  padded_->inverse(work);
  for (std::size_t k = 0; k < n_; ++k) data[k] = work[k] * chirp_[k];
}

std::vector<Complex> fft(std::span<const Complex> signal) {
  std::vector<Complex> out(signal.begin(), signal.end());
  FftPlan(out.size()).forward(out);
  return out;
}

std::vector<Complex> ifft(std::span<const Complex> spectrum) {
  std::vector<Complex> out(spectrum.begin(), spectrum.end());
  FftPlan(out.size()).inverse(out);
  return out;
}

}  // namespace melstorm
