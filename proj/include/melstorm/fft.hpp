#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace melstorm {

using Complex = std::complex<double>;

/// Exact-length discrete Fourier transform of any size n >= 1.
///
/// Powers of two run an iterative radix-2 transform. Other sizes use
/// Bluestein's chirp-z identity jk = (j^2 + k^2 - (k-j)^2) / 2, which turns the
/// DFT into a convolution evaluated with a padded power-of-two transform.
/// A plan is immutable after construction and may be shared between threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(FftPlan&&) noexcept;
  FftPlan& operator=(FftPlan&&) noexcept;

  std::size_t size() const { return n_; }

  /// X[k] = sum_j x[j] exp(-2 pi i jk / n), in place.
  void forward(std::span<Complex> data) const;
  /// x[j] = (1/n) sum_k X[k] exp(+2 pi i jk / n), in place.
  void inverse(std::span<Complex> data) const;

 private:
  void radix2(std::span<Complex> data) const;
  void bluestein(std::span<Complex> data) const;

  std::size_t n_ = 0;
  bool pow2_ = true;
  std::vector<Complex> twiddles_;
  std::vector<std::size_t> bitrev_;
  // Bluestein only.
  std::vector<Complex> chirp_;
  std::vector<Complex> kernel_fft_;
  std::unique_ptr<FftPlan> padded_;
};

std::vector<Complex> fft(std::span<const Complex> signal);
std::vector<Complex> ifft(std::span<const Complex> spectrum);

}  // namespace melstorm
