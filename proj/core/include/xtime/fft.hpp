#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace xtime::fft {

/// Half-spectrum forward transform: n real samples -> n/2 + 1 bins,
/// unnormalized (bin k = sum_t x[t] e^{-2 pi i k t / n}).
std::vector<std::complex<double>> rfft(std::span<const double> signal);

/// Inverse of rfft for a real signal of length n, including the 1/n factor.
/// Imaginary parts of the DC bin (and the Nyquist bin for even n) are ignored.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

/// Number of half-spectrum bins for a length-n real signal.
constexpr std::size_t half_bins(std::size_t n) { return n / 2 + 1; }

}  // namespace xtime::fft
