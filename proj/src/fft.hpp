#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace neoseize::detail {

// |FFT|^2 of a real sequence of length n, bins 0..n/2.
void power_spectrum(std::span<const double> x, std::span<double> out);

// Inverse of a half spectrum (bins 0..n/2) back to n real samples, unnormalized.
void inverse_real(std::span<const std::complex<double>> half, std::span<double> out);

// Forward real FFT, bins 0..n/2.
void forward_real(std::span<const double> x, std::span<std::complex<double>> out);

}  // namespace neoseize::detail
