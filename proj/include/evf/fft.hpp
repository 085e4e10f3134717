#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace evf::fft {

// Forward real-to-complex DFT, X_k = sum_n x_n exp(-2 pi i k n / L),
// returning bins 0..L/2. Any length is accepted.
std::vector<std::complex<double>> rfft(std::span<const double> x);

// Unnormalized complex-to-real inverse of a half spectrum of length n/2+1:
//   x_n = sum_{k=0}^{n-1} X_k exp(+2 pi i k n / L), Hermitian extension.
std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n);

bool is_power_of_two(std::size_t n);

}  // namespace evf::fft
