#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace tdr::dsp {

/// In-place radix-2 FFT; size must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& data, bool inverse);

/// Forward DFT of a real signal, any length. Uses the radix-2 FFT for
/// power-of-two sizes and the direct O(N^2) sum otherwise (window lengths
/// here are small).
std::vector<std::complex<double>> dft(std::span<const double> x);

std::vector<double> hann_window(std::size_t n);
std::vector<double> rectangular_window(std::size_t n);

} // namespace tdr::dsp
