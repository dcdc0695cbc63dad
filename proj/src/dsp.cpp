#include "tdrscan/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tdr::dsp {

namespace {
constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
} // namespace

void fft_pow2(std::vector<std::complex<double>>& data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_pow2(n)) throw std::invalid_argument("fft_pow2 requires a power-of-two size");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = data[i + k];
                const auto v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& c : data) c *= inv;
    }
}

std::vector<std::complex<double>> dft(std::span<const double> x) {
    const std::size_t n = x.size();
    if (is_pow2(n)) {
        std::vector<std::complex<double>> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = x[i];
        fft_pow2(data, false);
        return data;
    }
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(m) /
                               static_cast<double>(n);
            acc += x[m] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                    static_cast<double>(n - 1));
    return w;
}

std::vector<double> rectangular_window(std::size_t n) {
    return std::vector<double>(n, 1.0);
}

} // namespace tdr::dsp
