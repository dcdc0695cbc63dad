#pragma once

#include "tdrscan/waveform.hpp"

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

namespace tdr {

/// A slice of a waveform handed to the comparison techniques. Compared
/// pairs always share dt, length and origin.
struct SignalWindow {
    std::vector<double> samples;
    double dt = 0.0;
    std::size_t origin_index = 0; ///< index of samples[0] in the parent waveform
};

/// One-sided spectrum on a uniform frequency grid starting at 0 Hz.
struct Spectrum {
    std::vector<double> frequencies;            ///< [Hz], strictly increasing
    std::vector<std::complex<double>> values;
};

/// Cuts equal windows out of both waveforms, centred at the sample with
/// the largest |act - ref| (earliest such sample on ties), clipped so the
/// window stays in range.
std::pair<SignalWindow, SignalWindow> extract_window(const Waveform& ref,
                                                     const Waveform& act,
                                                     std::size_t length);

/// Mean squared pointwise difference; 0 for identical windows. Sensitive
/// to offsets: a constant shift c contributes c^2.
double mse(const SignalWindow& a, const SignalWindow& b);

/// Normalized cross-correlation, mean removed, maximised over integer lags
/// in [-N/4, N/4]: the signed coefficient at the lag of largest magnitude.
/// 1 means one window is a positively scaled, shifted copy of the other.
double xcorr_score(const SignalWindow& a, const SignalWindow& b);

/// Relative Sobolev H^s distance ||a - b|| / ||b|| with
/// ||f||^2 = sum over DFT bins of (1 + w^2)^s |F(w)|^2, w the normalized
/// angular frequency in [-pi, pi]. 0 for identical windows; s = 0 reduces
/// to the relative L2 distance.
double rqcc(const SignalWindow& a, const SignalWindow& b, double order_s = 1.0);

enum class Taper { hann, rectangular };

struct WelchParams {
    std::size_t segment_len = 64;
    double overlap = 0.5; ///< fraction of segment_len
    Taper taper = Taper::hann;
};

struct SpectraTriple {
    Spectrum pxx, pyy, pxy;
};

/// Segment-averaged auto- and cross-spectral densities (one-sided, density
/// scaling). Pxy uses conj(X)*Y so its phase is the cross-spectral phase
/// of y against x. Demands at least two segments.
SpectraTriple welch_spectra(const SignalWindow& x, const SignalWindow& y,
                            const WelchParams& params = {});

/// Numerical floors for the coherence quotient. Bins whose spectra carry
/// no usable power read as "no evidence of difference" and are pinned to
/// C = 1: always when Pxx*Pyy falls below floor_rel * max(Pxx) * max(Pyy),
/// and additionally below the absolute per-signal PSD floors when those
/// are set (the detector derives them from the calibrated noise level).
struct CoherenceFloor {
    double floor_rel = 1e-12;
    double psd_floor_x = 0.0;
    double psd_floor_y = 0.0;
};

/// Magnitude-squared coherence |Pxy|^2 / (Pxx * Pyy), clamped to [0, 1].
std::vector<double> coherence(const Spectrum& pxx, const Spectrum& pyy, const Spectrum& pxy,
                              const CoherenceFloor& floor = {});

struct CoherencePeak {
    double frequency = 0.0;    ///< [Hz]
    double one_minus_c = 0.0;  ///< peak height of 1 - C(w)
    double phase_weight = 0.0; ///< |phase of Pxy| at the peak [rad]
};

struct CoherenceResult {
    std::vector<double> frequencies;  ///< [Hz]
    std::vector<double> coherence;    ///< C(w) in [0, 1]
    std::vector<double> cross_phase;  ///< angle of Pxy(w) [rad]
    std::vector<CoherencePeak> peaks;
    double score_k = 0.0; ///< sum over peaks of (1 - C) * |phase|
};

struct CoherenceParams {
    WelchParams welch;
    double peak_threshold = 0.2; ///< peaks must strictly exceed this in 1 - C
    CoherenceFloor floor;
};

/// Full phase-weighted coherence chain: Welch spectra, C(w), cross phase,
/// peak detection on 1 - C(w) (strict local maxima above the threshold,
/// plateau ties resolved to the lowest frequency) and the scalar score
/// K = sum of (1 - C) * |phase| over detected peaks. K stays exactly 0
/// when no peak exceeds the threshold.
CoherenceResult extended_coherence(const SignalWindow& ref, const SignalWindow& act,
                                   const CoherenceParams& params = {});

} // namespace tdr
