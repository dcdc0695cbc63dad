#include "tdrscan/analysis.hpp"

#include "tdrscan/dsp.hpp"
#include "tdrscan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tdr {

namespace {

void check_pair(const SignalWindow& a, const SignalWindow& b) {
    if (a.samples.empty() || b.samples.empty())
        throw AnalysisError("signal windows must be non-empty");
    if (a.samples.size() != b.samples.size())
        throw AnalysisError("signal windows differ in length");
    if (a.dt != b.dt) throw AnalysisError("signal windows differ in sample spacing");
}

} // namespace

std::pair<SignalWindow, SignalWindow> extract_window(const Waveform& ref,
                                                     const Waveform& act,
                                                     std::size_t length) {
    if (ref.dt != act.dt || ref.size() != act.size())
        throw AnalysisError("reference and actual waveforms are sampled differently");
    if (length == 0 || length > ref.size())
        throw AnalysisError("window length exceeds the waveform");

    std::size_t centre = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = std::abs(act.samples[i] - ref.samples[i]);
        if (d > best) { // strictly greater: earliest index wins ties
            best = d;
            centre = i;
        }
    }

    std::size_t start = centre >= length / 2 ? centre - length / 2 : 0;
    start = std::min(start, ref.size() - length);

    auto cut = [&](const Waveform& w) {
        SignalWindow win;
        win.dt = w.dt;
        win.origin_index = start;
        win.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                           w.samples.begin() + static_cast<std::ptrdiff_t>(start + length));
        return win;
    };
    return {cut(ref), cut(act)};
}

double mse(const SignalWindow& a, const SignalWindow& b) {
    check_pair(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const double d = a.samples[i] - b.samples[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.samples.size());
}

double xcorr_score(const SignalWindow& a, const SignalWindow& b) {
    check_pair(a, b);
    const auto n = static_cast<std::ptrdiff_t>(a.samples.size());

    auto variance = [&](const std::vector<double>& s) {
        double mean = 0.0;
        for (double v : s) mean += v;
        mean /= static_cast<double>(s.size());
        double var = 0.0;
        for (double v : s) var += (v - mean) * (v - mean);
        return var;
    };
    if (variance(a.samples) == 0.0 || variance(b.samples) == 0.0)
        throw AnalysisError("cross-correlation needs nonzero-variance windows");

    const std::ptrdiff_t max_lag = n / 4;
    double best_r = 0.0, best_mag = -1.0;
    for (std::ptrdiff_t lag = -max_lag; lag <= max_lag; ++lag) {
        // overlap region: a[i] against b[i - lag]
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, lag);
        const std::ptrdiff_t hi = std::min(n, n + lag);
        const auto m = static_cast<double>(hi - lo);
        if (hi - lo < 2) continue;

        double ma = 0.0, mb = 0.0;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
            ma += a.samples[static_cast<std::size_t>(i)];
            mb += b.samples[static_cast<std::size_t>(i - lag)];
        }
        ma /= m;
        mb /= m;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
            const double da = a.samples[static_cast<std::size_t>(i)] - ma;
            const double db = b.samples[static_cast<std::size_t>(i - lag)] - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        if (saa == 0.0 || sbb == 0.0) continue; // flat overlap carries no signal
        const double r = sab / std::sqrt(saa * sbb);
        // largest magnitude wins; ties prefer the smaller |lag| seen first
        if (std::abs(r) > best_mag + 1e-15 ||
            (std::abs(std::abs(r) - best_mag) <= 1e-15 && lag == 0)) {
            best_mag = std::abs(r);
            best_r = r;
        }
    }
    return best_r;
}

double rqcc(const SignalWindow& a, const SignalWindow& b, double order_s) {
    check_pair(a, b);
    if (order_s < 0.0) throw AnalysisError("Sobolev order must be non-negative");

    const std::size_t n = a.samples.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a.samples[i] - b.samples[i];

    const auto fd = dsp::dft(diff);
    const auto fb = dsp::dft(b.samples);

    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        // fold to the normalized angular frequency in [-pi, pi]
        const std::size_t kk = std::min(k, n - k);
        const double w = 2.0 * std::numbers::pi * static_cast<double>(kk) /
                         static_cast<double>(n);
        const double weight = std::pow(1.0 + w * w, order_s);
        num += weight * std::norm(fd[k]);
        den += weight * std::norm(fb[k]);
    }
    if (den == 0.0) throw AnalysisError("RQCC reference window has zero norm");
    return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Spectral estimation
// ---------------------------------------------------------------------------

SpectraTriple welch_spectra(const SignalWindow& x, const SignalWindow& y,
                            const WelchParams& params) {
    check_pair(x, y);
    const std::size_t n = x.samples.size();
    const std::size_t seg = params.segment_len;
    if (seg < 2 || seg > n) throw AnalysisError("segment length must fit the window");
    if (params.overlap < 0.0 || params.overlap >= 1.0)
        throw AnalysisError("overlap fraction must lie in [0, 1)");

    const auto step = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               static_cast<double>(seg) * (1.0 - params.overlap))));
    const std::size_t n_segments = n >= seg ? (n - seg) / step + 1 : 0;
    if (n_segments < 2)
        throw AnalysisError("window yields fewer than two Welch segments");

    const std::vector<double> win = params.taper == Taper::hann
                                        ? dsp::hann_window(seg)
                                        : dsp::rectangular_window(seg);
    double u = 0.0;
    for (double w : win) u += w * w;

    const double fs = 1.0 / x.dt;
    const std::size_t n_bins = seg / 2 + 1;

    SpectraTriple out;
    for (Spectrum* s : {&out.pxx, &out.pyy, &out.pxy}) {
        s->frequencies.resize(n_bins);
        s->values.assign(n_bins, {0.0, 0.0});
        for (std::size_t k = 0; k < n_bins; ++k)
            s->frequencies[k] = static_cast<double>(k) * fs / static_cast<double>(seg);
    }

    std::vector<double> bufx(seg), bufy(seg);
    for (std::size_t s = 0; s < n_segments; ++s) {
        const std::size_t at = s * step;
        for (std::size_t i = 0; i < seg; ++i) {
            bufx[i] = x.samples[at + i] * win[i];
            bufy[i] = y.samples[at + i] * win[i];
        }
        const auto fx = dsp::dft(bufx);
        const auto fy = dsp::dft(bufy);
        for (std::size_t k = 0; k < n_bins; ++k) {
            out.pxx.values[k] += std::norm(fx[k]);
            out.pyy.values[k] += std::norm(fy[k]);
            out.pxy.values[k] += std::conj(fx[k]) * fy[k];
        }
    }

    const double scale = 1.0 / (static_cast<double>(n_segments) * fs * u);
    for (std::size_t k = 0; k < n_bins; ++k) {
        // one-sided density: interior bins carry both spectral halves
        const double side = (k == 0 || (seg % 2 == 0 && k == n_bins - 1)) ? 1.0 : 2.0;
        out.pxx.values[k] *= side * scale;
        out.pyy.values[k] *= side * scale;
        out.pxy.values[k] *= side * scale;
    }
    return out;
}

std::vector<double> coherence(const Spectrum& pxx, const Spectrum& pyy, const Spectrum& pxy,
                              const CoherenceFloor& floor) {
    const std::size_t n = pxx.values.size();
    if (pyy.values.size() != n || pxy.values.size() != n ||
        pxx.frequencies != pyy.frequencies || pxx.frequencies != pxy.frequencies)
        throw AnalysisError("spectra do not share a frequency grid");

    double max_x = 0.0, max_y = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        max_x = std::max(max_x, pxx.values[k].real());
        max_y = std::max(max_y, pyy.values[k].real());
    }
    const double eps = floor.floor_rel * max_x * max_y;

    std::vector<double> c(n, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double px = pxx.values[k].real();
        const double py = pyy.values[k].real();
        const bool starved = px * py <= eps ||
                             (floor.psd_floor_x > 0.0 && px <= floor.psd_floor_x) ||
                             (floor.psd_floor_y > 0.0 && py <= floor.psd_floor_y);
        if (starved) continue; // no usable power: read as no evidence, C = 1
        c[k] = std::clamp(std::norm(pxy.values[k]) / (px * py), 0.0, 1.0);
    }
    return c;
}

CoherenceResult extended_coherence(const SignalWindow& ref, const SignalWindow& act,
                                   const CoherenceParams& params) {
    const SpectraTriple spectra = welch_spectra(ref, act, params.welch);

    CoherenceResult result;
    result.frequencies = spectra.pxx.frequencies;
    result.coherence = coherence(spectra.pxx, spectra.pyy, spectra.pxy, params.floor);
    result.cross_phase.resize(result.frequencies.size());
    for (std::size_t k = 0; k < result.cross_phase.size(); ++k)
        result.cross_phase[k] = std::arg(spectra.pxy.values[k]);

    // peaks: strict local maxima of 1 - C(w); a plateau peaks at its
    // lowest-frequency bin
    const std::size_t n = result.coherence.size();
    std::vector<double> dip(n);
    for (std::size_t k = 0; k < n; ++k) dip[k] = 1.0 - result.coherence[k];

    for (std::size_t k = 0; k < n; ++k) {
        if (!(dip[k] > params.peak_threshold)) continue;
        if (k > 0 && !(dip[k] > dip[k - 1])) continue;
        // walk any plateau to the right; require a strict drop after it
        std::size_t end = k;
        while (end + 1 < n && dip[end + 1] == dip[k]) ++end;
        if (end + 1 < n && !(dip[end + 1] < dip[k])) continue;
        result.peaks.push_back(
            {result.frequencies[k], dip[k], std::abs(result.cross_phase[k])});
    }

    result.score_k = 0.0;
    for (const auto& p : result.peaks) result.score_k += p.one_minus_c * p.phase_weight;
    return result;
}

} // namespace tdr
