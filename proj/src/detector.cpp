#include "tdrscan/detector.hpp"

#include "tdrscan/errors.hpp"
#include "tdrscan/si.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tdr {

void CalibrationConfig::validate() const {
    if (n_average < 1 || n_reference < n_average)
        throw ValidationError("calibration requires n_reference >= n_average >= 1");
    if (window_length < 2 * coherence.welch.segment_len)
        throw ValidationError("window length must cover at least two Welch segments");
    if (velocity <= 0.0) throw ValidationError("velocity must be positive");
}

namespace {

/// Per-sample standard deviation across captures, pooled over samples.
double estimate_noise_sigma(const MeasurementSeries& series) {
    const std::size_t n = series.size();
    if (n < 2) return 0.0;
    // bit-identical captures carry no noise; skip the rounding residue of
    // the mean
    bool identical = true;
    for (std::size_t i = 1; i < n && identical; ++i)
        identical = series.captures[i].samples == series.captures[0].samples;
    if (identical) return 0.0;
    const std::size_t len = series.captures.front().size();
    double pooled_var = 0.0;
    std::vector<double> mean(len, 0.0);
    for (const auto& cap : series.captures)
        for (std::size_t j = 0; j < len; ++j) mean[j] += cap.samples[j];
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& cap : series.captures)
        for (std::size_t j = 0; j < len; ++j) {
            const double d = cap.samples[j] - mean[j];
            pooled_var += d * d;
        }
    pooled_var /= static_cast<double>(len) * static_cast<double>(n - 1);
    return std::sqrt(pooled_var);
}

double peak_abs(const Waveform& w) {
    double peak = 0.0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    return peak;
}

MeasurementSeries slice(const MeasurementSeries& series, std::size_t begin,
                        std::size_t count) {
    MeasurementSeries out;
    out.captures.assign(series.captures.begin() + static_cast<std::ptrdiff_t>(begin),
                        series.captures.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
}

/// Coherence params with noise-aware PSD floors: bins whose spectra sit at
/// the averaged-noise level give no evidence of a physical change.
CoherenceParams floored_params(const CalibrationConfig& config, double sigma_capture,
                               double dt, std::size_t n_ref, std::size_t n_act) {
    CoherenceParams params = config.coherence;
    if (sigma_capture > 0.0 && config.noise_floor_beta > 0.0) {
        const double var_ref = sigma_capture * sigma_capture / static_cast<double>(n_ref);
        const double var_act = sigma_capture * sigma_capture / static_cast<double>(n_act);
        // white noise of variance s^2 has a flat one-sided PSD of 2 s^2 dt
        params.floor.psd_floor_x = config.noise_floor_beta * 2.0 * var_ref * dt;
        params.floor.psd_floor_y = config.noise_floor_beta * 2.0 * var_act * dt;
    }
    return params;
}

struct MethodScores {
    double mse_v = 0.0, xcorr_v = 0.0, rqcc_v = 0.0, k_v = 0.0;
    std::size_t window_origin = 0;
};

MethodScores score_pair(const Waveform& reference, const Waveform& actual,
                        const CalibrationConfig& config, const CoherenceParams& params) {
    auto [ref_win, act_win] = extract_window(reference, actual, config.window_length);
    MethodScores s;
    s.window_origin = ref_win.origin_index;
    s.mse_v = mse(ref_win, act_win);
    s.xcorr_v = xcorr_score(ref_win, act_win);
    s.rqcc_v = rqcc(act_win, ref_win, config.rqcc_order);
    s.k_v = extended_coherence(ref_win, act_win, params).score_k;
    return s;
}

} // namespace

ReferenceModel calibrate(const MeasurementSeries& reference_series,
                         const CalibrationConfig& config) {
    config.validate();
    reference_series.validate();
    if (reference_series.size() < config.n_reference)
        throw ValidationError("reference series holds " + std::to_string(reference_series.size()) +
                              " captures, need " + std::to_string(config.n_reference));

    ReferenceModel model;
    model.reference_waveform = average(reference_series);
    model.noise_sigma_estimate = estimate_noise_sigma(reference_series);
    model.n_reference_used = reference_series.size();

    const CoherenceParams params =
        floored_params(config, model.noise_sigma_estimate, model.reference_waveform.dt,
                       model.n_reference_used, config.n_average);

    const std::size_t n_batches = reference_series.size() / config.n_average;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const auto batch = slice(reference_series, b * config.n_average, config.n_average);
        const Waveform batch_avg = average(batch);
        model.baseline_scores.push_back(
            score_pair(model.reference_waveform, batch_avg, config, params).k_v);
    }

    switch (config.policy) {
    case ThresholdPolicy::fixed:
        model.threshold = config.policy_value;
        break;
    case ThresholdPolicy::baseline_max_plus: {
        const double base = model.baseline_scores.empty()
                                ? 0.0
                                : *std::max_element(model.baseline_scores.begin(),
                                                    model.baseline_scores.end());
        model.threshold = base + config.policy_value;
        break;
    }
    }

    model.activity_gate =
        config.activity_gate > 0.0
            ? config.activity_gate
            : std::max(10.0 * model.noise_sigma_estimate /
                           std::sqrt(static_cast<double>(config.n_average)),
                       0.02 * peak_abs(model.reference_waveform));
    return model;
}

DetectionReport detect(const ReferenceModel& model, const MeasurementSeries& actual_series,
                       const CalibrationConfig& config) {
    config.validate();
    actual_series.validate();
    if (actual_series.size() < config.n_average)
        throw ValidationError("actual series holds fewer than n_average captures");
    if (!actual_series.captures.front().same_grid(model.reference_waveform))
        throw ValidationError("actual series sampling does not match the reference model");

    const Waveform act = average_last(actual_series, config.n_average);
    const Waveform& ref = model.reference_waveform;

    const auto quiet_prefix = static_cast<std::size_t>(ref.t0 / ref.dt);
    const bool contaminated =
        activity_guard(act, quiet_prefix, model.activity_gate, config.can_bit_time) ==
        ActivityVerdict::contaminated;

    const CoherenceParams params = floored_params(
        config, model.noise_sigma_estimate, ref.dt, model.n_reference_used, config.n_average);
    const MethodScores s = score_pair(ref, act, config, params);

    DetectionReport report;
    report.scores["mse"] = s.mse_v;
    report.scores["xcorr"] = s.xcorr_v;
    report.scores["rqcc"] = s.rqcc_v;
    report.scores["coherence_k"] = s.k_v;
    report.window_origin = s.window_origin;
    report.contaminated = contaminated;
    report.alien_present = !contaminated && s.k_v > model.threshold;

    if (report.alien_present) {
        const double sigma_diff =
            model.noise_sigma_estimate *
            std::sqrt(1.0 / static_cast<double>(model.n_reference_used) +
                      1.0 / static_cast<double>(config.n_average));
        report.estimated_distance = locate_change(ref, act, config.velocity, sigma_diff,
                                                  config.k_sigma, config.onset_hold);
    }
    return report;
}

std::optional<double> locate_change(const Waveform& reference, const Waveform& actual,
                                    double velocity, double noise_sigma, double k_sigma,
                                    std::size_t hold) {
    if (!reference.same_grid(actual))
        throw ValidationError("localization requires equal sampling");
    if (velocity <= 0.0) throw ValidationError("velocity must be positive");
    if (hold < 1) hold = 1;

    const std::size_t n = reference.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i)
        diff[i] = actual.samples[i] - reference.samples[i];

    // Trailing-RMS energy gate. The echo's leading edge can sit below the
    // per-sample noise, so the gate integrates ~2 ns of difference energy;
    // the window is causal, which keeps the noise-free onset exact. The
    // k_sigma confidence bounds the chi-square excess of the window.
    std::size_t win = 1;
    if (noise_sigma > 0.0 && reference.dt > 0.0)
        win = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(2e-9 / reference.dt)), 1, n / 4);

    // tiny absolute floor so numerically identical traces never trigger
    const double floor = 1e-9 * peak_abs(reference);
    const double gate = std::max(
        noise_sigma * std::sqrt(1.0 + k_sigma * std::sqrt(2.0 / static_cast<double>(win))),
        floor);
    const double gate_sq = gate * gate * static_cast<double>(win);

    double acc = 0.0;
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += diff[i] * diff[i];
        if (i >= win) acc -= diff[i - win] * diff[i - win];
        if (i + 1 < win) continue;
        if (acc > gate_sq) {
            if (++run >= hold) {
                const std::size_t onset = i + 1 - hold;
                return velocity * (reference.time_at(onset) - reference.t0) / 2.0;
            }
        } else {
            run = 0;
        }
    }
    return std::nullopt;
}

ActivityVerdict activity_guard(const Waveform& w, std::size_t quiet_prefix,
                               double level_gate, double bit_time) {
    if (quiet_prefix >= w.size())
        throw ValidationError("quiet prefix must be shorter than the capture");

    for (std::size_t i = 0; i < quiet_prefix; ++i)
        if (std::abs(w.samples[i]) > level_gate) return ActivityVerdict::contaminated;

    if (w.dt > 0.0 && bit_time > 0.0) {
        const auto plateau = static_cast<std::size_t>(std::ceil(bit_time / w.dt));
        std::size_t run = 0;
        for (double s : w.samples) {
            run = s >= level_gate ? run + 1 : 0;
            if (run >= plateau && plateau > 0) return ActivityVerdict::contaminated;
        }
    }
    return ActivityVerdict::clean;
}

// ---------------------------------------------------------------------------
// DetectionReport serialization
// ---------------------------------------------------------------------------

std::string DetectionReport::to_text(double threshold) const {
    std::ostringstream out;
    out << "k_score: " << format_number(k_score()) << "\n"
        << "threshold: " << format_number(threshold) << "\n"
        << "mse: " << format_number(scores.at("mse")) << "\n"
        << "xcorr: " << format_number(scores.at("xcorr")) << "\n"
        << "rqcc: " << format_number(scores.at("rqcc")) << "\n"
        << "alien_present: " << (alien_present ? "true" : "false") << "\n"
        << "contaminated: " << (contaminated ? "true" : "false") << "\n"
        << "window_origin: " << window_origin << "\n"
        << "estimated_distance_m: "
        << (estimated_distance ? format_number(*estimated_distance) : std::string("none"))
        << "\n";
    return out.str();
}

std::string DetectionReport::csv_header() {
    return "timestamp,k_score,mse,xcorr,rqcc,alien,distance_m,contaminated";
}

std::string DetectionReport::to_csv_row(double timestamp) const {
    std::ostringstream out;
    out << format_number(timestamp) << ',' << format_number(k_score()) << ','
        << format_number(scores.at("mse")) << ',' << format_number(scores.at("xcorr")) << ','
        << format_number(scores.at("rqcc")) << ',' << (alien_present ? 1 : 0) << ','
        << (estimated_distance ? format_number(*estimated_distance) : std::string()) << ','
        << (contaminated ? 1 : 0);
    return out.str();
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

std::string BenchmarkTable::symbol(std::size_t detected, std::size_t trials) {
    if (trials == 0 || detected == 0) return "-";
    if (detected == trials) return "✓";
    return "(✓)";
}

std::string BenchmarkTable::to_text() const {
    std::ostringstream out;
    out << "method";
    for (const auto& l : labels) out << '\t' << l;
    out << "\n";
    for (std::size_t m = 0; m < methods.size(); ++m) {
        out << methods[m];
        for (std::size_t l = 0; l < labels.size(); ++l)
            out << '\t' << symbol(detections[m][l], trials);
        out << "\n";
    }
    return out.str();
}

std::string BenchmarkTable::to_csv() const {
    std::ostringstream out;
    out << "method,label,detected,trials,rate\n";
    for (std::size_t m = 0; m < methods.size(); ++m)
        for (std::size_t l = 0; l < labels.size(); ++l) {
            const double rate =
                trials == 0 ? 0.0
                            : static_cast<double>(detections[m][l]) / static_cast<double>(trials);
            out << methods[m] << ',' << labels[l] << ',' << detections[m][l] << ',' << trials
                << ',' << format_number(rate) << "\n";
        }
    return out.str();
}

namespace {

MeasurementSeries noisy_series(const Waveform& clean, double sigma, std::uint64_t seed,
                               std::size_t n) {
    MeasurementSeries series;
    series.captures.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        series.captures.push_back(add_noise(clean, sigma, capture_seed(seed, i)));
    return series;
}

} // namespace

BenchmarkTable benchmark_methods(const Topology& topology,
                                 const std::vector<std::string>& labels,
                                 std::size_t trials, const BenchConfig& config) {
    const CalibrationConfig& cal = config.calibration;
    cal.validate();
    for (const auto& label : labels)
        if (!topology.find_stub(label))
            throw ValidationError("no stub labelled '" + label + "' in the topology");

    BenchmarkTable table;
    table.methods = {"mse", "xcorr", "rqcc", "coherence_k"};
    table.labels = labels;
    table.trials = trials;
    table.detections.assign(table.methods.size(),
                            std::vector<std::size_t>(labels.size(), 0));
    if (labels.empty() || trials == 0) return table;

    // Pin the record length to the intact bus so removal runs, whose cable
    // total is shorter, land on the identical sampling grid.
    SimConfig sim = config.sim;
    if (sim.duration <= 0.0) {
        const RecordGrid grid = derive_record_grid(topology, config.pulse, sim);
        sim.duration = (static_cast<double>(grid.samples) - 1.5) * grid.dt;
    }

    // reference model on the intact bus; the clean trace is reused across
    // trials, only the noise seeds change
    const Waveform clean_ref = simulate_tdr(topology, config.pulse, sim);
    const MeasurementSeries ref_series =
        noisy_series(clean_ref, sim.noise_sigma, sim.rng_seed, cal.n_reference);
    const ReferenceModel model = calibrate(ref_series, cal);
    const CoherenceParams params =
        floored_params(cal, model.noise_sigma_estimate, clean_ref.dt, model.n_reference_used,
                       cal.n_average);

    // per-method baselines over the same disjoint reference batches
    double mse_max = 0.0, rqcc_max = 0.0, xcorr_min = 1.0;
    const std::size_t n_batches = ref_series.size() / cal.n_average;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const Waveform batch_avg =
            average(slice(ref_series, b * cal.n_average, cal.n_average));
        const MethodScores s = score_pair(model.reference_waveform, batch_avg, cal, params);
        mse_max = std::max(mse_max, s.mse_v);
        rqcc_max = std::max(rqcc_max, s.rqcc_v);
        xcorr_min = std::min(xcorr_min, s.xcorr_v);
    }
    const double mse_thr = 1.5 * mse_max + 1e-18;
    const double rqcc_thr = 1.5 * rqcc_max + 1e-12;
    const double xcorr_thr = xcorr_min - std::max(0.5 * (1.0 - xcorr_min), 1e-12);

    for (std::size_t l = 0; l < labels.size(); ++l) {
        const Topology removed = remove_device(topology, labels[l]);
        const Waveform clean_removed = simulate_tdr(removed, config.pulse, sim);
        for (std::size_t t = 0; t < trials; ++t) {
            const std::uint64_t seed =
                capture_seed(capture_seed(sim.rng_seed, l + 1), t + 1);
            const Waveform act = average(
                noisy_series(clean_removed, sim.noise_sigma, seed, cal.n_average));
            const MethodScores s = score_pair(model.reference_waveform, act, cal, params);
            if (s.mse_v > mse_thr) ++table.detections[0][l];
            if (s.xcorr_v < xcorr_thr) ++table.detections[1][l];
            if (s.rqcc_v > rqcc_thr) ++table.detections[2][l];
            if (s.k_v > model.threshold) ++table.detections[3][l];
        }
    }
    return table;
}

} // namespace tdr
