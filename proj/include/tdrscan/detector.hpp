#pragma once

#include "tdrscan/analysis.hpp"
#include "tdrscan/fdtd.hpp"
#include "tdrscan/topology.hpp"
#include "tdrscan/waveform.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdr {

enum class ThresholdPolicy {
    fixed,             ///< threshold = policy_value (0 reproduces the bare rule)
    baseline_max_plus, ///< threshold = max(baseline scores) + policy_value
};

struct CalibrationConfig {
    std::size_t n_reference = 300; ///< captures folded into the reference
    std::size_t n_average = 30;    ///< captures averaged per detection batch
    std::size_t window_length = 256;
    ThresholdPolicy policy = ThresholdPolicy::baseline_max_plus;
    double policy_value = 0.01; ///< fixed threshold or margin above baseline

    CoherenceParams coherence; ///< Welch setup and peak threshold
    double rqcc_order = 1.0;

    double velocity = 2e8; ///< propagation velocity for localization [m/s]
    double k_sigma = 5.0;  ///< onset gate in units of averaged noise sigma
    std::size_t onset_hold = 5;

    /// Coherence bins below beta times the averaged-noise PSD carry no
    /// evidence and read as C = 1.
    double noise_floor_beta = 16.0;

    double activity_gate = 0.0; ///< [V]; 0 derives a gate at calibration
    double can_bit_time = 2e-6; ///< [s], one bit at 500 kbit/s

    void validate() const;
};

/// Everything calibration learns from the reference series.
struct ReferenceModel {
    Waveform reference_waveform;      ///< average of the reference captures
    double noise_sigma_estimate = 0.0; ///< per-capture noise [V]
    std::vector<double> baseline_scores; ///< K of each held-out reference batch
    double threshold = 0.0;
    double activity_gate = 0.0; ///< [V]
    std::size_t n_reference_used = 0;
};

/// Averages the series into the reference waveform, estimates the noise
/// level, scores each disjoint batch of n_average captures against the
/// full average and fixes the detection threshold per the policy.
ReferenceModel calibrate(const MeasurementSeries& reference_series,
                         const CalibrationConfig& config);

struct DetectionReport {
    std::map<std::string, double> scores; ///< mse, xcorr, rqcc, coherence_k
    bool alien_present = false;
    std::optional<double> estimated_distance; ///< [m], only on detection
    std::size_t window_origin = 0;
    bool contaminated = false;

    double k_score() const { return scores.at("coherence_k"); }

    /// key: value lines
    std::string to_text(double threshold) const;
    /// timestamp,k_score,mse,xcorr,rqcc,alien,distance_m,contaminated
    static std::string csv_header();
    std::string to_csv_row(double timestamp) const;
};

/// Scores the average of the most recent n_average captures against the
/// model: activity guard, window extraction, all four methods, verdict
/// (coherence K above threshold and not contaminated) and localization
/// on a positive verdict.
DetectionReport detect(const ReferenceModel& model, const MeasurementSeries& actual_series,
                       const CalibrationConfig& config);

/// Distance to the first persistent deviation: the earliest time where
/// |actual - reference| exceeds k_sigma * noise_sigma for at least hold
/// consecutive samples maps to v * (onset - t0) / 2. Empty when the
/// difference never exceeds the gate.
std::optional<double> locate_change(const Waveform& reference, const Waveform& actual,
                                    double velocity, double noise_sigma,
                                    double k_sigma = 5.0, std::size_t hold = 5);

enum class ActivityVerdict { clean, contaminated };

/// Rejects captures overlapped by bus traffic: any pre-pulse sample above
/// level_gate, or any plateau at dominant level lasting at least one CAN
/// bit time anywhere in the capture.
ActivityVerdict activity_guard(const Waveform& w, std::size_t quiet_prefix,
                               double level_gate, double bit_time = 2e-6);

// ---------------------------------------------------------------------------
// Method benchmark
// ---------------------------------------------------------------------------

struct BenchConfig {
    CalibrationConfig calibration;
    PulseSpec pulse;
    SimConfig sim;
};

struct BenchmarkTable {
    std::vector<std::string> methods; ///< row order
    std::vector<std::string> labels;  ///< column order, as requested
    /// detections[method][label] counts trials with a positive verdict
    std::vector<std::vector<std::size_t>> detections;
    std::size_t trials = 0;

    /// "✓" when detected in all trials, "(✓)" in some, "-" in none.
    static std::string symbol(std::size_t detected, std::size_t trials);
    std::string to_text() const;
    std::string to_csv() const;
};

/// For each labelled ECU, simulates its removal from the bus and runs all
/// four comparison methods across seeded trials against a reference model
/// calibrated on the intact topology. Per-method thresholds derive from
/// the same baseline batches the coherence threshold uses.
BenchmarkTable benchmark_methods(const Topology& topology,
                                 const std::vector<std::string>& labels,
                                 std::size_t trials, const BenchConfig& config);

} // namespace tdr
