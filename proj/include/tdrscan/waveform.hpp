#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tdr {

/// A uniformly sampled voltage trace at the measurement port.
/// Sample i sits at time i*dt; the pulse is injected at t0, so samples
/// before t0 form the pre-trigger region.
struct Waveform {
    double t0 = 0.0; ///< injection instant [s]
    double dt = 0.0; ///< sample spacing [s]
    std::vector<double> samples; ///< voltages [V]

    std::size_t size() const { return samples.size(); }
    double time_at(std::size_t i) const { return static_cast<double>(i) * dt; }
    double duration() const { return samples.empty() ? 0.0 : time_at(samples.size() - 1); }
    bool same_grid(const Waveform& other) const;
};

/// A batch of repeated TDR captures sharing one sampling grid.
struct MeasurementSeries {
    std::vector<Waveform> captures;

    std::size_t size() const { return captures.size(); }
    bool empty() const { return captures.empty(); }
    /// Throws ValidationError unless every member shares t0, dt and length.
    void validate() const;
};

/// Pointwise arithmetic mean of all captures. Throws on an empty series.
Waveform average(const MeasurementSeries& series);

/// Mean over the most recent n captures (the tail of the series).
Waveform average_last(const MeasurementSeries& series, std::size_t n);

/// Adds zero-mean Gaussian noise with standard deviation sigma.
/// Deterministic for a given seed.
Waveform add_noise(const Waveform& w, double sigma, std::uint64_t seed);

/// Overlays a piecewise-constant differential bus signal: bit k of the
/// pattern occupies [k/bitrate, (k+1)/bitrate) from the start of the
/// record; dominant (true) bits add dominant_level, recessive bits add 0.
Waveform superimpose_can_traffic(const Waveform& w, double bitrate,
                                 const std::vector<bool>& pattern,
                                 double dominant_level);

// ---------------------------------------------------------------------------
// CSV interchange. Waveform files carry a `time_s,voltage_v` header, series
// files `time_s,capture_0,...,capture_{n-1}`. Lines starting with '#' are
// metadata comments; `# t0_s=<v>` restores the injection instant on read.
// ---------------------------------------------------------------------------

void write_waveform_csv(std::ostream& out, const Waveform& w,
                        const std::vector<std::string>& header_comments = {});
void write_series_csv(std::ostream& out, const MeasurementSeries& s,
                      const std::vector<std::string>& header_comments = {});

Waveform read_waveform_csv(std::istream& in);
MeasurementSeries read_series_csv(std::istream& in);

void write_waveform_csv_file(const std::filesystem::path& path, const Waveform& w,
                             const std::vector<std::string>& header_comments = {});
void write_series_csv_file(const std::filesystem::path& path, const MeasurementSeries& s,
                           const std::vector<std::string>& header_comments = {});
Waveform read_waveform_csv_file(const std::filesystem::path& path);
MeasurementSeries read_series_csv_file(const std::filesystem::path& path);

} // namespace tdr
