#pragma once

#include "tdrscan/topology.hpp"
#include "tdrscan/waveform.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace tdr {

/// The injected TDR probe pulse, entering the line through a Thevenin
/// source: an ideal voltage source behind source_impedance at the
/// measurement port. A negative source_impedance selects Z0 of the port
/// segment, emulating a matched pulse generator.
struct PulseSpec {
    enum class Shape { rectangular, gaussian };

    double amplitude = 1.0;         ///< [V], open-circuit source amplitude
    double width = 3e-9;            ///< [s]; FWHM for the gaussian shape
    Shape shape = Shape::rectangular;
    double source_impedance = -1.0; ///< [ohm]; < 0 means match the line

    /// Source voltage at time t_rel since the pulse start.
    double value(double t_rel) const;
    /// Time after the pulse start when the source is effectively quiet.
    double effective_end() const;
    void validate() const;
};

/// Discretization and capture parameters of one simulation run.
struct SimConfig {
    double spatial_step = 0.01; ///< dz [m]
    double time_step = 0.0;     ///< dt [s]; 0 derives cfl_factor*dz/v
    double duration = 0.0;      ///< record length [s]; 0 derives a default
    double cfl_factor = 0.99;   ///< in (0,1]
    double noise_sigma = 0.0;   ///< per-capture noise [V]
    std::uint64_t rng_seed = 0;
};

/// Leap-frog staggered-grid solver for the lossless telegrapher system on
/// a Topology: voltage nodes and current cells interleave in space and
/// time, multi-way junctions keep a single node voltage with current
/// conservation, and RC loads enter the node update through the
/// trapezoidal rule.
class FdtdSim {
public:
    FdtdSim(const Topology& topology, const PulseSpec& pulse, const SimConfig& config,
            bool track_energy = false);
    ~FdtdSim();
    FdtdSim(FdtdSim&&) noexcept;
    FdtdSim& operator=(FdtdSim&&) noexcept;

    /// Runs the remaining steps, recording the port voltage each step.
    void run();

    const Waveform& port_waveform() const;

    double dt() const;
    double t0() const;
    /// Absolute time when the source has gone quiet.
    double pulse_end_time() const;

    /// Per-sample energy ledger; filled only when track_energy was set.
    /// stored = field energy on all lines plus load capacitors,
    /// dissipated = cumulative energy burnt in resistive loads and the
    /// source impedance.
    const std::vector<double>& stored_energy() const;
    const std::vector<double>& dissipated_energy() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Sampling grid of a simulation record: dt from the stability bound (or
/// the explicit time_step), a pre-trigger of two pulse widths before t0,
/// and a default duration of one out-and-back over every cable plus five
/// pulse widths.
struct RecordGrid {
    double dt = 0.0;
    double t0 = 0.0;
    std::size_t samples = 0;
};
RecordGrid derive_record_grid(const Topology& topology, const PulseSpec& pulse,
                              const SimConfig& config);

/// Noise-free port voltage trace over the full record.
Waveform simulate_tdr(const Topology& topology, const PulseSpec& pulse,
                      const SimConfig& config);

/// n noisy captures of the same underlying simulation; the noise-free run
/// is computed once and reused, per-capture seeds derive from
/// config.rng_seed and the capture index.
MeasurementSeries capture_series(const Topology& topology, const PulseSpec& pulse,
                                 const SimConfig& config, std::size_t n);

/// Deterministic per-capture seed derivation (splitmix64 of base + index).
std::uint64_t capture_seed(std::uint64_t base_seed, std::size_t index);

} // namespace tdr
