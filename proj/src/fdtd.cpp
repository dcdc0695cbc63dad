#include "tdrscan/fdtd.hpp"

#include "tdrscan/errors.hpp"
#include "tdrscan/si.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace tdr {

namespace {

constexpr double kSnapTolerance = 0.01; // fraction of the declared length

double gaussian_sigma(double fwhm) {
    return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

} // namespace

double PulseSpec::value(double t_rel) const {
    if (t_rel < 0.0) return 0.0;
    switch (shape) {
    case Shape::rectangular:
        return t_rel < width ? amplitude : 0.0;
    case Shape::gaussian: {
        const double sigma = gaussian_sigma(width);
        const double arg = (t_rel - 4.0 * sigma) / sigma;
        return amplitude * std::exp(-0.5 * arg * arg);
    }
    }
    return 0.0;
}

double PulseSpec::effective_end() const {
    return shape == Shape::rectangular ? width : 8.0 * gaussian_sigma(width);
}

void PulseSpec::validate() const {
    if (!(width > 0.0) || !std::isfinite(width))
        throw ValidationError("pulse width must be positive");
    if (amplitude == 0.0 || !std::isfinite(amplitude))
        throw ValidationError("pulse amplitude must be nonzero");
    if (source_impedance >= 0.0 && !std::isfinite(source_impedance))
        throw ValidationError("source impedance must be finite");
}

// ---------------------------------------------------------------------------
// Grid construction
// ---------------------------------------------------------------------------

namespace {

std::size_t snap_cells(double length, double dz, const std::string& what) {
    const auto cells = static_cast<std::size_t>(std::llround(length / dz));
    const double snapped = static_cast<double>(cells) * dz;
    if (cells == 0 || std::abs(snapped - length) > kSnapTolerance * length)
        throw SimError("cannot snap " + what + " (" + format_number(length) +
                       " m) to the " + format_number(dz) + " m grid within 1%");
    return cells;
}

struct StubLine {
    double i_coeff = 0.0;     ///< dt / (L' dz)
    double v_coeff = 0.0;     ///< dt / (C' dz)
    double c_scale = 0.0;     ///< C' dz, interior node capacitance
    double l_scale = 0.0;     ///< L' dz, cell inductance
    double far_cap = 0.0;     ///< far-end node capacitance incl. load
    std::vector<double> v, i;
};

struct Tap {
    const double* current;
    double sign;
};

/// A voltage node that needs more than the plain interior update: bus
/// ends, junctions and stub far ends. Update rule, trapezoidal in the
/// node conductance:
///   v' = a*v + b*(sum of tap currents) + b*g_src*vs(t)
struct SpecialNode {
    double* voltage = nullptr;
    double a = 0.0, b = 0.0;
    double c_node = 0.0; ///< lumped node capacitance [F]
    double g_node = 0.0; ///< load conductance [S]
    double g_src = 0.0;  ///< source conductance, port node only [S]
    std::vector<Tap> taps;
    std::vector<double*> mirrors; ///< stub v[0] aliases of this node
};

} // namespace

struct FdtdSim::Impl {
    double dt = 0.0;
    double t0 = 0.0;
    double pulse_end = 0.0;
    std::size_t total_steps = 0;
    std::size_t done_steps = 0;
    bool track_energy = false;
    bool hard_source = false;

    PulseSpec pulse;

    // main bus arrays
    std::vector<double> v_main, i_main;
    std::vector<double> i_coeff_main; ///< per current cell
    std::vector<double> c_node_main;  ///< per node capacitance, loads included
    std::vector<double> l_cell_main;  ///< per cell inductance * dz

    std::vector<StubLine> stubs;

    std::vector<SpecialNode> specials;
    std::vector<double> special_olds;
    double* port_voltage = nullptr;

    Waveform record;

    // energy audit state (track_energy only)
    std::vector<double> stored, dissipated;
    double dissipated_acc = 0.0;
    std::vector<double> v_main_prev;
    std::vector<std::vector<double>> v_stub_prev;

    void build(const Topology& topology, const SimConfig& config);
    void step();
    double stored_energy_now() const;
};

void FdtdSim::Impl::build(const Topology& topology, const SimConfig& config) {
    topology.validate();
    pulse.validate();

    const double dz = config.spatial_step;
    const RecordGrid grid = derive_record_grid(topology, pulse, config);
    dt = grid.dt;
    t0 = grid.t0;
    pulse_end = t0 + pulse.effective_end();
    total_steps = grid.samples - 1;

    // main line cells; multiple segments concatenate on one grid
    std::vector<std::size_t> seg_cells;
    std::size_t n_cells = 0;
    for (std::size_t s = 0; s < topology.main_segments.size(); ++s) {
        const auto cells = snap_cells(topology.main_segments[s].length, dz,
                                      "main segment " + std::to_string(s));
        seg_cells.push_back(cells);
        n_cells += cells;
    }

    v_main.assign(n_cells + 1, 0.0);
    i_main.assign(n_cells, 0.0);
    i_coeff_main.assign(n_cells, 0.0);
    c_node_main.assign(n_cells + 1, 0.0);
    l_cell_main.assign(n_cells, 0.0);
    {
        std::size_t at = 0;
        for (std::size_t s = 0; s < seg_cells.size(); ++s) {
            const auto& p = topology.main_segments[s].params;
            for (std::size_t k = 0; k < seg_cells[s]; ++k, ++at) {
                i_coeff_main[at] = dt / (p.inductance_per_m * dz);
                l_cell_main[at] = p.inductance_per_m * dz;
                c_node_main[at] += p.capacitance_per_m * dz / 2.0;
                c_node_main[at + 1] += p.capacitance_per_m * dz / 2.0;
            }
        }
    }

    // group stubs by junction node; coincident stubs share one node
    std::map<std::size_t, std::vector<const Stub*>> junctions;
    for (const auto& stub : topology.stubs) {
        const auto node = static_cast<std::size_t>(std::llround(stub.position / dz));
        if (node == 0 || node >= n_cells)
            throw SimError("stub '" + stub.label + "' snaps onto a bus end");
        junctions[node].push_back(&stub);
    }

    const auto port_node = static_cast<std::size_t>(
        std::llround(topology.measurement_position / dz));
    if (port_node > n_cells)
        throw SimError("measurement position beyond the bus grid");
    const bool port_at_end = port_node == 0 || port_node == n_cells;
    if (!port_at_end && !junctions.count(port_node))
        throw SimError("measurement position must snap to a bus end or a stub junction");
    port_voltage = &v_main[port_node];

    const double port_z0 = characteristic_impedance(
        (port_node == n_cells ? topology.main_segments.back() : topology.main_segments.front())
            .params);
    const double rs = pulse.source_impedance < 0.0 ? port_z0 : pulse.source_impedance;
    hard_source = rs == 0.0;

    // stub lines (length > 0); zero-length stub loads merge into junctions
    std::vector<std::pair<const Stub*, std::size_t>> stub_lines; // source, junction node
    for (const auto& [node, list] : junctions) {
        for (const Stub* stub : list) {
            if (stub->length <= 0.0) continue;
            StubLine line;
            const auto cells = snap_cells(stub->length, dz, "stub '" + stub->label + "'");
            line.v.assign(cells + 1, 0.0);
            line.i.assign(cells, 0.0);
            line.i_coeff = dt / (stub->params.inductance_per_m * dz);
            line.v_coeff = dt / (stub->params.capacitance_per_m * dz);
            line.c_scale = stub->params.capacitance_per_m * dz;
            line.l_scale = stub->params.inductance_per_m * dz;
            line.far_cap = line.c_scale / 2.0 + stub->load.capacitance;
            stubs.push_back(std::move(line));
            stub_lines.emplace_back(stub, node);
        }
    }

    const auto finish_node = [&](SpecialNode& n) {
        const double g_half = (n.g_node + n.g_src) / 2.0;
        const double c_dt = n.c_node / dt;
        n.a = (c_dt - g_half) / (c_dt + g_half);
        n.b = 1.0 / (c_dt + g_half);
    };
    const auto load_conductance = [](const NodeLoad& load) {
        return load.has_finite_resistance() ? 1.0 / load.resistance : 0.0;
    };

    // bus ends
    for (int end = 0; end < 2; ++end) {
        const std::size_t node = end == 0 ? 0 : n_cells;
        SpecialNode sn;
        sn.voltage = &v_main[node];
        sn.c_node = c_node_main[node] + topology.end_loads[end].capacitance;
        sn.g_node = load_conductance(topology.end_loads[end]);
        if (node == port_node && !hard_source) sn.g_src = 1.0 / rs;
        if (end == 0)
            sn.taps.push_back({&i_main[0], -1.0});
        else
            sn.taps.push_back({&i_main[n_cells - 1], +1.0});
        finish_node(sn);
        c_node_main[node] = sn.c_node;
        specials.push_back(std::move(sn));
    }

    // junctions
    for (const auto& [node, list] : junctions) {
        SpecialNode sn;
        sn.voltage = &v_main[node];
        sn.c_node = c_node_main[node];
        sn.taps.push_back({&i_main[node - 1], +1.0});
        sn.taps.push_back({&i_main[node], -1.0});
        for (const Stub* stub : list) {
            if (stub->length <= 0.0) {
                sn.c_node += stub->load.capacitance;
                sn.g_node += load_conductance(stub->load);
            }
        }
        for (std::size_t s = 0; s < stub_lines.size(); ++s) {
            if (stub_lines[s].second != node) continue;
            sn.c_node += stubs[s].c_scale / 2.0;
            sn.taps.push_back({&stubs[s].i[0], -1.0});
            sn.mirrors.push_back(&stubs[s].v[0]);
        }
        if (node == port_node && !hard_source) sn.g_src = 1.0 / rs;
        finish_node(sn);
        c_node_main[node] = sn.c_node;
        specials.push_back(std::move(sn));
    }

    // stub far ends
    for (std::size_t s = 0; s < stub_lines.size(); ++s) {
        const Stub* source = stub_lines[s].first;
        StubLine& line = stubs[s];
        SpecialNode sn;
        sn.voltage = &line.v[line.v.size() - 1];
        sn.c_node = line.far_cap;
        sn.g_node = load_conductance(source->load);
        sn.taps.push_back({&line.i[line.i.size() - 1], +1.0});
        finish_node(sn);
        specials.push_back(std::move(sn));
    }

    special_olds.assign(specials.size(), 0.0);

    record.t0 = t0;
    record.dt = dt;
    record.samples.clear();
    record.samples.reserve(total_steps + 1);

    if (track_energy) {
        stored.reserve(total_steps + 1);
        dissipated.reserve(total_steps + 1);
        v_main_prev = v_main;
        v_stub_prev.resize(stubs.size());
        for (std::size_t s = 0; s < stubs.size(); ++s) v_stub_prev[s] = stubs[s].v;
    }
}

double FdtdSim::Impl::stored_energy_now() const {
    // Dual product form: sum L i^2 / 2 at the current half step plus
    // sum C v(n) v(n+1) / 2. Exactly conserved on lossless interiors.
    double e = 0.0;
    for (std::size_t j = 0; j < v_main.size(); ++j)
        e += 0.5 * c_node_main[j] * v_main[j] * v_main_prev[j];
    for (std::size_t k = 0; k < i_main.size(); ++k)
        e += 0.5 * l_cell_main[k] * i_main[k] * i_main[k];
    for (std::size_t s = 0; s < stubs.size(); ++s) {
        const auto& line = stubs[s];
        const std::size_t last = line.v.size() - 1;
        for (std::size_t j = 1; j <= last; ++j) {
            const double c = (j == last) ? line.far_cap : line.c_scale;
            e += 0.5 * c * line.v[j] * v_stub_prev[s][j];
        }
        for (std::size_t k = 0; k < line.i.size(); ++k)
            e += 0.5 * line.l_scale * line.i[k] * line.i[k];
    }
    return e;
}

void FdtdSim::Impl::step() {
    const double t_mid = (static_cast<double>(done_steps) + 0.5) * dt;
    const double vs = pulse.value(t_mid - t0);

    // current half-step
    for (std::size_t k = 0; k < i_main.size(); ++k)
        i_main[k] -= i_coeff_main[k] * (v_main[k + 1] - v_main[k]);
    for (auto& line : stubs)
        for (std::size_t k = 0; k < line.i.size(); ++k)
            line.i[k] -= line.i_coeff * (line.v[k + 1] - line.v[k]);

    if (track_energy) {
        v_main_prev = v_main;
        for (std::size_t s = 0; s < stubs.size(); ++s) v_stub_prev[s] = stubs[s].v;
    }

    // voltage full step: plain interior sweep, then specials from saved olds
    for (std::size_t s = 0; s < specials.size(); ++s)
        special_olds[s] = *specials[s].voltage;

    for (std::size_t j = 1; j + 1 < v_main.size(); ++j)
        v_main[j] -= (dt / c_node_main[j]) * (i_main[j] - i_main[j - 1]);
    for (auto& line : stubs)
        for (std::size_t j = 1; j + 1 < line.v.size(); ++j)
            line.v[j] -= line.v_coeff * (line.i[j] - line.i[j - 1]);

    for (std::size_t s = 0; s < specials.size(); ++s) {
        SpecialNode& sn = specials[s];
        double i_in = 0.0;
        for (const auto& tap : sn.taps) i_in += tap.sign * (*tap.current);
        const double v_new = sn.a * special_olds[s] + sn.b * (i_in + sn.g_src * vs);
        *sn.voltage = v_new;
        for (double* m : sn.mirrors) *m = v_new;
        if (track_energy) {
            const double v_mid = 0.5 * (v_new + special_olds[s]);
            dissipated_acc += dt * sn.g_node * v_mid * v_mid;
            dissipated_acc += dt * sn.g_src * (v_mid - vs) * (v_mid - vs);
        }
    }

    if (hard_source) {
        const double forced = pulse.value((static_cast<double>(done_steps) + 1.0) * dt - t0);
        *port_voltage = forced;
        for (auto& sn : specials)
            if (sn.voltage == port_voltage)
                for (double* m : sn.mirrors) *m = forced;
    }

    ++done_steps;
}

// ---------------------------------------------------------------------------
// FdtdSim facade
// ---------------------------------------------------------------------------

FdtdSim::FdtdSim(const Topology& topology, const PulseSpec& pulse, const SimConfig& config,
                 bool track_energy)
    : impl_(std::make_unique<Impl>()) {
    impl_->pulse = pulse;
    impl_->track_energy = track_energy;
    impl_->build(topology, config);
}

FdtdSim::~FdtdSim() = default;
FdtdSim::FdtdSim(FdtdSim&&) noexcept = default;
FdtdSim& FdtdSim::operator=(FdtdSim&&) noexcept = default;

void FdtdSim::run() {
    Impl& im = *impl_;
    auto snapshot = [&] {
        im.record.samples.push_back(*im.port_voltage);
        if (im.track_energy) {
            im.stored.push_back(im.stored_energy_now());
            im.dissipated.push_back(im.dissipated_acc);
        }
    };
    if (im.done_steps == 0) snapshot(); // state at t = 0
    while (im.done_steps < im.total_steps) {
        im.step();
        snapshot();
    }
}

const Waveform& FdtdSim::port_waveform() const { return impl_->record; }
double FdtdSim::dt() const { return impl_->dt; }
double FdtdSim::t0() const { return impl_->t0; }
double FdtdSim::pulse_end_time() const { return impl_->pulse_end; }
const std::vector<double>& FdtdSim::stored_energy() const { return impl_->stored; }
const std::vector<double>& FdtdSim::dissipated_energy() const { return impl_->dissipated; }

// ---------------------------------------------------------------------------
// Convenience entry points
// ---------------------------------------------------------------------------

RecordGrid derive_record_grid(const Topology& topology, const PulseSpec& pulse,
                              const SimConfig& config) {
    const double dz = config.spatial_step;
    if (!(dz > 0.0)) throw SimError("spatial step must be positive");
    if (!(config.cfl_factor > 0.0) || config.cfl_factor > 1.0)
        throw SimError("cfl factor must lie in (0, 1]");

    double v_max = 0.0, v_min = std::numeric_limits<double>::infinity();
    for (const auto& seg : topology.main_segments) {
        v_max = std::max(v_max, seg.params.velocity());
        v_min = std::min(v_min, seg.params.velocity());
    }
    for (const auto& stub : topology.stubs) {
        if (stub.length <= 0.0) continue;
        v_max = std::max(v_max, stub.params.velocity());
        v_min = std::min(v_min, stub.params.velocity());
    }

    RecordGrid grid;
    const double dt_limit = config.cfl_factor * dz / v_max;
    grid.dt = config.time_step > 0.0 ? config.time_step : dt_limit;
    if (grid.dt > dt_limit * (1.0 + 1e-12))
        throw SimError("time step " + format_number(grid.dt) +
                       " s violates the stability bound " + format_number(dt_limit) + " s");

    grid.t0 = std::max(1.0, std::round(2.0 * pulse.width / grid.dt)) * grid.dt;
    double cable = topology.total_length();
    for (const auto& stub : topology.stubs) cable += stub.length;
    const double duration = config.duration > 0.0
                                ? config.duration
                                : grid.t0 + 2.0 * cable / v_min + 5.0 * pulse.width;
    grid.samples = static_cast<std::size_t>(std::ceil(duration / grid.dt)) + 1;
    return grid;
}

Waveform simulate_tdr(const Topology& topology, const PulseSpec& pulse,
                      const SimConfig& config) {
    FdtdSim sim(topology, pulse, config);
    sim.run();
    return sim.port_waveform();
}

std::uint64_t capture_seed(std::uint64_t base_seed, std::size_t index) {
    std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

MeasurementSeries capture_series(const Topology& topology, const PulseSpec& pulse,
                                 const SimConfig& config, std::size_t n) {
    if (n == 0) throw ValidationError("capture count must be at least 1");
    const Waveform clean = simulate_tdr(topology, pulse, config);
    MeasurementSeries series;
    series.captures.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        series.captures.push_back(
            add_noise(clean, config.noise_sigma, capture_seed(config.rng_seed, i)));
    return series;
}

} // namespace tdr
