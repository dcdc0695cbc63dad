#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace tdr {

/// Per-unit-length transmission-line parameters. The line model is
/// lossless: R' and G' exist for completeness but are pinned to zero.
struct LineParams {
    double inductance_per_m = 0.0;  ///< L' [H/m]
    double capacitance_per_m = 0.0; ///< C' [F/m]
    double resistance_per_m = 0.0;  ///< R' [ohm/m], 0 in the lossless model
    double conductance_per_m = 0.0; ///< G' [S/m], 0 in the lossless model

    /// Inverts Z0 = sqrt(L'/C') and v = 1/sqrt(L'C'):
    /// L' = Z0/v, C' = 1/(Z0*v).
    static LineParams from_z0_velocity(double z0, double velocity);

    double velocity() const; ///< 1/sqrt(L'C') [m/s]
    void validate() const;
};

/// sqrt(L'/C'), the real characteristic impedance of a lossless line. The
/// general lossy form sqrt((R' + jwL')/(G' + jwC')) reduces to this once
/// R' = G' = 0, which LineParams::validate pins.
double characteristic_impedance(const LineParams& params);

/// Lumped load at a bus end or stub end, modelled as a parallel RC.
struct NodeLoad {
    enum class Kind { termination_resistor, transceiver, open, custom };

    Kind kind = Kind::open;
    double resistance = std::numeric_limits<double>::infinity(); ///< [ohm]
    double capacitance = 0.0;                                    ///< [F]

    static NodeLoad termination(double r);
    /// Input impedance of a bus transceiver: 70 kOhm parallel 16 pF unless
    /// overridden.
    static NodeLoad transceiver(double r = 70e3, double c = 16e-12);
    static NodeLoad open_end();
    static NodeLoad custom(double r, double c);

    bool has_finite_resistance() const;
    void validate() const;
};

/// A branch line hanging off the main bus with a load at its far end.
/// length == 0 places the load directly on the bus node.
struct Stub {
    double position = 0.0; ///< attach point along the main bus [m]
    double length = 0.0;   ///< stub cable length [m]
    LineParams params;
    NodeLoad load;
    std::string label;
};

struct Segment {
    double length = 0.0; ///< [m]
    LineParams params;
};

/// The physical bus: an ordered chain of main segments, stub junctions,
/// two end loads and a measurement port. Immutable by convention: every
/// mutation-like operation returns a new value.
struct Topology {
    std::vector<Segment> main_segments;
    std::vector<Stub> stubs;
    std::array<NodeLoad, 2> end_loads = {NodeLoad::open_end(), NodeLoad::open_end()};
    double measurement_position = 0.0; ///< [m], a bus end or a stub junction

    double total_length() const; ///< main bus length [m]
    /// Propagation velocity of the segment params at the measurement end.
    double velocity() const;
    const Stub* find_stub(std::string_view label) const;

    /// Throws ValidationError when any structural invariant fails.
    void validate() const;
};

/// Parses the line-oriented topology text format:
///   line  z0=<ohm> v=<m/s>
///   bus   length=<m>
///   term  pos=<0|end> r=<ohm>
///   node  label=<text> pos=<m> stub=<m> [r=<ohm>] [c=<farad>]
///   meas  pos=<m>
/// '#' starts a comment; numbers accept SI suffixes. Unknown keywords are
/// a hard error. The result is validated before being returned.
Topology parse_topology(std::string_view text);
Topology parse_topology_file(const std::filesystem::path& path);

/// Emits the same format; parse(serialize(t)) reproduces t semantically.
std::string serialize_topology(const Topology& topology);

/// Parallel combination of every finite resistive load (terminations and
/// transceivers), neglecting line resistance. Throws when all loads are open.
double total_bus_resistance(const Topology& topology);

/// Returns a copy with one additional stub. Attaching at the position of
/// an existing stub is allowed; the junction is shared.
Topology attach_device(const Topology& topology, double position, double stub_length,
                       const NodeLoad& load, std::string label);

/// Returns a copy with the named stub removed.
Topology remove_device(const Topology& topology, std::string_view label);

} // namespace tdr
