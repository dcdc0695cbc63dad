#pragma once

#include "tdrscan/fdtd.hpp"
#include "tdrscan/topology.hpp"
#include "tdrscan/waveform.hpp"

namespace tdr {

/// Independent validation oracle for simulate_tdr: exact ray tracing of
/// the pulse through ideal-line junction scattering. At a junction of n
/// lines of common impedance Z0 the reflection seen from one line is
/// Gamma = (Z_eff - Z0)/(Z_eff + Z0) with Z_eff the parallel combination
/// of the other branches; RC loads reflect through their one-pole impulse
/// response, evaluated in closed form. Rays are traced through at most
/// max_order reflection events and summed at the port.
///
/// Scope: the measurement port must sit at a bus end, at most two stubs,
/// resistive bus-end loads, one shared (Z0, v) for every line, and a
/// resistive (non-ideal) source impedance. Out-of-scope topologies throw.
///
/// The config supplies the sampling grid only, derived exactly as
/// simulate_tdr derives it, so the two waveforms are directly comparable.
Waveform bounce_oracle(const Topology& topology, const PulseSpec& pulse, int max_order,
                       const SimConfig& config);

} // namespace tdr
