#include "tdrscan/topology.hpp"

#include "tdrscan/errors.hpp"
#include "tdrscan/si.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace tdr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Two positions closer than this are the same junction node.
constexpr double kPositionTol = 1e-9;

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

} // namespace

// ---------------------------------------------------------------------------
// LineParams
// ---------------------------------------------------------------------------

LineParams LineParams::from_z0_velocity(double z0, double velocity) {
    if (!finite_positive(z0)) throw ValidationError("characteristic impedance must be positive");
    if (!finite_positive(velocity)) throw ValidationError("propagation velocity must be positive");
    LineParams p;
    p.inductance_per_m = z0 / velocity;
    p.capacitance_per_m = 1.0 / (z0 * velocity);
    return p;
}

double LineParams::velocity() const {
    return 1.0 / std::sqrt(inductance_per_m * capacitance_per_m);
}

void LineParams::validate() const {
    if (!finite_positive(inductance_per_m)) throw ValidationError("L' must be positive");
    if (!finite_positive(capacitance_per_m)) throw ValidationError("C' must be positive");
    if (resistance_per_m != 0.0 || conductance_per_m != 0.0)
        throw ValidationError("lossless model requires R' = G' = 0");
    if (!finite_positive(characteristic_impedance(*this)))
        throw ValidationError("characteristic impedance must be finite and positive");
}

double characteristic_impedance(const LineParams& params) {
    return std::sqrt(params.inductance_per_m / params.capacitance_per_m);
}

// ---------------------------------------------------------------------------
// NodeLoad
// ---------------------------------------------------------------------------

NodeLoad NodeLoad::termination(double r) {
    return NodeLoad{Kind::termination_resistor, r, 0.0};
}

NodeLoad NodeLoad::transceiver(double r, double c) {
    return NodeLoad{Kind::transceiver, r, c};
}

NodeLoad NodeLoad::open_end() { return NodeLoad{Kind::open, kInf, 0.0}; }

NodeLoad NodeLoad::custom(double r, double c) { return NodeLoad{Kind::custom, r, c}; }

bool NodeLoad::has_finite_resistance() const {
    return std::isfinite(resistance) && resistance > 0.0;
}

void NodeLoad::validate() const {
    if (resistance <= 0.0) throw ValidationError("load resistance must be positive");
    if (capacitance < 0.0 || !std::isfinite(capacitance))
        throw ValidationError("load capacitance must be finite and non-negative");
    if (kind == Kind::termination_resistor) {
        if (capacitance != 0.0)
            throw ValidationError("termination resistor cannot carry capacitance");
        if (!has_finite_resistance())
            throw ValidationError("termination resistor must be finite");
    }
    if (kind == Kind::open && (has_finite_resistance() || capacitance != 0.0))
        throw ValidationError("open load cannot carry R or C");
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

double Topology::total_length() const {
    double sum = 0.0;
    for (const auto& s : main_segments) sum += s.length;
    return sum;
}

double Topology::velocity() const {
    if (main_segments.empty()) throw ValidationError("topology has no main segments");
    const bool at_far_end = measurement_position > total_length() / 2.0;
    return (at_far_end ? main_segments.back() : main_segments.front()).params.velocity();
}

const Stub* Topology::find_stub(std::string_view label) const {
    for (const auto& s : stubs)
        if (s.label == label) return &s;
    return nullptr;
}

void Topology::validate() const {
    if (main_segments.empty()) throw ValidationError("topology has no main segments");
    for (const auto& seg : main_segments) {
        if (!finite_positive(seg.length)) throw ValidationError("segment length must be positive");
        seg.params.validate();
    }
    const double length = total_length();

    for (const auto& load : end_loads) load.validate();

    std::vector<std::string_view> labels;
    for (const auto& stub : stubs) {
        if (stub.label.empty()) throw ValidationError("stub requires a label");
        if (std::find(labels.begin(), labels.end(), stub.label) != labels.end())
            throw ValidationError("duplicate stub label '" + stub.label + "'");
        labels.push_back(stub.label);
        if (stub.position <= 0.0 || stub.position >= length)
            throw ValidationError("stub '" + stub.label + "' attaches outside the bus (pos " +
                                  format_number(stub.position) + " m, bus " +
                                  format_number(length) + " m)");
        if (stub.length < 0.0 || !std::isfinite(stub.length))
            throw ValidationError("stub '" + stub.label + "' has a negative length");
        if (stub.length > 0.0) stub.params.validate();
        stub.load.validate();
    }

    const bool at_end = std::abs(measurement_position) <= kPositionTol ||
                        std::abs(measurement_position - length) <= kPositionTol;
    bool at_stub = false;
    for (const auto& stub : stubs)
        if (std::abs(measurement_position - stub.position) <= kPositionTol) at_stub = true;
    if (!at_end && !at_stub)
        throw ValidationError("measurement position " + format_number(measurement_position) +
                              " m is neither a bus end nor a stub junction");
}

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_kv(std::stringstream& ss, int line_no) {
    std::map<std::string, std::string> kv;
    std::string token;
    while (ss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= token.size())
            throw ParseError("expected key=value, got '" + token + "'", line_no);
        kv[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return kv;
}

std::string require(const std::map<std::string, std::string>& kv, const std::string& key,
                    const char* keyword, int line_no) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw ParseError(std::string(keyword) + " requires " + key + "=", line_no);
    return it->second;
}

double require_num(const std::map<std::string, std::string>& kv, const std::string& key,
                   const char* keyword, int line_no) {
    auto text = require(kv, key, keyword, line_no);
    auto v = try_parse_si(text);
    if (!v) throw ParseError("invalid number '" + text + "' for " + key, line_no);
    return *v;
}

void reject_unknown(const std::map<std::string, std::string>& kv,
                    std::initializer_list<const char*> allowed, const char* keyword,
                    int line_no) {
    for (const auto& [k, v] : kv) {
        (void)v;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return k == a; }) == allowed.end())
            throw ParseError(std::string("unknown key '") + k + "' for " + keyword, line_no);
    }
}

} // namespace

Topology parse_topology(std::string_view text) {
    Topology topo;
    bool have_line = false, have_bus = false, have_meas = false;
    int term_count = 0;
    LineParams params;
    double bus_length = 0.0;

    std::istringstream stream{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::stringstream ss(raw);
        std::string keyword;
        if (!(ss >> keyword)) continue;

        if (keyword == "line") {
            auto kv = parse_kv(ss, line_no);
            reject_unknown(kv, {"z0", "v"}, "line", line_no);
            const double z0 = require_num(kv, "z0", "line", line_no);
            const double v = require_num(kv, "v", "line", line_no);
            if (have_line) throw ParseError("duplicate line declaration", line_no);
            params = LineParams::from_z0_velocity(z0, v);
            have_line = true;
        } else if (keyword == "bus") {
            auto kv = parse_kv(ss, line_no);
            reject_unknown(kv, {"length"}, "bus", line_no);
            if (have_bus) throw ParseError("duplicate bus declaration", line_no);
            bus_length = require_num(kv, "length", "bus", line_no);
            have_bus = true;
        } else if (keyword == "term") {
            auto kv = parse_kv(ss, line_no);
            reject_unknown(kv, {"pos", "r"}, "term", line_no);
            const auto pos = require(kv, "pos", "term", line_no);
            const double r = require_num(kv, "r", "term", line_no);
            int end;
            if (pos == "0")
                end = 0;
            else if (pos == "end")
                end = 1;
            else
                throw ParseError("term pos must be 0 or end, got '" + pos + "'", line_no);
            if (++term_count > 2) throw ParseError("at most two terminations allowed", line_no);
            topo.end_loads[end] = NodeLoad::termination(r);
        } else if (keyword == "node") {
            auto kv = parse_kv(ss, line_no);
            reject_unknown(kv, {"label", "pos", "stub", "r", "c"}, "node", line_no);
            Stub stub;
            stub.label = require(kv, "label", "node", line_no);
            stub.position = require_num(kv, "pos", "node", line_no);
            stub.length = require_num(kv, "stub", "node", line_no);
            const double r = kv.count("r") ? parse_si(kv.at("r")) : 70e3;
            const double c = kv.count("c") ? parse_si(kv.at("c")) : 16e-12;
            stub.load = (kv.count("r") || kv.count("c")) ? NodeLoad::custom(r, c)
                                                         : NodeLoad::transceiver();
            topo.stubs.push_back(std::move(stub));
        } else if (keyword == "meas") {
            auto kv = parse_kv(ss, line_no);
            reject_unknown(kv, {"pos"}, "meas", line_no);
            if (have_meas) throw ParseError("duplicate meas declaration", line_no);
            topo.measurement_position = require_num(kv, "pos", "meas", line_no);
            have_meas = true;
        } else {
            throw ParseError("unknown keyword '" + keyword + "'", line_no);
        }
    }

    if (!have_line) throw ParseError("missing required line declaration");
    if (!have_bus) throw ParseError("missing required bus declaration");
    if (!have_meas) throw ParseError("missing required meas declaration");

    topo.main_segments.push_back(Segment{bus_length, params});
    for (auto& stub : topo.stubs) stub.params = params;

    topo.validate();
    return topo;
}

Topology parse_topology_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open topology file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_topology(buf.str());
}

std::string serialize_topology(const Topology& topology) {
    topology.validate();
    std::ostringstream out;
    const auto& params = topology.main_segments.front().params;
    out << "line z0=" << format_number(characteristic_impedance(params))
        << " v=" << format_number(params.velocity()) << "\n";
    out << "bus length=" << format_number(topology.total_length()) << "\n";
    for (int end = 0; end < 2; ++end) {
        const auto& load = topology.end_loads[end];
        if (load.has_finite_resistance())
            out << "term pos=" << (end == 0 ? "0" : "end")
                << " r=" << format_number(load.resistance) << "\n";
    }
    for (const auto& stub : topology.stubs) {
        out << "node label=" << stub.label << " pos=" << format_number(stub.position)
            << " stub=" << format_number(stub.length)
            << " r=" << format_number(stub.load.resistance)
            << " c=" << format_number(stub.load.capacitance) << "\n";
    }
    out << "meas pos=" << format_number(topology.measurement_position) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Lumped-circuit operations
// ---------------------------------------------------------------------------

double total_bus_resistance(const Topology& topology) {
    double conductance = 0.0;
    auto add = [&](const NodeLoad& load) {
        if (load.has_finite_resistance()) conductance += 1.0 / load.resistance;
    };
    for (const auto& load : topology.end_loads) add(load);
    for (const auto& stub : topology.stubs) add(stub.load);
    if (conductance == 0.0)
        throw ValidationError("all loads are open; total resistance is unbounded");
    return 1.0 / conductance;
}

Topology attach_device(const Topology& topology, double position, double stub_length,
                       const NodeLoad& load, std::string label) {
    Topology out = topology;
    Stub stub;
    stub.position = position;
    stub.length = stub_length;
    stub.params = topology.main_segments.front().params;
    stub.load = load;
    stub.label = std::move(label);
    out.stubs.push_back(std::move(stub));
    out.validate();
    return out;
}

Topology remove_device(const Topology& topology, std::string_view label) {
    Topology out = topology;
    const auto it = std::find_if(out.stubs.begin(), out.stubs.end(),
                                 [&](const Stub& s) { return s.label == label; });
    if (it == out.stubs.end())
        throw ValidationError("no stub labelled '" + std::string(label) + "'");
    out.stubs.erase(it);
    out.validate();
    return out;
}

} // namespace tdr
