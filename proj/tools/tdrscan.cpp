// Command-line front end: topology files in, waveform/series CSV, reference
// models, detection reports and method benchmarks out.

#include "tdrscan/analysis.hpp"
#include "tdrscan/bounce.hpp"
#include "tdrscan/detector.hpp"
#include "tdrscan/errors.hpp"
#include "tdrscan/fdtd.hpp"
#include "tdrscan/si.hpp"
#include "tdrscan/topology.hpp"
#include "tdrscan/waveform.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tdr;

namespace {

struct RunManifest {
    std::string command;
    fs::path topology_path;
    fs::path out_path;
    fs::path series_path;
    fs::path model_path;
    fs::path plot_path;
    std::map<std::string, std::string> overrides; // --config key=value
    std::uint64_t seed = 0;
};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string file_hash_hex(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    char out[32];
    std::snprintf(out, sizeof(out), "%016llx",
                  static_cast<unsigned long long>(fnv1a(buf.str())));
    return out;
}

std::string overrides_text(const RunManifest& m) {
    std::string text;
    for (const auto& [k, v] : m.overrides) {
        if (!text.empty()) text += ' ';
        text += k + '=' + v;
    }
    return text.empty() ? "defaults" : text;
}

std::vector<std::string> header_comments(const RunManifest& m) {
    std::vector<std::string> lines;
    lines.push_back("tdrscan " + m.command);
    lines.push_back("seed=" + std::to_string(m.seed));
    lines.push_back("config=" + overrides_text(m));
    if (!m.topology_path.empty())
        lines.push_back("topology_hash=" + file_hash_hex(m.topology_path));
    return lines;
}

void parse_config_pairs(const std::vector<std::string>& pairs, RunManifest& m) {
    for (const auto& p : pairs) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ParseError("--config expects key=value, got '" + p + "'");
        m.overrides[p.substr(0, eq)] = p.substr(eq + 1);
    }
}

Taper parse_taper(const std::string& name) {
    if (name == "hann") return Taper::hann;
    if (name == "rect" || name == "rectangular") return Taper::rectangular;
    throw ParseError("unknown taper '" + name + "'");
}

/// Applies --config overrides onto the simulation and detection settings.
/// Unknown keys are a hard error.
void apply_overrides(const RunManifest& m, SimConfig& sim, CalibrationConfig& cal) {
    for (const auto& [key, value] : m.overrides) {
        if (key == "dz")
            sim.spatial_step = parse_si(value);
        else if (key == "dt")
            sim.time_step = parse_si(value);
        else if (key == "duration")
            sim.duration = parse_si(value);
        else if (key == "cfl")
            sim.cfl_factor = parse_si(value);
        else if (key == "n_reference")
            cal.n_reference = static_cast<std::size_t>(parse_si(value));
        else if (key == "n_average")
            cal.n_average = static_cast<std::size_t>(parse_si(value));
        else if (key == "window_length")
            cal.window_length = static_cast<std::size_t>(parse_si(value));
        else if (key == "segment_len")
            cal.coherence.welch.segment_len = static_cast<std::size_t>(parse_si(value));
        else if (key == "overlap")
            cal.coherence.welch.overlap = parse_si(value);
        else if (key == "taper")
            cal.coherence.welch.taper = parse_taper(value);
        else if (key == "tau_p")
            cal.coherence.peak_threshold = parse_si(value);
        else if (key == "beta")
            cal.noise_floor_beta = parse_si(value);
        else if (key == "velocity")
            cal.velocity = parse_si(value);
        else if (key == "k_sigma")
            cal.k_sigma = parse_si(value);
        else if (key == "hold")
            cal.onset_hold = static_cast<std::size_t>(parse_si(value));
        else if (key == "gate")
            cal.activity_gate = parse_si(value);
        else if (key == "bit_time")
            cal.can_bit_time = parse_si(value);
        else if (key == "rqcc_order")
            cal.rqcc_order = parse_si(value);
        else
            throw ParseError("unknown --config key '" + key + "'");
    }
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::exists(path))
        throw ParseError(std::string(what) + " file '" + path.string() + "' not found");
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Reference-model file: '#' key=value parameter block followed by the
// averaged reference waveform as ordinary waveform CSV.
// ---------------------------------------------------------------------------

struct StoredModel {
    ReferenceModel model;
    double velocity = 2e8;
    std::size_t n_average = 30;
};

void write_model_file(const fs::path& path, const StoredModel& sm, const RunManifest& m) {
    auto comments = header_comments(m);
    comments.push_back("model_threshold=" + format_number(sm.model.threshold));
    comments.push_back("model_noise_sigma=" + format_number(sm.model.noise_sigma_estimate));
    comments.push_back("model_activity_gate=" + format_number(sm.model.activity_gate));
    comments.push_back("model_n_reference=" + std::to_string(sm.model.n_reference_used));
    comments.push_back("model_n_average=" + std::to_string(sm.n_average));
    comments.push_back("model_velocity=" + format_number(sm.velocity));
    std::string baselines;
    for (double k : sm.model.baseline_scores) {
        if (!baselines.empty()) baselines += ',';
        baselines += format_number(k);
    }
    comments.push_back("model_baseline_scores=" + baselines);
    auto out = open_output(path);
    write_waveform_csv(out, sm.model.reference_waveform, comments);
}

StoredModel read_model_file(const fs::path& path) {
    require_file(path, "model");
    std::ifstream in(path);
    StoredModel sm;
    std::string line;
    std::ostringstream body;
    auto value_of = [](const std::string& l, const std::string& key)
        -> std::optional<std::string> {
        const std::string tag = "# " + key + "=";
        if (l.rfind(tag, 0) == 0) return l.substr(tag.size());
        return std::nullopt;
    };
    while (std::getline(in, line)) {
        if (auto v = value_of(line, "model_threshold"))
            sm.model.threshold = parse_si(*v);
        else if (auto v2 = value_of(line, "model_noise_sigma"))
            sm.model.noise_sigma_estimate = parse_si(*v2);
        else if (auto v3 = value_of(line, "model_activity_gate"))
            sm.model.activity_gate = parse_si(*v3);
        else if (auto v4 = value_of(line, "model_n_reference"))
            sm.model.n_reference_used = static_cast<std::size_t>(parse_si(*v4));
        else if (auto v5 = value_of(line, "model_n_average"))
            sm.n_average = static_cast<std::size_t>(parse_si(*v5));
        else if (auto v6 = value_of(line, "model_velocity"))
            sm.velocity = parse_si(*v6);
        else if (auto v7 = value_of(line, "model_baseline_scores")) {
            std::stringstream ss(*v7);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) sm.model.baseline_scores.push_back(parse_si(item));
        }
        body << line << '\n';
    }
    std::istringstream csv(body.str());
    sm.model.reference_waveform = read_waveform_csv(csv);
    if (sm.model.n_reference_used == 0)
        throw ParseError("'" + path.string() + "' is not a reference model file");
    return sm;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct PulseFlags {
    std::string width = "3ns";
    std::string amplitude = "1";
    std::string shape = "rect";
    std::string source_impedance = "match";

    PulseSpec build() const {
        PulseSpec p;
        p.width = parse_si(width);
        p.amplitude = parse_si(amplitude);
        if (shape == "rect" || shape == "rectangular")
            p.shape = PulseSpec::Shape::rectangular;
        else if (shape == "gauss" || shape == "gaussian")
            p.shape = PulseSpec::Shape::gaussian;
        else
            throw ParseError("unknown pulse shape '" + shape + "'");
        p.source_impedance = source_impedance == "match" ? -1.0
                                                         : parse_si(source_impedance);
        return p;
    }
};

void add_pulse_flags(CLI::App* cmd, PulseFlags& flags) {
    cmd->add_option("--pulse-width", flags.width, "probe pulse width (SI, e.g. 3ns)");
    cmd->add_option("--pulse-amplitude", flags.amplitude, "source amplitude in volts");
    cmd->add_option("--pulse-shape", flags.shape, "rect|gauss");
    cmd->add_option("--source-impedance", flags.source_impedance,
                    "ohms, or 'match' for the line impedance");
}

int cmd_simulate(const RunManifest& m, const PulseFlags& pulse_flags, std::size_t n,
                 const std::string& noise, const fs::path& switch_topology,
                 std::size_t switch_at) {
    require_file(m.topology_path, "topology");
    const Topology topo = parse_topology_file(m.topology_path);
    const PulseSpec pulse = pulse_flags.build();
    SimConfig sim;
    CalibrationConfig unused;
    apply_overrides(m, sim, unused);
    sim.noise_sigma = parse_si(noise);
    sim.rng_seed = m.seed;

    MeasurementSeries series;
    if (!switch_topology.empty()) {
        require_file(switch_topology, "topology");
        const Topology after = parse_topology_file(switch_topology);
        if (sim.duration <= 0.0) {
            // pin one grid covering whichever network needs the longer record
            const RecordGrid a = derive_record_grid(topo, pulse, sim);
            const RecordGrid b = derive_record_grid(after, pulse, sim);
            sim.duration =
                (static_cast<double>(std::max(a.samples, b.samples)) - 1.5) * a.dt;
        }
        if (switch_at > n) throw ParseError("--switch-at beyond the capture count");
        const Waveform before_clean = simulate_tdr(topo, pulse, sim);
        const Waveform after_clean = simulate_tdr(after, pulse, sim);
        for (std::size_t i = 0; i < n; ++i)
            series.captures.push_back(add_noise(i < switch_at ? before_clean : after_clean,
                                                sim.noise_sigma,
                                                capture_seed(sim.rng_seed, i)));
    } else {
        series = capture_series(topo, pulse, sim, n);
    }

    const auto comments = header_comments(m);
    if (n == 1)
        write_waveform_csv_file(m.out_path, series.captures.front(), comments);
    else
        write_series_csv_file(m.out_path, series, comments);

    // sidecar run summary
    auto side = open_output(m.out_path.string() + ".run.txt");
    side << "command: simulate\n"
         << "topology: " << m.topology_path.string() << "\n"
         << "topology_hash: " << file_hash_hex(m.topology_path) << "\n"
         << "seed: " << m.seed << "\n"
         << "captures: " << n << "\n"
         << "noise_sigma_v: " << format_number(sim.noise_sigma) << "\n"
         << "pulse: " << pulse_flags.shape << " width=" << pulse_flags.width
         << " amplitude=" << pulse_flags.amplitude << "\n"
         << "config: " << overrides_text(m) << "\n";
    std::cout << "wrote " << m.out_path.string() << " (" << n << " capture"
              << (n == 1 ? "" : "s") << ")\n";
    return 0;
}

int cmd_calibrate(const RunManifest& m, const std::string& threshold_spec) {
    require_file(m.series_path, "series");
    MeasurementSeries series = read_series_csv_file(m.series_path);

    SimConfig sim;
    CalibrationConfig cal;
    apply_overrides(m, sim, cal);
    if (!threshold_spec.empty()) {
        const auto colon = threshold_spec.find(':');
        const std::string kind = threshold_spec.substr(0, colon);
        const double value =
            colon == std::string::npos ? 0.0 : parse_si(threshold_spec.substr(colon + 1));
        if (kind == "fixed")
            cal.policy = ThresholdPolicy::fixed;
        else if (kind == "max-plus")
            cal.policy = ThresholdPolicy::baseline_max_plus;
        else
            throw ParseError("--threshold expects fixed:<v> or max-plus:<margin>");
        cal.policy_value = value;
    }

    StoredModel sm;
    sm.model = calibrate(series, cal);
    sm.velocity = cal.velocity;
    sm.n_average = cal.n_average;
    write_model_file(m.out_path, sm, m);
    std::cout << "calibrated on " << series.size() << " captures: threshold "
              << format_number(sm.model.threshold) << ", noise sigma "
              << format_number(sm.model.noise_sigma_estimate) << " V, "
              << sm.model.baseline_scores.size() << " baseline batches\n";
    return 0;
}

int cmd_detect(const RunManifest& m) {
    const StoredModel sm = read_model_file(m.model_path);
    require_file(m.series_path, "series");
    const MeasurementSeries series = read_series_csv_file(m.series_path);

    SimConfig sim;
    CalibrationConfig cal;
    cal.n_average = sm.n_average;
    cal.velocity = sm.velocity;
    apply_overrides(m, sim, cal);
    cal.policy = ThresholdPolicy::fixed;
    cal.policy_value = sm.model.threshold;

    if (series.size() < cal.n_average)
        throw ValidationError("series holds fewer captures than one averaging batch");

    const std::size_t n_batches = series.size() / cal.n_average;
    std::vector<DetectionReport> reports;
    for (std::size_t b = 0; b < n_batches; ++b) {
        MeasurementSeries batch;
        batch.captures.assign(
            series.captures.begin() + static_cast<std::ptrdiff_t>(b * cal.n_average),
            series.captures.begin() + static_cast<std::ptrdiff_t>((b + 1) * cal.n_average));
        reports.push_back(detect(sm.model, batch, cal));
    }

    if (!m.plot_path.empty()) {
        auto plot = open_output(m.plot_path);
        for (const auto& c : header_comments(m)) plot << "# " << c << "\n";
        plot << "batch_index,k_score,threshold,alien\n";
        for (std::size_t b = 0; b < reports.size(); ++b)
            plot << b << ',' << format_number(reports[b].k_score()) << ','
                 << format_number(sm.model.threshold) << ','
                 << (reports[b].alien_present ? 1 : 0) << "\n";
    }

    bool any_alien = false;
    for (const auto& r : reports) any_alien |= r.alien_present;

    auto out = open_output(m.out_path);
    for (const auto& c : header_comments(m)) out << "# " << c << "\n";
    out << "batches: " << reports.size() << "\n"
        << "alien_detected: " << (any_alien ? "true" : "false") << "\n\n";
    out << DetectionReport::csv_header() << "\n";
    for (std::size_t b = 0; b < reports.size(); ++b)
        out << reports[b].to_csv_row(static_cast<double>(b)) << "\n";
    if (!reports.empty()) {
        out << "\nlast batch:\n" << reports.back().to_text(sm.model.threshold);
    }

    std::cout << (any_alien ? "alien device detected" : "no alien device") << " ("
              << reports.size() << " batches)\n";
    return 0;
}

int cmd_locate(const RunManifest& m) {
    const StoredModel sm = read_model_file(m.model_path);
    require_file(m.series_path, "series");
    const MeasurementSeries series = read_series_csv_file(m.series_path);

    SimConfig sim;
    CalibrationConfig cal;
    cal.velocity = sm.velocity;
    apply_overrides(m, sim, cal);

    const Waveform act = average(series);
    if (!act.same_grid(sm.model.reference_waveform))
        throw ValidationError("series sampling does not match the reference model");
    const double sigma_diff =
        sm.model.noise_sigma_estimate *
        std::sqrt(1.0 / static_cast<double>(sm.model.n_reference_used) +
                  1.0 / static_cast<double>(series.size()));
    const auto distance = locate_change(sm.model.reference_waveform, act, cal.velocity,
                                        sigma_diff, cal.k_sigma, cal.onset_hold);
    if (distance) {
        const double onset = 2.0 * *distance / cal.velocity;
        std::cout << "distance_m: " << format_number(*distance) << "\n"
                  << "onset_after_injection_s: " << format_number(onset) << "\n";
    } else {
        std::cout << "no change localized\n";
    }
    if (!m.out_path.empty()) {
        auto out = open_output(m.out_path);
        for (const auto& c : header_comments(m)) out << "# " << c << "\n";
        if (distance)
            out << "distance_m: " << format_number(*distance) << "\n";
        else
            out << "distance_m: none\n";
    }
    return 0;
}

int cmd_bench(const RunManifest& m, const PulseFlags& pulse_flags,
              std::vector<std::string> labels, std::size_t trials,
              const std::string& noise, const fs::path& csv_path) {
    require_file(m.topology_path, "topology");
    const Topology topo = parse_topology_file(m.topology_path);
    if (labels.empty())
        for (const auto& stub : topo.stubs) labels.push_back(stub.label);

    BenchConfig bench;
    bench.pulse = pulse_flags.build();
    apply_overrides(m, bench.sim, bench.calibration);
    bench.sim.noise_sigma = parse_si(noise);
    bench.sim.rng_seed = m.seed;

    const BenchmarkTable table = benchmark_methods(topo, labels, trials, bench);
    std::cout << table.to_text();
    if (!m.out_path.empty()) {
        auto out = open_output(m.out_path);
        for (const auto& c : header_comments(m)) out << "# " << c << "\n";
        out << table.to_text();
    }
    if (!csv_path.empty()) {
        auto out = open_output(csv_path);
        for (const auto& c : header_comments(m)) out << "# " << c << "\n";
        out << table.to_csv();
    }
    return 0;
}

int cmd_resistance(const RunManifest& m, const std::string& added) {
    require_file(m.topology_path, "topology");
    const Topology topo = parse_topology_file(m.topology_path);
    const double r_total = total_bus_resistance(topo);
    const Topology with_extra = attach_device(
        topo, topo.total_length() / 2.0, 0.0,
        NodeLoad::transceiver(parse_si(added), 0.0), "__hypothetical__");
    const double delta = r_total - total_bus_resistance(with_extra);
    std::cout << "total_bus_resistance_ohm: " << format_number(r_total) << "\n"
              << "delta_r_added_transceiver_ohm: " << format_number(delta) << "\n";
    if (!m.out_path.empty()) {
        auto out = open_output(m.out_path);
        for (const auto& c : header_comments(m)) out << "# " << c << "\n";
        out << "total_bus_resistance_ohm: " << format_number(r_total) << "\n"
            << "delta_r_added_transceiver_ohm: " << format_number(delta) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TDR-based scanner for physically attached bus devices"};
    app.require_subcommand(1);

    RunManifest manifest;
    std::vector<std::string> config_pairs;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", manifest.seed, "RNG seed recorded in every output");
        cmd->add_option("--config", config_pairs, "KEY=VALUE override (repeatable)");
    };

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run the TDR simulation");
    PulseFlags pulse_flags;
    std::size_t n_captures = 1;
    std::string noise = "0";
    fs::path switch_topology;
    std::size_t switch_at = 0;
    simulate->add_option("--topology", manifest.topology_path, "topology file")->required();
    simulate->add_option("--out", manifest.out_path, "output CSV path")->required();
    simulate->add_option("--n", n_captures, "number of captures");
    simulate->add_option("--noise", noise, "per-capture noise sigma in volts (SI)");
    simulate->add_option("--switch-topology", switch_topology,
                         "topology taking over mid-series");
    simulate->add_option("--switch-at", switch_at,
                         "capture index where the switch topology takes over");
    add_pulse_flags(simulate, pulse_flags);
    add_common(simulate);

    // calibrate
    auto* calibrate_cmd = app.add_subcommand("calibrate", "build a reference model");
    std::string threshold_spec;
    calibrate_cmd->add_option("--series", manifest.series_path, "reference series CSV")
        ->required();
    calibrate_cmd->add_option("--out", manifest.out_path, "model file path")->required();
    calibrate_cmd->add_option("--threshold", threshold_spec,
                              "fixed:<value> or max-plus:<margin>");
    add_common(calibrate_cmd);

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "scan a series against a model");
    detect_cmd->add_option("--model", manifest.model_path, "reference model file")
        ->required();
    detect_cmd->add_option("--series", manifest.series_path, "actual series CSV")
        ->required();
    detect_cmd->add_option("--out", manifest.out_path, "report path")->required();
    detect_cmd->add_option("--plot", manifest.plot_path, "per-batch K plot CSV");
    add_common(detect_cmd);

    // locate
    auto* locate_cmd = app.add_subcommand("locate", "estimate the distance to a change");
    locate_cmd->add_option("--model", manifest.model_path, "reference model file")
        ->required();
    locate_cmd->add_option("--series", manifest.series_path, "positive-detection series CSV")
        ->required();
    locate_cmd->add_option("--out", manifest.out_path, "optional distance report path");
    add_common(locate_cmd);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "compare the four analysis methods");
    std::vector<std::string> labels;
    std::size_t trials = 20;
    std::string bench_noise = "0";
    fs::path bench_csv;
    bench_cmd->add_option("--topology", manifest.topology_path, "topology file")->required();
    bench_cmd->add_option("--labels", labels, "ECU labels (default: all stubs)")
        ->delimiter(',');
    bench_cmd->add_option("--trials", trials, "trials per removal");
    bench_cmd->add_option("--noise", bench_noise, "per-capture noise sigma (SI)");
    bench_cmd->add_option("--out", manifest.out_path, "text table path");
    bench_cmd->add_option("--out-csv", bench_csv, "per-cell rate CSV path");
    add_pulse_flags(bench_cmd, pulse_flags);
    add_common(bench_cmd);

    // resistance
    auto* resistance_cmd =
        app.add_subcommand("resistance", "lumped bus resistance figures");
    std::string added_r = "70k";
    resistance_cmd->add_option("--topology", manifest.topology_path, "topology file")
        ->required();
    resistance_cmd->add_option("--added-r", added_r,
                               "input resistance of the hypothetical extra transceiver");
    resistance_cmd->add_option("--out", manifest.out_path, "optional report path");
    add_common(resistance_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        parse_config_pairs(config_pairs, manifest);
        if (simulate->parsed()) {
            manifest.command = "simulate";
            return cmd_simulate(manifest, pulse_flags, n_captures, noise, switch_topology,
                                switch_at);
        }
        if (calibrate_cmd->parsed()) {
            manifest.command = "calibrate";
            return cmd_calibrate(manifest, threshold_spec);
        }
        if (detect_cmd->parsed()) {
            manifest.command = "detect";
            return cmd_detect(manifest);
        }
        if (locate_cmd->parsed()) {
            manifest.command = "locate";
            return cmd_locate(manifest);
        }
        if (bench_cmd->parsed()) {
            manifest.command = "bench";
            return cmd_bench(manifest, pulse_flags, labels, trials, bench_noise, bench_csv);
        }
        if (resistance_cmd->parsed()) {
            manifest.command = "resistance";
            return cmd_resistance(manifest, added_r);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
