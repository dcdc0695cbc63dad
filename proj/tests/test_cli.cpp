#include "test_helpers.hpp"

#include "tdrscan/si.hpp"
#include "tdrscan/waveform.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string output;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() /
                 ("tdrscan_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliResult run_cli(const std::string& args) {
    const fs::path log = work_dir() / "cli_out.txt";
    const std::string cmd =
        std::string(TDRSCAN_BIN) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

fs::path write_file(const std::string& name, const std::string& content) {
    const fs::path p = work_dir() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kResistiveDoc = R"(
line z0=120 v=2e8
bus length=10
term pos=0 r=120
term pos=end r=120
node label=ecu1 pos=3 stub=0.2 r=70k c=0
node label=ecu2 pos=7 stub=0.2 r=70k c=0
meas pos=0
)";

} // namespace

TEST_CASE("resistance subcommand reproduces the lumped figures") {
    const auto topo = write_file("res.topo", kResistiveDoc);
    const auto r = run_cli("resistance --topology " + topo.string());
    CHECK(r.code == 0);
    CHECK(r.output.find("59.8973") != std::string::npos);
    CHECK(r.output.find("delta_r_added_transceiver_ohm: 0.0512") != std::string::npos);
}

TEST_CASE("missing topology file exits with status 2 naming the path") {
    const auto r = run_cli("resistance --topology /nonexistent/q.topo");
    CHECK(r.code == 2);
    CHECK(r.output.find("/nonexistent/q.topo") != std::string::npos);
}

TEST_CASE("simulate writes waveform or series CSV plus a run summary") {
    const auto topo = write_file("bus.topo", powertrain_topology_text());
    const auto wave = work_dir() / "one.csv";
    const auto series = work_dir() / "many.csv";

    SUBCASE("single noise-free capture") {
        const auto r = run_cli("simulate --topology " + topo.string() + " --out " +
                               wave.string() + " --n 1 --noise 0");
        CHECK(r.code == 0);
        const tdr::Waveform w = tdr::read_waveform_csv_file(wave);
        CHECK(w.size() > 1000);
        CHECK(fs::exists(wave.string() + ".run.txt"));
        const std::string side = slurp(wave.string() + ".run.txt");
        CHECK(side.find("topology_hash:") != std::string::npos);
        CHECK(side.find("seed:") != std::string::npos);
    }
    SUBCASE("series with noise, deterministic given the seed") {
        const std::string cmd = "simulate --topology " + topo.string() + " --out " +
                                series.string() + " --n 4 --noise 1mV --seed 42";
        CHECK(run_cli(cmd).code == 0);
        const std::string first = slurp(series);
        CHECK(run_cli(cmd).code == 0);
        CHECK(slurp(series) == first);
        const tdr::MeasurementSeries s = tdr::read_series_csv_file(series);
        CHECK(s.size() == 4);
        // header comments carry the seed
        CHECK(first.find("# seed=42") != std::string::npos);
    }
    SUBCASE("unknown config key exits 2") {
        const auto r = run_cli("simulate --topology " + topo.string() + " --out " +
                               wave.string() + " --config warp=9");
        CHECK(r.code == 2);
    }
}

TEST_CASE("calibrate, detect, locate pipeline on the powertrain bus") {
    const auto topo = write_file("pt.topo", powertrain_topology_text());
    const auto attacked = write_file(
        "pt_alien.topo", tdr::serialize_topology(powertrain_with_alien()));

    // one shared record length so both topologies sample identically
    const std::string grid = " --config duration=200n ";
    const std::string pulse = " --pulse-width 3ns --pulse-amplitude 1 ";

    const auto ref_csv = work_dir() / "ref.csv";
    const auto quiet_csv = work_dir() / "quiet.csv";
    const auto attack_csv = work_dir() / "attack.csv";
    const auto model = work_dir() / "model.csv";
    const auto report = work_dir() / "report.txt";
    const auto plot = work_dir() / "plot.csv";

    REQUIRE(run_cli("simulate --topology " + topo.string() + " --out " + ref_csv.string() +
                    " --n 60 --noise 10mV" + pulse + grid + " --seed 7")
                .code == 0);
    REQUIRE(run_cli("simulate --topology " + topo.string() + " --out " +
                    quiet_csv.string() + " --n 30 --noise 10mV" + pulse + grid +
                    " --seed 8")
                .code == 0);
    REQUIRE(run_cli("simulate --topology " + attacked.string() + " --out " +
                    attack_csv.string() + " --n 30 --noise 10mV" + pulse + grid +
                    " --seed 9")
                .code == 0);

    // calibrate: 60 references in batches of 30
    const auto cal = run_cli("calibrate --series " + ref_csv.string() + " --out " +
                             model.string() +
                             " --config n_reference=60 --config n_average=30"
                             " --threshold max-plus:0.01");
    CHECK(cal.code == 0);
    CHECK(fs::exists(model));
    CHECK(slurp(model).find("model_threshold=") != std::string::npos);

    SUBCASE("insufficient captures fail calibration") {
        const auto bad = run_cli("calibrate --series " + quiet_csv.string() + " --out " +
                                 (work_dir() / "m2.csv").string() +
                                 " --config n_reference=300");
        CHECK(bad.code == 2);
    }

    SUBCASE("unchanged series stays below threshold") {
        const auto r = run_cli("detect --model " + model.string() + " --series " +
                               quiet_csv.string() + " --out " + report.string() +
                               " --plot " + plot.string());
        CHECK(r.code == 0);
        CHECK(r.output.find("no alien device") != std::string::npos);
        const std::string plot_text = slurp(plot);
        CHECK(plot_text.find("batch_index,k_score,threshold,alien") != std::string::npos);
        CHECK(slurp(report).find("alien_detected: false") != std::string::npos);
    }

    SUBCASE("attacked series raises the alarm; locate ranges the junction") {
        const auto r = run_cli("detect --model " + model.string() + " --series " +
                               attack_csv.string() + " --out " + report.string());
        CHECK(r.code == 0); // a found alien is still a successful run
        CHECK(r.output.find("alien device detected") != std::string::npos);
        CHECK(slurp(report).find("alien_detected: true") != std::string::npos);

        const auto loc = run_cli("locate --model " + model.string() + " --series " +
                                 attack_csv.string());
        CHECK(loc.code == 0);
        REQUIRE(loc.output.find("distance_m: ") != std::string::npos);
        const std::string tail = loc.output.substr(loc.output.find("distance_m: ") + 12);
        const double distance = tdr::parse_si(tail.substr(0, tail.find('\n')));
        CHECK(std::abs(distance - kAlienDistance) < 0.5);
    }

    SUBCASE("locate on an unchanged series reports no change") {
        const auto loc = run_cli("locate --model " + model.string() + " --series " +
                                 quiet_csv.string());
        CHECK(loc.code == 0);
        CHECK(loc.output.find("no change localized") != std::string::npos);
    }

    SUBCASE("calibrate output is byte-identical across reruns") {
        const auto again = work_dir() / "model2.csv";
        CHECK(run_cli("calibrate --series " + ref_csv.string() + " --out " +
                      again.string() +
                      " --config n_reference=60 --config n_average=30"
                      " --threshold max-plus:0.01")
                  .code == 0);
        CHECK(slurp(again) == slurp(model));
    }

    SUBCASE("a non-model file is rejected as a model") {
        const auto r = run_cli("detect --model " + quiet_csv.string() + " --series " +
                               quiet_csv.string() + " --out " + report.string());
        CHECK(r.code == 2);
    }

    SUBCASE("contaminated series rows are flagged in the report") {
        // overlay every capture with dominant traffic, write it back out
        tdr::MeasurementSeries s = tdr::read_series_csv_file(quiet_csv);
        for (auto& cap : s.captures)
            cap = tdr::superimpose_can_traffic(cap, 500e3, {true, true}, 2.0);
        const auto dirty = work_dir() / "dirty.csv";
        tdr::write_series_csv_file(dirty, s);
        const auto r = run_cli("detect --model " + model.string() + " --series " +
                               dirty.string() + " --out " + report.string());
        CHECK(r.code == 0);
        const std::string text = slurp(report);
        CHECK(text.find("alien_detected: false") != std::string::npos);
        CHECK(text.find("contaminated: true") != std::string::npos);
    }

    SUBCASE("mid-stream topology switch rises at the straddling batch") {
        const auto stream = work_dir() / "stream.csv";
        REQUIRE(run_cli("simulate --topology " + topo.string() + " --switch-topology " +
                        attacked.string() + " --switch-at 45 --out " + stream.string() +
                        " --n 90 --noise 10mV" + pulse + grid)
                    .code == 0);
        const auto r = run_cli("detect --model " + model.string() + " --series " +
                               stream.string() + " --out " + report.string() + " --plot " +
                               plot.string());
        CHECK(r.code == 0);
        // batch 0 clean, batch 2 fully post-attack
        std::istringstream rows(slurp(plot));
        std::string line;
        std::vector<std::string> data;
        while (std::getline(rows, line))
            if (!line.empty() && line[0] != '#' && line.find("batch") != 0)
                data.push_back(line);
        REQUIRE(data.size() == 3);
        CHECK(data[0].substr(data[0].size() - 1) == "0");
        CHECK(data[2].substr(data[2].size() - 1) == "1");
    }
}

TEST_CASE("bench renders the verdict table") {
    const auto topo = write_file("bench.topo", powertrain_topology_text());
    const auto table = work_dir() / "table.txt";
    const auto csv = work_dir() / "table.csv";
    const auto r = run_cli("bench --topology " + topo.string() +
                           " --labels Engine,Light --trials 1 --noise 0 --out " +
                           table.string() + " --out-csv " + csv.string() +
                           " --config n_reference=60 --config n_average=30");
    CHECK(r.code == 0);
    const std::string text = slurp(table);
    CHECK(text.find("coherence_k") != std::string::npos);
    CHECK(text.find("Engine") != std::string::npos);
    CHECK(text.find("✓") != std::string::npos);
    CHECK(slurp(csv).find("method,label,detected,trials,rate") != std::string::npos);
    SUBCASE("unknown label exits 2") {
        CHECK(run_cli("bench --topology " + topo.string() + " --labels ghost --trials 1")
                  .code == 2);
    }
}
