#include "tdrscan/waveform.hpp"

#include "tdrscan/errors.hpp"
#include "tdrscan/si.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace tdr {

bool Waveform::same_grid(const Waveform& other) const {
    return t0 == other.t0 && dt == other.dt && samples.size() == other.samples.size();
}

void MeasurementSeries::validate() const {
    if (captures.empty()) return;
    const Waveform& first = captures.front();
    for (std::size_t i = 1; i < captures.size(); ++i) {
        if (!captures[i].same_grid(first))
            throw ValidationError("capture " + std::to_string(i) +
                                  " does not share the series sampling grid");
    }
}

Waveform average(const MeasurementSeries& series) {
    return average_last(series, series.size());
}

Waveform average_last(const MeasurementSeries& series, std::size_t n) {
    if (series.empty() || n == 0) throw ValidationError("cannot average an empty series");
    if (n > series.size()) throw ValidationError("series holds fewer captures than requested");
    series.validate();

    const std::size_t begin = series.size() - n;
    Waveform out = series.captures[begin];
    for (std::size_t i = begin + 1; i < series.size(); ++i) {
        const auto& c = series.captures[i].samples;
        for (std::size_t j = 0; j < c.size(); ++j) out.samples[j] += c[j];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& s : out.samples) s *= inv;
    return out;
}

Waveform add_noise(const Waveform& w, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ValidationError("noise sigma must be non-negative");
    if (sigma == 0.0) return w;
    Waveform out = w;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& s : out.samples) s += dist(rng);
    return out;
}

Waveform superimpose_can_traffic(const Waveform& w, double bitrate,
                                 const std::vector<bool>& pattern,
                                 double dominant_level) {
    if (bitrate <= 0.0) throw ValidationError("bitrate must be positive");
    Waveform out = w;
    const double bit_time = 1.0 / bitrate;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const auto bit = static_cast<std::size_t>(out.time_at(i) / bit_time);
        if (bit < pattern.size() && pattern[bit]) out.samples[i] += dominant_level;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

void write_comments(std::ostream& out, const std::vector<std::string>& comments,
                    double t0) {
    for (const auto& c : comments) out << "# " << c << "\n";
    out << "# t0_s=" << format_number(t0) << "\n";
}

struct CsvBody {
    double t0 = 0.0;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvBody read_csv(std::istream& in) {
    CsvBody body;
    std::string line;
    bool header_seen = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto pos = line.find("t0_s=");
            if (pos != std::string::npos)
                body.t0 = parse_si(line.substr(pos + 5));
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!header_seen) {
            body.header = fields;
            header_seen = true;
            continue;
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            auto v = try_parse_si(f);
            if (!v) throw ParseError("bad numeric field '" + f + "'", line_no);
            row.push_back(*v);
        }
        if (row.size() != body.header.size())
            throw ParseError("row width does not match header", line_no);
        body.rows.push_back(std::move(row));
    }
    if (!header_seen) throw ParseError("CSV has no header row");
    return body;
}

double infer_dt(const CsvBody& body) {
    if (body.rows.size() < 2) return 0.0;
    return body.rows[1][0] - body.rows[0][0];
}

} // namespace

void write_waveform_csv(std::ostream& out, const Waveform& w,
                        const std::vector<std::string>& header_comments) {
    write_comments(out, header_comments, w.t0);
    out << "time_s,voltage_v\n";
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        out << format_number(w.time_at(i)) << ',' << format_number(w.samples[i]) << "\n";
}

void write_series_csv(std::ostream& out, const MeasurementSeries& s,
                      const std::vector<std::string>& header_comments) {
    s.validate();
    if (s.empty()) throw ValidationError("cannot write an empty series");
    write_comments(out, header_comments, s.captures.front().t0);
    out << "time_s";
    for (std::size_t c = 0; c < s.size(); ++c) out << ",capture_" << c;
    out << "\n";
    const std::size_t n = s.captures.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        out << format_number(s.captures.front().time_at(i));
        for (const auto& cap : s.captures) out << ',' << format_number(cap.samples[i]);
        out << "\n";
    }
}

Waveform read_waveform_csv(std::istream& in) {
    CsvBody body = read_csv(in);
    if (body.header.size() != 2)
        throw ParseError("expected two columns (time_s,voltage_v)");
    Waveform w;
    w.t0 = body.t0;
    w.dt = infer_dt(body);
    w.samples.reserve(body.rows.size());
    for (const auto& r : body.rows) w.samples.push_back(r[1]);
    return w;
}

MeasurementSeries read_series_csv(std::istream& in) {
    CsvBody body = read_csv(in);
    if (body.header.size() < 2) throw ParseError("series CSV needs at least one capture column");
    MeasurementSeries s;
    const std::size_t n_caps = body.header.size() - 1;
    const double dt = infer_dt(body);
    s.captures.resize(n_caps);
    for (auto& cap : s.captures) {
        cap.t0 = body.t0;
        cap.dt = dt;
        cap.samples.reserve(body.rows.size());
    }
    for (const auto& r : body.rows)
        for (std::size_t c = 0; c < n_caps; ++c) s.captures[c].samples.push_back(r[c + 1]);
    return s;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return in;
}

} // namespace

void write_waveform_csv_file(const std::filesystem::path& path, const Waveform& w,
                             const std::vector<std::string>& header_comments) {
    auto out = open_out(path);
    write_waveform_csv(out, w, header_comments);
}

void write_series_csv_file(const std::filesystem::path& path, const MeasurementSeries& s,
                           const std::vector<std::string>& header_comments) {
    auto out = open_out(path);
    write_series_csv(out, s, header_comments);
}

Waveform read_waveform_csv_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_waveform_csv(in);
}

MeasurementSeries read_series_csv_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_series_csv(in);
}

} // namespace tdr
