#include "tdrscan/bounce.hpp"

#include "tdrscan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

namespace tdr {

namespace {

constexpr double kGainFloor = 1e-9;

/// One scattering response: delta*d(t) + b*exp(-t/tau)*u(t).
/// Pure resistive events have b == 0 and carry everything in delta.
struct Kernel {
    double delta = 0.0;
    double b = 0.0;
    double tau = 0.0;

    bool is_scalar() const { return b == 0.0; }
};

/// Reflection seen by a line of impedance z0 looking into a node where
/// g_other sums the other branches' 1/Z0 and (r, c) is the lumped load:
///   Gamma(s) = (1 - z0*(g_other + 1/r + s c)) / (1 + z0*(g_other + 1/r + s c))
Kernel reflection_kernel(double z0, double g_other, double r, double c) {
    const double g_load = std::isfinite(r) ? 1.0 / r : 0.0;
    const double a0 = 1.0 - z0 * (g_other + g_load);
    const double b0 = 1.0 + z0 * (g_other + g_load);
    if (c == 0.0) return Kernel{a0 / b0, 0.0, 0.0};
    const double a1 = -z0 * c;
    const double b1 = z0 * c;
    Kernel k;
    k.delta = a1 / b1; // = -1
    k.b = (a0 * b1 - a1 * b0) / (b1 * b1);
    k.tau = b1 / b0;
    return k;
}

Kernel transmission_of(const Kernel& gamma) {
    return Kernel{gamma.delta + 1.0, gamma.b, gamma.tau};
}

struct Site {
    double distance = 0.0; ///< from the port along the cable path [m]
    Kernel gamma;          ///< reflection seen by an arriving ray
    bool is_port = false;
    bool is_junction = false;
    int stub_site = -1;    ///< index of the stub-end site, junctions only
    int n_branches = 1;    ///< line count at the node
};

struct Ray {
    int site = 0;          ///< destination site index
    int from_site = 0;     ///< where the ray came from
    double t_arrival = 0.0;
    double gain = 1.0;
    int budget = 0;        ///< remaining reflection events
    std::vector<Kernel> chain;
};

/// Applies delta + b*exp kernels to the analytically sampled pulse and
/// accumulates into acc. The exponential convolution uses the exact
/// recursion for piecewise-linear input.
void accumulate_ray(std::vector<double>& acc, const PulseSpec& pulse, double dt,
                    double start_time, double gain, const std::vector<Kernel>& chain) {
    const std::size_t n = acc.size();
    const auto first = static_cast<std::size_t>(
        std::max(0.0, std::floor(start_time / dt)));
    if (first >= n) return;

    std::vector<double> x(n - first);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = pulse.value(static_cast<double>(first + i) * dt - start_time);

    std::vector<double> y;
    for (const Kernel& k : chain) {
        if (k.is_scalar()) {
            for (double& v : x) v *= k.delta;
            continue;
        }
        const double alpha = std::exp(-dt / k.tau);
        const double aq = (k.tau * k.tau * (1.0 - alpha) - dt * k.tau * alpha) / dt;
        const double bq = k.tau * (1.0 - alpha) - aq;
        y.assign(x.size(), 0.0);
        double z = 0.0;
        y[0] = k.delta * x[0];
        for (std::size_t i = 1; i < x.size(); ++i) {
            z = alpha * z + k.b * (aq * x[i - 1] + bq * x[i]);
            y[i] = k.delta * x[i] + z;
        }
        x.swap(y);
    }
    for (std::size_t i = 0; i < x.size(); ++i) acc[first + i] += gain * x[i];
}

} // namespace

Waveform bounce_oracle(const Topology& topology, const PulseSpec& pulse, int max_order,
                       const SimConfig& config) {
    topology.validate();
    pulse.validate();
    if (topology.stubs.size() > 2)
        throw SimError("bounce oracle handles at most two stubs");
    for (const auto& load : topology.end_loads)
        if (load.capacitance != 0.0)
            throw SimError("bounce oracle requires resistive bus-end loads");

    const double length = topology.total_length();
    const bool port_at_zero = std::abs(topology.measurement_position) < 1e-9;
    if (!port_at_zero && std::abs(topology.measurement_position - length) > 1e-9)
        throw SimError("bounce oracle requires the port at a bus end");

    const auto& base = topology.main_segments.front().params;
    const double z0 = characteristic_impedance(base);
    const double v = base.velocity();
    auto check_params = [&](const LineParams& p, const char* what) {
        if (std::abs(characteristic_impedance(p) - z0) > 1e-9 * z0 ||
            std::abs(p.velocity() - v) > 1e-9 * v)
            throw SimError(std::string("bounce oracle requires one shared (Z0, v); ") + what +
                           " differs");
    };
    for (const auto& seg : topology.main_segments) check_params(seg.params, "a main segment");
    for (const auto& stub : topology.stubs)
        if (stub.length > 0.0) check_params(stub.params, "a stub");

    const double rs = pulse.source_impedance < 0.0 ? z0 : pulse.source_impedance;
    if (rs <= 0.0) throw SimError("bounce oracle requires a resistive source impedance");

    // Sites along the path, distances measured from the port.
    const auto from_port = [&](double pos) {
        return port_at_zero ? pos : length - pos;
    };
    const NodeLoad& port_load = topology.end_loads[port_at_zero ? 0 : 1];
    const NodeLoad& far_load = topology.end_loads[port_at_zero ? 1 : 0];

    std::vector<Site> sites;
    // port site 0
    {
        Site s;
        s.distance = 0.0;
        s.is_port = true;
        const double g_shunt = (port_load.has_finite_resistance() ? 1.0 / port_load.resistance
                                                                  : 0.0) +
                               1.0 / rs;
        s.gamma = reflection_kernel(z0, 0.0, g_shunt > 0.0 ? 1.0 / g_shunt : INFINITY, 0.0);
        sites.push_back(s);
    }

    std::vector<const Stub*> ordered;
    for (const auto& stub : topology.stubs) ordered.push_back(&stub);
    std::sort(ordered.begin(), ordered.end(), [&](const Stub* a, const Stub* b) {
        return from_port(a->position) < from_port(b->position);
    });

    for (const Stub* stub : ordered) {
        Site junction;
        junction.distance = from_port(stub->position);
        junction.is_junction = true;
        if (stub->length > 0.0) {
            junction.n_branches = 3;
            junction.gamma = reflection_kernel(z0, 2.0 / z0, INFINITY, 0.0);

            Site end;
            end.distance = junction.distance + stub->length;
            end.gamma = reflection_kernel(z0, 0.0, stub->load.resistance,
                                          stub->load.capacitance);
            sites.push_back(junction);
            sites.back().stub_site = static_cast<int>(sites.size());
            sites.push_back(end);
        } else {
            // load shunts the through path directly
            junction.n_branches = 2;
            junction.gamma = reflection_kernel(z0, 1.0 / z0, stub->load.resistance,
                                               stub->load.capacitance);
            sites.push_back(junction);
        }
    }

    // far end
    {
        Site s;
        s.distance = length;
        s.gamma = reflection_kernel(z0, 0.0, far_load.resistance, far_load.capacitance);
        sites.push_back(s);
    }

    // Main-path neighbours: junction sites plus the two ends in distance
    // order; stub-end sites hang off their junction.
    std::vector<int> path;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        const bool is_stub_end =
            std::any_of(sites.begin(), sites.end(),
                        [&](const Site& s) { return s.stub_site == static_cast<int>(i); });
        if (!is_stub_end) path.push_back(static_cast<int>(i));
    }
    std::sort(path.begin(), path.end(),
              [&](int a, int b) { return sites[a].distance < sites[b].distance; });
    auto path_index = [&](int site) {
        return static_cast<int>(std::find(path.begin(), path.end(), site) - path.begin());
    };

    const RecordGrid grid = derive_record_grid(topology, pulse, config);
    Waveform out;
    out.t0 = grid.t0;
    out.dt = grid.dt;
    out.samples.assign(grid.samples, 0.0);
    const double record_end = static_cast<double>(grid.samples - 1) * grid.dt;

    // Direct source feed: the port node voltage while launching equals the
    // forward-wave amplitude from the Thevenin divider.
    const double g_port_shunt =
        (port_load.has_finite_resistance() ? 1.0 / port_load.resistance : 0.0);
    const double launch_gain = (1.0 / rs) / (1.0 / rs + g_port_shunt + 1.0 / z0);
    accumulate_ray(out.samples, pulse, grid.dt, grid.t0, launch_gain, {});

    const Kernel port_register = transmission_of(sites[0].gamma); // 1 + Gamma_port

    std::deque<Ray> queue;
    {
        Ray launch;
        launch.site = path.size() > 1 ? path[1] : 0;
        launch.from_site = 0;
        launch.t_arrival = sites[launch.site].distance / v;
        launch.gain = launch_gain;
        launch.budget = max_order;
        if (path.size() > 1) queue.push_back(launch);
    }

    auto spawn = [&](const Ray& parent, int to_site, const Kernel& k, int budget) {
        Ray r = parent;
        r.from_site = parent.site;
        r.site = to_site;
        r.budget = budget;
        r.t_arrival = parent.t_arrival +
                      std::abs(sites[to_site].distance - sites[parent.site].distance) / v;
        if (k.is_scalar()) {
            r.gain *= k.delta;
            if (std::abs(r.gain) < kGainFloor) return;
        } else {
            r.chain.push_back(k);
        }
        if (r.t_arrival > record_end) return;
        queue.push_back(std::move(r));
    };

    while (!queue.empty()) {
        Ray ray = std::move(queue.front());
        queue.pop_front();
        const Site& here = sites[ray.site];

        if (here.is_port) {
            // register the node voltage (1 + Gamma_port) * incident
            std::vector<Kernel> chain = ray.chain;
            if (port_register.is_scalar()) {
                accumulate_ray(out.samples, pulse, grid.dt, grid.t0 + ray.t_arrival,
                               ray.gain * port_register.delta, chain);
            } else {
                chain.push_back(port_register);
                accumulate_ray(out.samples, pulse, grid.dt, grid.t0 + ray.t_arrival, ray.gain,
                               chain);
            }
            if (ray.budget > 0) {
                const int back = path.size() > 1 ? path[1] : -1;
                if (back >= 0) spawn(ray, back, sites[0].gamma, ray.budget - 1);
            }
            continue;
        }

        if (here.is_junction) {
            const int pi = path_index(ray.site);
            const int prev = path[pi - 1];
            const int next = path[pi + 1];
            const Kernel t = transmission_of(here.gamma);
            // transmissions keep the budget; reflections spend one
            if (ray.from_site == prev) {
                spawn(ray, next, t, ray.budget);
                if (here.stub_site >= 0) spawn(ray, here.stub_site, t, ray.budget);
                if (ray.budget > 0) spawn(ray, prev, here.gamma, ray.budget - 1);
            } else if (ray.from_site == next) {
                spawn(ray, prev, t, ray.budget);
                if (here.stub_site >= 0) spawn(ray, here.stub_site, t, ray.budget);
                if (ray.budget > 0) spawn(ray, next, here.gamma, ray.budget - 1);
            } else {
                // emerging from the stub
                spawn(ray, prev, t, ray.budget);
                spawn(ray, next, t, ray.budget);
                if (ray.budget > 0) spawn(ray, here.stub_site, here.gamma, ray.budget - 1);
            }
            continue;
        }

        // far end or stub end: reflection only
        if (ray.budget > 0) spawn(ray, ray.from_site, here.gamma, ray.budget - 1);
    }

    return out;
}

} // namespace tdr
