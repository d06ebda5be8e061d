#include "hetstream/bench.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "hetstream/error.hpp"
#include "hetstream/stream.hpp"

namespace hetstream {
namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Per-window wall time of one full pass, min over `repeats` passes.
// Lowers best[w] to this pass's time of window w.
void time_pass(const std::vector<CurrentTensor>& windows, const Config& config,
               const std::vector<std::size_t>& units, std::vector<double>& best) {
    best.resize(windows.size(), std::numeric_limits<double>::infinity());
    StreamEngine engine(config, units);
    for (std::size_t w = 0; w < windows.size(); ++w)
        best[w] = std::min(best[w], *engine.process(windows[w]).wallMs);
}

struct Prepared {
    std::vector<CurrentTensor> windows;
    std::vector<std::size_t> units;
    double eventsPerWindow = 0.0;
};

Prepared prepare(SyntheticSpec data, std::size_t nWindows) {
    data.timestamps = nWindows * data.window;
    data.anomalyFraction = 0.0;
    data.burstWindows.clear();
    const SyntheticStream s = generate_synthetic(data);
    Prepared p;
    p.windows = window_stream(s.records, data.window);
    p.units = data.units;
    p.eventsPerWindow = static_cast<double>(s.records.size()) / static_cast<double>(p.windows.size());
    return p;
}

// Repeats run round-robin over the points, so a slow stretch of the machine
// is spread across the sweep instead of landing on one point.
std::vector<double> sweep(const std::vector<Prepared>& points, const std::vector<Config>& configs,
                          std::size_t repeats) {
    std::vector<std::vector<double>> best(points.size());
    for (std::size_t r = 0; r < repeats; ++r)
        for (std::size_t i = 0; i < points.size(); ++i) time_pass(points[i].windows, configs[i], points[i].units, best[i]);
    std::vector<double> ms;
    for (auto& b : best) {
        if (b.size() > 1) b.erase(b.begin());  // the first window also builds grids
        ms.push_back(median(b));
    }
    return ms;
}

}  // namespace

BenchSpec load_bench_spec(const std::string& path) {
    KeyValues kv = KeyValues::load(path);
    BenchSpec b;
    b.data = take_synthetic_keys(kv);
    take_model_keys(kv, b.model);
    b.model.windowSize = b.data.window;
    b.streamWindows = kv.take_size("stream_windows", b.streamWindows);
    if (kv.has("event_sweep")) b.eventSweep = kv.take_size_list("event_sweep");
    if (kv.has("k_sweep")) b.kSweep = kv.take_size_list("k_sweep");
    b.sweepWindows = kv.take_size("sweep_windows", b.sweepWindows);
    b.repeats = kv.take_size("repeats", b.repeats);
    b.outputDir = kv.take_string("output_dir", b.outputDir);
    kv.require_all_used();
    b.model.validate();
    if (b.streamWindows < 2) throw ConfigError("bench: stream_windows must be >= 2");
    if (b.repeats < 1) throw ConfigError("bench: repeats must be >= 1");
    if (b.sweepWindows < 2) throw ConfigError("bench: sweep_windows must be >= 2");
    return b;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("ls_slope: need >= 2 paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw ContractError("ls_slope: constant x");
    return sxy / sxx;
}

BenchResult run_bench(const BenchSpec& spec) {
    BenchResult out;
    Config config = spec.model;
    config.windowSize = spec.data.window;

    {
        const Prepared p = prepare(spec.data, spec.streamWindows);
        for (std::size_t r = 0; r < spec.repeats; ++r) time_pass(p.windows, config, p.units, out.windowMs);
        std::vector<double> idx;
        for (std::size_t w = 0; w < out.windowMs.size(); ++w) idx.push_back(static_cast<double>(w));
        out.meanMs = 0.0;
        for (double v : out.windowMs) out.meanMs += v;
        out.meanMs /= static_cast<double>(out.windowMs.size());
        out.slopeMsPerWindow = ls_slope(idx, out.windowMs);
    }

    std::vector<Prepared> points;
    for (std::size_t mult : spec.eventSweep) {
        SyntheticSpec d = spec.data;
        d.rate = spec.data.rate * static_cast<double>(mult);
        points.push_back(prepare(d, spec.sweepWindows));
    }
    std::vector<double> lx, ly;
    const std::vector<double> eventMs = sweep(points, std::vector<Config>(points.size(), config), spec.repeats);
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.events.push_back({points[i].eventsPerWindow, eventMs[i]});
        lx.push_back(std::log(points[i].eventsPerWindow));
        ly.push_back(std::log(eventMs[i]));
    }
    if (lx.size() >= 2) out.eventSlope = ls_slope(lx, ly);

    lx.clear();
    ly.clear();
    if (!spec.kSweep.empty()) {
        const Prepared p = prepare(spec.data, spec.sweepWindows);
        std::vector<Config> configs;
        for (std::size_t K : spec.kSweep) {
            Config c = config;
            c.K = K;
            c.alpha.clear();
            configs.push_back(c);
        }
        const std::vector<double> kMs = sweep(std::vector<Prepared>(configs.size(), p), configs, spec.repeats);
        for (std::size_t i = 0; i < configs.size(); ++i) {
            out.components.push_back({static_cast<double>(spec.kSweep[i]), kMs[i]});
            lx.push_back(std::log(static_cast<double>(spec.kSweep[i])));
            ly.push_back(std::log(kMs[i]));
        }
        if (lx.size() >= 2) out.componentSlope = ls_slope(lx, ly);
    }
    return out;
}

void write_bench_csv(const BenchResult& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    std::ofstream s(d / "bench_stream.csv");
    s << "window,ms\n";
    for (std::size_t w = 0; w < r.windowMs.size(); ++w) s << w << ',' << r.windowMs[w] << '\n';
    std::ofstream e(d / "bench_events.csv");
    e << "events_per_window,ms\n";
    for (const auto& p : r.events) e << p.x << ',' << p.ms << '\n';
    if (!r.components.empty()) {
        std::ofstream k(d / "bench_components.csv");
        k << "components,ms\n";
        for (const auto& p : r.components) k << p.x << ',' << p.ms << '\n';
    }
    if (!s || !e) throw std::runtime_error("cannot write bench output to '" + dir + "'");
}

}  // namespace hetstream
