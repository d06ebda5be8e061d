#pragma once

// Wall-time measurements: per-window time along a stationary stream, and
// per-window time against the number of events per window and against K.

#include <cstddef>
#include <string>
#include <vector>

#include "hetstream/core_model.hpp"
#include "hetstream/synthetic.hpp"

namespace hetstream {

struct BenchSpec {
    SyntheticSpec data;
    Config model;
    std::size_t streamWindows = 50;
    std::vector<std::size_t> eventSweep{1, 2, 4, 8};  // multipliers of data.rate
    std::vector<std::size_t> kSweep;                  // empty: skipped
    std::size_t sweepWindows = 5;
    std::size_t repeats = 3;
    std::string outputDir = ".";
};

BenchSpec load_bench_spec(const std::string& path);

struct ScalingPoint {
    double x = 0.0;   // events per window, or K
    double ms = 0.0;  // median per-window time
};

struct BenchResult {
    std::vector<double> windowMs;  // per window, min over repeats
    double meanMs = 0.0;
    double slopeMsPerWindow = 0.0;
    std::vector<ScalingPoint> events;
    double eventSlope = 0.0;  // log-log
    std::vector<ScalingPoint> components;
    double componentSlope = 0.0;
};

// Least-squares slope of y on x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

BenchResult run_bench(const BenchSpec& spec);

// bench_stream.csv, bench_events.csv and (if measured) bench_components.csv.
void write_bench_csv(const BenchResult& result, const std::string& dir);

}  // namespace hetstream
