#pragma once

// Window-by-window driver: inference, detection, statistics update and the
// prior snapshot, plus the on-disk reports of a run.

#include "json.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hetstream/core_model.hpp"
#include "hetstream/detector.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/ingestion.hpp"
#include "hetstream/keyvalue.hpp"
#include "hetstream/samplers.hpp"

namespace hetstream {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

// Read once from HETSTREAM_LOG (quiet | info | debug); info when unset.
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

struct RunConfig {
    std::string input;
    std::string outputDir = ".";
    ColumnRoles roles;
    Config model;
    bool reportWallMs = false;
    std::size_t topUnits = 10;
};

// Reads the model keys (components, grids, epochs, ...) shared by `run` and `bench`.
void take_model_keys(KeyValues& kv, Config& config);

// Full run configuration; throws ConfigError on unknown or malformed keys.
RunConfig parse_run_config(KeyValues kv);
RunConfig load_run_config(const std::string& path);

struct WindowReport {
    std::size_t window = 0;
    double tFirst = 0.0;  // seconds since the first record of the stream
    double tLast = 0.0;
    double interval = 0.0;
    std::size_t nRecords = 0;
    AnomalyVerdict verdict;
    std::vector<double> componentMass;
    std::size_t lineSearchFailures = 0;
    bool regularized = false;
    std::optional<double> wallMs;
};

nlohmann::json to_json(const WindowReport& r);
WindowReport report_from_json(const nlohmann::json& j);

class StreamEngine {
public:
    // `units` holds the vocabulary size of every categorical attribute.
    StreamEngine(Config config, std::vector<std::size_t> units);

    // Grids and the B lengthscale are fixed from the first window.
    WindowReport process(const CurrentTensor& tensor);

    const Config& config() const { return config_; }
    const TensorShape& shape() const { return shape_; }
    const std::vector<GridSpec>& grids() const { return grids_; }
    const ModelParams& params() const { return params_; }
    const StreamStats& stats() const { return stats_; }
    const InferenceResult& last() const { return last_; }
    std::size_t windows() const { return windows_; }

private:
    void initialize(const CurrentTensor& first);

    Config config_;
    TensorShape shape_;
    std::vector<GridSpec> grids_;
    ModelParams params_;
    StreamStats stats_;
    InferenceResult last_;
    RngHandle rng_;
    std::size_t windows_ = 0;
    bool ready_ = false;
};

struct RunSummary {
    std::size_t windows = 0;
    std::size_t anomalies = 0;
    std::size_t records = 0;
};

// Streams `config.input` and writes reports.jsonl, dynamics.csv,
// components_categorical.csv, densities.csv and model.json to the output dir.
RunSummary run_stream(const RunConfig& config);

}  // namespace hetstream
