// hetstream: streaming group-anomaly detection over heterogeneous event streams.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hetstream/bench.hpp"
#include "hetstream/error.hpp"
#include "hetstream/evaluation.hpp"
#include "hetstream/stream.hpp"
#include "hetstream/synthetic.hpp"

namespace {

using namespace hetstream;

constexpr int kExitOther = 1;
constexpr int kExitSchema = 2;
constexpr int kExitNumeric = 3;

int cmd_run(const std::string& configPath) {
    const RunConfig rc = load_run_config(configPath);
    const RunSummary s = run_stream(rc);
    std::cout << "windows=" << s.windows << " records=" << s.records << " anomalies=" << s.anomalies << '\n';
    return 0;
}

int cmd_generate(const std::string& specPath, const std::string& outPath) {
    const SyntheticStream s = generate_synthetic(load_synthetic_spec(specPath));
    std::ofstream out(outPath, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + outPath + "'");
    write_synthetic_csv(s, out);
    log_line(LogLevel::info, "wrote " + std::to_string(s.records.size()) + " records in " +
                                 std::to_string(s.windows) + " windows (" +
                                 std::to_string(s.burstWindows.size()) + " burst windows)");
    return 0;
}

int cmd_evaluate(const std::string& reportsPath, const std::string& dataPath, std::size_t threshold,
                 const std::string& tsCol, const std::string& labelCol) {
    std::ifstream rin(reportsPath);
    if (!rin) throw std::runtime_error("cannot open '" + reportsPath + "'");
    const auto reports = read_reports(rin);
    std::ifstream din(dataPath, std::ios::binary);
    if (!din) throw std::runtime_error("cannot open '" + dataPath + "'");
    const auto counts = anomalous_counts(din, tsCol, labelCol, reports);
    const Evaluation e = evaluate(reports, counts, threshold);
    nlohmann::json j;
    j["windows"] = e.windows;
    j["anomalous_windows"] = e.positives;
    j["auc_roc"] = e.aucRoc;
    j["auc_pr"] = e.aucPr;
    std::cout << j.dump() << '\n';
    return 0;
}

int cmd_bench(const std::string& specPath, const std::string& outDir) {
    BenchSpec spec = load_bench_spec(specPath);
    if (!outDir.empty()) spec.outputDir = outDir;
    const BenchResult r = run_bench(spec);
    write_bench_csv(r, spec.outputDir);
    nlohmann::json j;
    j["mean_ms"] = r.meanMs;
    j["slope_pct_per_10_windows"] = 100.0 * 10.0 * r.slopeMsPerWindow / r.meanMs;
    j["event_loglog_slope"] = r.eventSlope;
    if (!r.components.empty()) j["component_loglog_slope"] = r.componentSlope;
    std::cout << j.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming group-anomaly detection for heterogeneous event streams"};
    app.require_subcommand(1);

    std::string config, spec, out, reports, data, tsCol = "timestamp", labelCol = "label";
    std::size_t threshold = 100;

    auto* run = app.add_subcommand("run", "Process a CSV stream window by window");
    run->add_option("--config", config, "Run configuration (key = value)")->required();

    auto* gen = app.add_subcommand("generate", "Write a labelled synthetic stream");
    gen->add_option("--spec", spec, "Generator specification")->required();
    gen->add_option("--out", out, "Output CSV")->required();

    auto* ev = app.add_subcommand("evaluate", "Window-level AUC-ROC / AUC-PR of a run");
    ev->add_option("--reports", reports, "reports.jsonl of a run")->required();
    ev->add_option("--data", data, "Labelled input CSV")->required();
    ev->add_option("--threshold", threshold, "Anomalous records needed to label a window");
    ev->add_option("--timestamp-column", tsCol);
    ev->add_option("--label-column", labelCol);

    auto* bench = app.add_subcommand("bench", "Per-window timing and scaling sweeps");
    bench->add_option("--spec", spec, "Benchmark specification")->required();
    bench->add_option("--out", out, "Output directory for the CSV tables");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config);
        if (*gen) return cmd_generate(spec, out);
        if (*ev) return cmd_evaluate(reports, data, threshold, tsCol, labelCol);
        if (*bench) return cmd_bench(spec, out);
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitSchema;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ContractError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitSchema;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOther;
}
