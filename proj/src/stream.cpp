#include "hetstream/stream.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    return out;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* v = std::getenv("HETSTREAM_LOG");
        if (!v) return LogLevel::info;
        const std::string s(v);
        if (s == "quiet" || s == "0") return LogLevel::quiet;
        if (s == "debug" || s == "2") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

void log_line(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) <= static_cast<int>(log_level())) std::cerr << msg << '\n';
}

void take_model_keys(KeyValues& kv, Config& c) {
    c.K = kv.take_size("components", c.K);
    if (kv.has("grids")) {
        const auto g = kv.take_size_list("grids");
        if (g.size() == 1) {
            c.defaultGrids = g[0];
            c.grids.clear();
        } else {
            c.grids = g;
        }
    }
    c.epochs = kv.take_size("epochs", c.epochs);
    c.windowSize = kv.take_size("window", c.windowSize);
    if (kv.has("alpha")) c.alpha = kv.take_double_list("alpha");
    c.sigma2C = kv.take_double("sigma2_c", c.sigma2C);
    c.sigma2Noise = kv.take_double("sigma2_noise", c.sigma2Noise);
    if (kv.has("b_lengthscale")) c.kernelB.lengthscale = kv.take_double("b_lengthscale", 0.0);
    c.kernelB.signalVar = kv.take_double("b_signal_var", c.kernelB.signalVar);
    if (kv.has("c_lengthscale")) c.kernelC.lengthscale = kv.take_double("c_lengthscale", 0.0);
    c.kernelC.signalVar = kv.take_double("c_signal_var", c.kernelC.signalVar);
    c.derivativeOrder = static_cast<int>(kv.take_size("derivative_order", 1));
    c.lbfgsMaxIter = kv.take_size("lbfgs_max_iter", c.lbfgsMaxIter);
    c.pThreshold = kv.take_double("p_threshold", c.pThreshold);
    c.seed = kv.take_u64("seed", c.seed);
}

RunConfig parse_run_config(KeyValues kv) {
    RunConfig rc;
    const auto input = kv.take("input");
    if (!input || input->empty()) throw ConfigError("config: 'input' is required");
    rc.input = *input;
    rc.outputDir = kv.take_string("output_dir", rc.outputDir);
    rc.roles.timestamp = kv.take_string("timestamp_column", "timestamp");
    rc.roles.categorical = kv.take_list("categorical_columns");
    rc.roles.continuous = kv.take_list("continuous_columns");
    if (const auto l = kv.take("label_column"); l && !l->empty()) rc.roles.label = *l;
    rc.reportWallMs = kv.take_bool("report_wall_ms", false);
    rc.topUnits = kv.take_size("top_units", rc.topUnits);
    take_model_keys(kv, rc.model);
    kv.require_all_used();
    if (rc.roles.categorical.empty() && rc.roles.continuous.empty())
        throw ConfigError("config: at least one categorical or continuous column is required");
    if (!rc.model.grids.empty() && rc.model.grids.size() != rc.roles.continuous.size())
        throw ConfigError("config: 'grids' lists a count per continuous column");
    if (rc.model.alpha.size() > 1 && rc.model.alpha.size() != rc.roles.categorical.size())
        throw ConfigError("config: 'alpha' lists a value per categorical column");
    if (rc.model.alpha.size() == 1 && rc.roles.categorical.size() > 1)
        rc.model.alpha.assign(rc.roles.categorical.size(), rc.model.alpha[0]);
    rc.model.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(KeyValues::load(path)); }

nlohmann::json to_json(const WindowReport& r) {
    nlohmann::json j;
    j["window"] = r.window;
    j["t_first"] = r.tFirst;
    j["t_last"] = r.tLast;
    j["interval"] = r.interval;
    j["n_records"] = r.nRecords;
    j["score"] = r.verdict.score;
    j["dof"] = r.verdict.dof;
    j["p_value"] = r.verdict.pValue;
    j["anomaly"] = r.verdict.isAnomaly;
    j["component_mass"] = r.componentMass;
    j["line_search_failures"] = r.lineSearchFailures;
    j["regularized"] = r.regularized;
    if (r.wallMs) j["wall_ms"] = *r.wallMs;
    return j;
}

WindowReport report_from_json(const nlohmann::json& j) {
    WindowReport r;
    try {
        r.window = j.at("window").get<std::size_t>();
        r.tFirst = j.at("t_first").get<double>();
        r.tLast = j.at("t_last").get<double>();
        r.interval = j.value("interval", 0.0);
        r.nRecords = j.value("n_records", std::size_t{0});
        r.verdict.score = j.at("score").get<double>();
        r.verdict.dof = j.value("dof", 0L);
        r.verdict.pValue = j.value("p_value", 1.0);
        r.verdict.isAnomaly = j.value("anomaly", false);
        r.componentMass = j.value("component_mass", std::vector<double>{});
        if (j.contains("wall_ms")) r.wallMs = j["wall_ms"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed report: ") + e.what(), 0);
    }
    return r;
}

StreamEngine::StreamEngine(Config config, std::vector<std::size_t> units)
    : config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    shape_.units = std::move(units);
    for (std::size_t u : shape_.units)
        if (u == 0) throw ContractError("StreamEngine: categorical attribute with no units");
}

void StreamEngine::initialize(const CurrentTensor& first) {
    if (first.size() == 0) throw ContractError("StreamEngine: empty first window");
    const std::size_t M2 = first.records.front().cont.size();
    shape_.grids.clear();
    grids_.clear();
    std::vector<double> samples(first.size());
    for (std::size_t m = 0; m < M2; ++m) {
        for (std::size_t i = 0; i < first.size(); ++i) samples[i] = first.records[i].cont.at(m);
        grids_.push_back(build_grid(samples, config_.grids_for(m)));
        shape_.grids.push_back(grids_.back().size());
    }
    config_ = resolve_kernels(config_, first);
    degrees_of_freedom(config_.K, shape_.units, shape_.grids);  // fails early on a degenerate shape
    params_ = ModelParams::initial(config_.K, shape_);
    stats_ = StreamStats::zeros(config_.K, shape_);
    ready_ = true;
}

WindowReport StreamEngine::process(const CurrentTensor& tensor) {
    const auto start = std::chrono::steady_clock::now();
    if (!ready_) initialize(tensor);
    tensor.validate(shape_);

    RngHandle wrng = rng_.split(windows_);
    last_ = run_inference(tensor, grids_, params_, config_, wrng);
    const AnomalyVerdict verdict =
        detect(last_.counts, stats_, tensor.interval, shape_, config_.pThreshold);
    stats_ = update_stats(stats_, last_.counts, tensor.interval, verdict);
    params_ = last_.params;
    params_.snapshot();

    WindowReport r;
    r.window = windows_++;
    r.tFirst = tensor.timestamps.front();
    r.tLast = tensor.timestamps.back();
    r.interval = tensor.interval;
    r.nRecords = tensor.size();
    r.verdict = verdict;
    const Eigen::MatrixXd w = params_.component_weights();
    r.componentMass.assign(config_.K, 1.0 / static_cast<double>(config_.K));
    if (w.rows() > 0) {
        const Eigen::VectorXd mass = w.colwise().mean().transpose();
        for (std::size_t k = 0; k < config_.K; ++k) r.componentMass[k] = mass(static_cast<Eigen::Index>(k));
    }
    r.lineSearchFailures = last_.lineSearchFailures;
    r.regularized = last_.regularized;
    r.wallMs = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

RunSummary run_stream(const RunConfig& rc) {
    std::vector<Vocab> vocabs;
    {
        std::ifstream scan(rc.input, std::ios::binary);
        if (!scan) throw std::runtime_error("cannot open input '" + rc.input + "'");
        vocabs = scan_vocabularies(scan, rc.roles);
    }
    std::vector<std::size_t> units;
    for (const auto& v : vocabs) units.push_back(v.size());

    std::ifstream in(rc.input, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open input '" + rc.input + "'");
    CsvEventReader reader(in, rc.roles, vocabs, false);

    const std::filesystem::path dir(rc.outputDir);
    std::filesystem::create_directories(dir);
    std::ofstream reports = open_out(dir / "reports.jsonl");
    std::ofstream dynamics = open_out(dir / "dynamics.csv");
    dynamics << "window,t";
    for (std::size_t k = 0; k < rc.model.K; ++k) dynamics << ",w" << k;
    dynamics << '\n';

    StreamEngine engine(rc.model, units);
    Windower windower(rc.model.windowSize);
    RunSummary summary;

    auto handle = [&](const CurrentTensor& tensor) {
        WindowReport r = engine.process(tensor);
        if (!rc.reportWallMs) r.wallMs.reset();
        reports << to_json(r).dump() << '\n';
        reports.flush();
        const Eigen::MatrixXd w = engine.params().component_weights();
        const auto& ts = engine.params().bTimestamps;
        for (Eigen::Index t = 0; t < w.rows(); ++t) {
            dynamics << r.window << ',' << num(ts[static_cast<std::size_t>(t)]);
            for (Eigen::Index k = 0; k < w.cols(); ++k) dynamics << ',' << num(w(t, k));
            dynamics << '\n';
        }
        ++summary.windows;
        summary.records += r.nRecords;
        if (r.verdict.isAnomaly) ++summary.anomalies;
        log_line(LogLevel::debug, "window " + std::to_string(r.window) + ": n=" +
                                      std::to_string(r.nRecords) + " score=" + num(r.verdict.score) +
                                      " p=" + num(r.verdict.pValue) +
                                      (r.verdict.isAnomaly ? " ANOMALY" : ""));
    };

    while (auto rec = reader.next())
        if (auto done = windower.push(std::move(*rec))) handle(*done);
    if (auto done = windower.finish()) handle(*done);
    if (summary.windows == 0) throw SchemaError("input has no records", reader.line());

    const ModelParams& p = engine.params();
    const std::size_t K = engine.config().K;

    std::ofstream cats = open_out(dir / "components_categorical.csv");
    cats << "component,attribute,rank,unit,probability\n";
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t m = 0; m < p.A.size(); ++m) {
            const Eigen::MatrixXd& A = p.A[m];
            std::vector<std::size_t> order(static_cast<std::size_t>(A.cols()));
            std::iota(order.begin(), order.end(), 0);
            const auto row = static_cast<Eigen::Index>(k);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return A(row, static_cast<Eigen::Index>(a)) > A(row, static_cast<Eigen::Index>(b));
            });
            const std::size_t top = std::min(rc.topUnits, order.size());
            for (std::size_t r = 0; r < top; ++r) {
                cats << k << ',' << rc.roles.categorical[m] << ',' << r + 1 << ','
                     << vocabs[m].name(static_cast<UnitId>(order[r])) << ','
                     << num(A(row, static_cast<Eigen::Index>(order[r]))) << '\n';
            }
        }
    }

    std::ofstream dens = open_out(dir / "densities.csv");
    dens << "component,attribute,grid,center,width,density\n";
    for (std::size_t m = 0; m < p.C.size(); ++m) {
        const GridSpec& g = engine.grids()[m];
        Eigen::VectorXd logW(static_cast<Eigen::Index>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i) logW(static_cast<Eigen::Index>(i)) = std::log(g.width(i));
        for (std::size_t k = 0; k < K; ++k) {
            const Eigen::VectorXd c = p.C[m].row(static_cast<Eigen::Index>(k)).transpose();
            const Eigen::VectorXd prob = lgp_probabilities(c, logW);
            for (std::size_t i = 0; i < g.size(); ++i) {
                dens << k << ',' << rc.roles.continuous[m] << ',' << i << ',' << num(g.center(i)) << ','
                     << num(g.width(i)) << ',' << num(prob(static_cast<Eigen::Index>(i)) / g.width(i))
                     << '\n';
            }
        }
    }

    nlohmann::json model;
    model["components"] = K;
    model["windows"] = summary.windows;
    model["origin"] = reader.origin().value_or(0.0);
    model["b_lengthscale"] = *engine.config().kernelB.lengthscale;
    model["total_normal_time"] = engine.stats().totalNormalTime;
    for (std::size_t m = 0; m < p.A.size(); ++m) {
        nlohmann::json a;
        a["attribute"] = rc.roles.categorical[m];
        std::vector<std::string> names;
        for (std::size_t u = 0; u < vocabs[m].size(); ++u) names.push_back(vocabs[m].name(static_cast<UnitId>(u)));
        a["units"] = names;
        a["A"] = matrix_json(p.A[m]);
        model["categorical"].push_back(a);
    }
    for (std::size_t m = 0; m < p.C.size(); ++m) {
        nlohmann::json c;
        c["attribute"] = rc.roles.continuous[m];
        c["edges"] = engine.grids()[m].edges;
        c["C"] = matrix_json(p.C[m]);
        model["continuous"].push_back(c);
    }
    std::ofstream mj = open_out(dir / "model.json");
    mj << model.dump(2) << '\n';

    log_line(LogLevel::info, "processed " + std::to_string(summary.windows) + " windows, " +
                                 std::to_string(summary.records) + " records, " +
                                 std::to_string(summary.anomalies) + " anomalous");
    return summary;
}

}  // namespace hetstream
