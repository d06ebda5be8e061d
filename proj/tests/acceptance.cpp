// Acceptance run: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--known-failure N]...
// Exit status is non-zero when a criterion fails that is not listed as a
// known failure. Listed criteria still print their real verdict.
#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "hetstream/bench.hpp"
#include "hetstream/detector.hpp"
#include "hetstream/evaluation.hpp"
#include "hetstream/gp_ssm.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/samplers.hpp"
#include "hetstream/stream.hpp"
#include "hetstream/synthetic.hpp"

using namespace hetstream;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Dense Matern-3/2 regression written out from the kernel, independent of the library.
std::pair<Eigen::VectorXd, Eigen::VectorXd> dense_gp(const std::vector<double>& x, const std::vector<double>& y,
                                                     const std::vector<double>& v, double ell, double s2) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double r = std::sqrt(3.0) * std::abs(x[i] - x[j]) / ell;
            K(i, j) = s2 * (1.0 + r) * std::exp(-r);
        }
    Eigen::MatrixXd Ky = K;
    for (Eigen::Index i = 0; i < n; ++i) Ky(i, i) += v[i];
    const Eigen::LLT<Eigen::MatrixXd> llt(Ky);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    const Eigen::VectorXd mean = K * llt.solve(yv);
    const Eigen::VectorXd var = (K - K * llt.solve(K)).diagonal();
    return {mean, var};
}

Outcome c1_gp_ssm() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worstMean = 0.0, worstVar = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + gen() % 50;
        const double ell = 0.2 + 3.0 * u(gen), s2 = 0.3 + 2.0 * u(gen);
        std::vector<double> x(n), y(n), v(n);
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            t += 0.01 + u(gen);
            x[i] = t;
            y[i] = std::sin(t) + 0.3 * (u(gen) - 0.5);
            v[i] = 0.01 + 0.5 * u(gen);
        }
        const SsmKernel k = matern32_ssm(ell, s2);
        const auto r = filter_smooth(k, x, y, v, GaussState{StateVector::Zero(), k.Pinf}, x[0]);
        const auto [mean, var] = dense_gp(x, y, v, ell, s2);
        for (std::size_t i = 0; i < n; ++i) {
            worstMean = std::max(worstMean, std::abs(r.smoothed[i].mean() - mean(static_cast<Eigen::Index>(i))));
            worstVar = std::max(worstVar, std::abs(r.smoothed[i].var() - var(static_cast<Eigen::Index>(i))));
        }
    }
    const double secs = seconds_since(t0);
    return {worstMean < 1e-6 && worstVar < 1e-5 && secs < 10.0,
            fmt("max |mean err| %.2e (< 1e-6), max |var err| %.2e (< 1e-5), %.2f s (< 10 s)", worstMean, worstVar,
                secs)};
}

Outcome c2_lyapunov() {
    std::mt19937_64 gen(102);
    std::uniform_real_distribution<double> logEll(-1.0, 2.0), logVar(-2.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const SsmKernel k = matern32_ssm(std::pow(10.0, logEll(gen)), std::pow(10.0, logVar(gen)));
        // Residual computed here from the exposed matrices, not via the member helper.
        const Eigen::Matrix2d R = k.F * k.Pinf + k.Pinf * k.F.transpose() + k.L * k.qNoise * k.L.transpose();
        worst = std::max({worst, R.cwiseAbs().maxCoeff(), k.lyapunov_residual()});
    }
    return {worst < 1e-8, fmt("max residual %.2e over 50 pairs, lengthscale in [0.1, 100], signal var in [0.01, 10] (< 1e-8)", worst)};
}

Outcome c3_polya_gamma() {
    RngHandle rng(103);
    const int n = 100000;
    bool ok = true;
    double worstZ = 0.0;
    for (double b : {1.0, 10.0, 100.0, 1000.0}) {
        for (double c : {0.1, 1.0, 5.0}) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += sample_polya_gamma(b, c, rng);
            const double mean = b * std::tanh(c / 2.0) / (2.0 * c);
            const double sigma = std::sqrt(polya_gamma_var(b, c) / n);
            const double z = std::abs(s / n - mean) / sigma;
            worstZ = std::max(worstZ, z);
            ok = ok && z < 3.0;
        }
    }
    return {ok, fmt("max |mean - b tanh(c/2)/(2c)| = %.2f MC sigma over 12 (b,c) pairs (< 3)", worstZ)};
}

LgpObjective random_objective(std::mt19937_64& gen, std::size_t G) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    LgpObjective obj;
    const auto n = static_cast<Eigen::Index>(G);
    obj.counts.resize(n);
    obj.logWidths.resize(n);
    obj.prior.resize(n);
    double x = 0.0;
    for (Eigen::Index g = 0; g < n; ++g) {
        const double w = 0.1 + u(gen);
        obj.centers.push_back(x + 0.5 * w);
        x += w;
        obj.logWidths(g) = std::log(w);
        obj.counts(g) = static_cast<double>(gen() % 20);
        obj.prior(g) = 2.0 * (u(gen) - 0.5);
    }
    obj.total = obj.counts.sum();
    obj.kernel = matern32_ssm(0.5 + 3.0 * u(gen), 0.5 + u(gen));
    obj.noiseVar = 0.2 + u(gen);
    return obj;
}

Outcome c4_lgp_gradient() {
    std::mt19937_64 gen(104);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worstGrad = 0.0, worstSum = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const LgpObjective obj = random_objective(gen, 2 + gen() % 49);
        Eigen::VectorXd c(obj.prior.size());
        for (Eigen::Index g = 0; g < c.size(); ++g) c(g) = nd(gen);
        const LgpValue v = lgp_objective_and_gradient(c, obj);
        for (Eigen::Index g = 0; g < c.size(); ++g) {
            Eigen::VectorXd cp = c, cm = c;
            cp(g) += 1e-5;
            cm(g) -= 1e-5;
            const double fd =
                (lgp_objective_and_gradient(cp, obj).value - lgp_objective_and_gradient(cm, obj).value) / 2e-5;
            worstGrad = std::max(worstGrad, std::abs(fd - v.gradient(g)));
        }
        worstSum = std::max(worstSum, std::abs(lgp_probabilities(c, obj.logWidths).sum() - 1.0));
    }
    return {worstGrad < 1e-5 && worstSum < 1e-12,
            fmt("max |grad - FD| %.2e (< 1e-5), max |sum p - 1| %.2e (< 1e-12)", worstGrad, worstSum)};
}

Outcome c5_a_update() {
    std::mt19937_64 gen(105);
    double worstSum = 0.0;
    std::size_t emptyRows = 0, emptyMismatch = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t K = 1 + gen() % 8, U = 1 + gen() % 20;
        const TensorShape shape{{U}, {}};
        CountStats c = CountStats::zeros(K, shape, 1);
        Eigen::MatrixXd Ahat = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(U))
                                   .cwiseAbs()
                                   .array() + 1e-3;
        for (Eigen::Index k = 0; k < Ahat.rows(); ++k) {
            Ahat.row(k) /= Ahat.row(k).sum();
            if (gen() % 3 == 0) continue;
            for (Eigen::Index u = 0; u < Ahat.cols(); ++u) c.nMode[0](k, u) = static_cast<std::int64_t>(gen() % 1000);
            c.nK(k) = c.nMode[0].row(k).sum();
        }
        const std::vector<double> alpha{1.0 / static_cast<double>(K)};
        const auto A = estimate_A(c, {Ahat}, alpha);
        for (Eigen::Index k = 0; k < A[0].rows(); ++k) {
            worstSum = std::max(worstSum, std::abs(A[0].row(k).sum() - 1.0));
            if (c.nK(k) == 0) {
                ++emptyRows;
                if (A[0].row(k) != Ahat.row(k)) ++emptyMismatch;
            }
        }
    }
    return {worstSum < 1e-9 && emptyMismatch == 0 && emptyRows > 0,
            fmt("max |row sum - 1| %.2e (< 1e-9), %zu/%zu empty rows equal Ahat exactly", worstSum,
                emptyRows - emptyMismatch, emptyRows)};
}

GridSpec uniform_grid(std::size_t G) {
    GridSpec g;
    for (std::size_t i = 0; i <= G; ++i) g.edges.push_back(static_cast<double>(i) / static_cast<double>(G));
    return g;
}

CurrentTensor random_tensor(std::mt19937_64& gen, std::size_t n, std::size_t U, std::size_t slots) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> times;
    for (std::size_t i = 0; i < n; ++i) times.push_back(static_cast<double>(gen() % slots));
    std::sort(times.begin(), times.end());
    CurrentTensor x;
    for (double t : times) {
        EventRecord r;
        r.timestamp = t;
        r.cat = {static_cast<UnitId>(gen() % U)};
        r.cont = {u(gen)};
        x.push(r);
    }
    x.interval = x.timestamps.back() + 1.0;
    return x;
}

Outcome c6_gibbs_bookkeeping() {
    std::mt19937_64 gen(106);
    std::size_t checks = 0, mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + gen() % 1000, U = 2 + gen() % 6, K = 1 + gen() % 5, T = 1 + gen() % 30;
        const CurrentTensor x = random_tensor(gen, n, U, T);
        const std::vector<GridSpec> grids{uniform_grid(2 + gen() % 9)};
        const TensorShape shape{{U}, {grids[0].size()}};
        Config cfg;
        cfg.K = K;
        const ConditionalTables tab = make_tables(ModelParams::initial(K, shape), grids, cfg, x.slots());
        const auto gid = grid_indices(x, grids);
        GibbsState st;
        RngHandle rng(static_cast<std::uint64_t>(trial));
        for (std::size_t i = 0; i < n; ++i) st.z.push_back(static_cast<ComponentId>(rng.below(K)));
        st.counts = counts_from_assignments(x, shape, K, st.z, gid);
        for (int epoch = 0; epoch < 5; ++epoch) {
            gibbs_epoch(x, gid, st, tab, rng);
            ++checks;
            if (!(st.counts == counts_from_assignments(x, shape, K, st.z, gid)) || !is_consistent(st.counts, x))
                ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%zu/%zu epoch recounts identical over 50 streams", checks - mismatches, checks)};
}

// Windows drawn from a fixed K=3, U=5, G=10 model with the true component
// of every record, fed straight to the detector.
Outcome c7_calibration() {
    const std::size_t K = 3, U = 5, G = 10, Tc = 30, perSlot = 10, windows = 2000;
    const TensorShape shape{{U}, {G}};
    std::mt19937_64 gen(107);
    const std::vector<double> pi{0.4, 0.35, 0.25};
    const std::vector<std::vector<double>> A{
        {0.35, 0.25, 0.15, 0.15, 0.10}, {0.10, 0.15, 0.15, 0.25, 0.35}, {0.20, 0.20, 0.20, 0.20, 0.20}};
    std::vector<std::vector<double>> C(K, std::vector<double>(G));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t g = 0; g < G; ++g)
            C[k][g] = 1.0 + 0.8 * std::exp(-0.5 * std::pow((double(g) - 3.0 * double(k + 1)) / 2.0, 2.0));
    std::discrete_distribution<std::size_t> dz(pi.begin(), pi.end());
    std::vector<std::discrete_distribution<std::size_t>> du, dg;
    for (std::size_t k = 0; k < K; ++k) {
        du.emplace_back(A[k].begin(), A[k].end());
        dg.emplace_back(C[k].begin(), C[k].end());
    }
    // Smallest expected cell count of one window.
    double minCell = 1e300;
    for (std::size_t k = 0; k < K; ++k) {
        const double nk = pi[k] * Tc * perSlot;
        double cs = 0.0;
        for (double c : C[k]) cs += c;
        for (double a : A[k]) minCell = std::min(minCell, nk * a);
        for (double c : C[k]) minCell = std::min(minCell, nk * c / cs);
    }

    const std::vector<std::size_t> us{U}, gs{G};
    const long dof = degrees_of_freedom(K, us, gs);
    StreamStats stats = StreamStats::zeros(K, shape);
    std::size_t tested = 0, rejected = 0;
    for (std::size_t w = 0; w < windows; ++w) {
        CountStats c = CountStats::zeros(K, shape, Tc);
        for (std::size_t t = 0; t < Tc; ++t)
            for (std::size_t i = 0; i < perSlot; ++i) {
                const auto k = static_cast<ComponentId>(dz(gen));
                const std::vector<UnitId> cat{static_cast<UnitId>(du[k](gen))};
                const std::vector<GridId> grid{static_cast<GridId>(dg[k](gen))};
                c.update(t, k, cat, grid, 1);
            }
        const AnomalyVerdict v = detect(c, stats, static_cast<double>(Tc), shape, 0.05);
        if (w > 0) {
            ++tested;
            rejected += v.isAnomaly ? 1 : 0;
        }
        stats = update_stats(stats, c, static_cast<double>(Tc), v);
    }
    const double rate = static_cast<double>(rejected) / static_cast<double>(tested);

    // Enumerated degrees of freedom against the closed form.
    auto closed_form = [](std::size_t k, std::vector<std::size_t> u, std::vector<std::size_t> g) {
        long s = 0;
        for (auto x : u) s += static_cast<long>(x);
        for (auto x : g) s += static_cast<long>(x);
        return static_cast<long>(k) * (s - static_cast<long>(u.size()) - static_cast<long>(g.size()) + 1) - 1;
    };
    bool dofOk = degrees_of_freedom(2, std::vector<std::size_t>{3}, std::vector<std::size_t>{4}) == 11 &&
                 degrees_of_freedom(20, std::vector<std::size_t>{10}, std::vector<std::size_t>{300}) == 6179 &&
                 dof == closed_form(K, us, gs);
    for (std::size_t k : {1, 4, 20})
        for (auto u : {std::vector<std::size_t>{7}, std::vector<std::size_t>{3, 9}})
            for (auto g : {std::vector<std::size_t>{}, std::vector<std::size_t>{300}, std::vector<std::size_t>{5, 6}})
                dofOk = dofOk && degrees_of_freedom(k, u, g) == closed_form(k, u, g);

    return {std::abs(rate - 0.05) <= 0.02 && dofOk && minCell >= 5.0,
            fmt("rejection %.4f over %zu null windows (0.05 +- 0.02), dof %ld, min expected cell %.1f, "
                "dof cases %s",
                rate, tested, dof, minCell, dofOk ? "match" : "MISMATCH")};
}

SyntheticSpec recovery_spec() {
    SyntheticSpec s;
    s.seed = 108;
    s.timestamps = 3000;
    s.rate = 30;
    s.components = 3;
    s.units = {15, 15};
    s.disjoint = true;
    s.continuous = 1;
    s.window = 30;
    s.anomalyFraction = 0.1;
    s.burstMultiplier = 20;
    s.warmupWindows = 5;
    return s;
}

Config recovery_config() {
    Config c;
    c.K = 3;
    c.defaultGrids = 20;
    c.epochs = 30;
    c.windowSize = 30;
    c.seed = 5;
    return c;
}

Outcome c8_recovery() {
    const auto t0 = Clock::now();
    const SyntheticSpec spec = recovery_spec();
    const SyntheticStream data = generate_synthetic(spec);
    const auto windows = window_stream(data.records, spec.window);
    StreamEngine engine(recovery_config(), spec.units);
    std::vector<std::uint32_t> truth, fitted;
    std::vector<double> scores;
    std::vector<std::size_t> anomalous;
    std::size_t offset = 0;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const WindowReport r = engine.process(windows[w]);
        scores.push_back(r.verdict.score);
        std::size_t bad = 0;
        for (const auto& rec : windows[w].records) bad += *rec.label ? 1 : 0;
        anomalous.push_back(bad);
        if (!data.burstWindows.contains(w)) {
            const auto& z = engine.last().z;
            for (std::size_t i = 0; i < z.size(); ++i) {
                truth.push_back(data.components[offset + i]);
                fitted.push_back(z[i]);
            }
        }
        offset += windows[w].size();
    }
    const auto labels = label_windows(anomalous, 100);
    const double ari = adjusted_rand_index(truth, fitted);
    const double roc = auc_roc(scores, labels), pr = auc_pr(scores, labels);
    std::size_t positives = 0;
    for (auto l : labels) positives += l;
    const double secs = seconds_since(t0);
    return {ari > 0.9 && roc >= 0.95 && pr >= 0.85 && secs < 300.0,
            fmt("ARI %.4f (> 0.9), AUC-ROC %.4f (>= 0.95), AUC-PR %.4f (>= 0.85), %zu windows, %zu anomalous, "
                "%.1f s (< 300 s)",
                ari, roc, pr, windows.size(), positives, secs)};
}

BenchSpec bench_spec(double rate, std::vector<std::size_t> sweep, std::size_t streamWindows) {
    BenchSpec b;
    b.data.seed = 109;
    b.data.rate = rate;
    b.data.components = 3;
    b.data.units = {15, 15};
    b.data.window = 30;
    b.data.anomalyFraction = 0.0;
    b.model = recovery_config();
    b.model.epochs = 10;
    b.streamWindows = streamWindows;
    b.eventSweep = std::move(sweep);
    b.sweepWindows = 10;
    b.repeats = 9;
    return b;
}

// PG(N_t, c) is an exact sum of N_t draws up to N_t = 170 and a normal
// approximation above, so per-window time steps down where N_t crosses 170.
// The event slope is measured on each side of the switch.
Outcome c9_scalability() {
    const BenchResult exact = run_bench(bench_spec(10, {1, 2, 4, 8, 16}, 50));     // N_t 10..160
    const BenchResult approx = run_bench(bench_spec(200, {1, 2, 4, 8}, 2));        // N_t 200..1600
    const double drift = std::abs(exact.slopeMsPerWindow) * 10.0 / exact.meanMs;
    const bool ok = drift < 0.02 && std::abs(exact.eventSlope - 1.0) <= 0.15 &&
                    std::abs(approx.eventSlope - 1.0) <= 0.15;
    return {ok, fmt("per-window slope %.3f%% of mean per 10 windows (< 2%%), mean %.2f ms; event log-log slope "
                    "%.3f for %.0f..%.0f events, %.3f for %.0f..%.0f events (1.0 +- 0.15)",
                    100.0 * drift, exact.meanMs, exact.eventSlope, exact.events.front().x, exact.events.back().x,
                    approx.eventSlope, approx.events.front().x, approx.events.back().x)};
}

Outcome c10_determinism() {
    const fs::path root = fs::temp_directory_path() / "hetstream_acceptance_det";
    fs::remove_all(root);
    fs::create_directories(root);
    SyntheticSpec spec = recovery_spec();
    spec.timestamps = 600;
    {
        std::ofstream out(root / "stream.csv", std::ios::binary);
        write_synthetic_csv(generate_synthetic(spec), out);
    }
    auto run_once = [&](const std::string& name) {
        RunConfig rc;
        rc.input = (root / "stream.csv").string();
        rc.outputDir = (root / name).string();
        rc.roles = ColumnRoles{"timestamp", {"cat0", "cat1"}, {"cont0"}, "label"};
        rc.model = recovery_config();
        run_stream(rc);
        std::ifstream in(root / name / "reports.jsonl", std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    const std::string a = run_once("a"), b = run_once("b");
    const auto lines = std::count(a.begin(), a.end(), '\n');
    return {!a.empty() && a == b, fmt("two seeded runs: %ld report lines, %s", static_cast<long>(lines),
                                      a == b ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> known;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--known-failure" && i + 1 < argc) {
            known.insert(std::stoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--known-failure N]...\n";
            return 2;
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"GP/SSM equivalence", c1_gp_ssm},
        {"Lyapunov residual", c2_lyapunov},
        {"Polya-Gamma moments", c3_polya_gamma},
        {"LGP gradient", c4_lgp_gradient},
        {"A-update", c5_a_update},
        {"Gibbs bookkeeping", c6_gibbs_bookkeeping},
        {"Detector calibration", c7_calibration},
        {"Recovery + detection", c8_recovery},
        {"Scalability", c9_scalability},
        {"Determinism", c10_determinism},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
                  << "): " << o.detail;
        if (!o.pass && known.contains(id)) std::cout << " [known failure]";
        std::cout << std::endl;
        if (!o.pass && !known.contains(id)) ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
