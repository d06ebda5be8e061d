#include "hetstream/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "hetstream/error.hpp"
#include "hetstream/samplers.hpp"

namespace hetstream {
namespace {

std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

Eigen::VectorXd dirichlet(std::size_t n, double concentration, RngHandle& rng) {
    std::gamma_distribution<double> gamma(concentration, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = std::max(gamma(rng.engine()), 1e-300);
    return v / v.sum();
}

}  // namespace

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("synthetic spec: " + msg); };
    if (timestamps < 1) fail("timestamps must be >= 1");
    if (!(dt > 0.0)) fail("dt must be positive");
    if (!(rate > 0.0)) fail("rate must be positive");
    if (components < 1) fail("components must be >= 1");
    if (!weights.empty() && weights.size() != components) fail("weights needs one value per component");
    for (double w : weights)
        if (!(w > 0.0)) fail("weights must be positive");
    if (units.empty() && continuous == 0) fail("need at least one attribute");
    for (std::size_t u : units) {
        if (u < 1) fail("units must be >= 1");
        if (disjoint && u < components) fail("disjoint layout needs units >= components");
    }
    if (!(concentration > 0.0)) fail("concentration must be positive");
    if (!(continuousSd > 0.0)) fail("continuous_sd must be positive");
    if (!(dynamicsPeriod > 0.0)) fail("dynamics_period must be positive");
    if (window < 1) fail("window must be >= 1");
    if (!(anomalyFraction >= 0.0 && anomalyFraction <= 1.0)) fail("anomaly_fraction must lie in [0, 1]");
    if (!(burstMultiplier >= 1.0)) fail("burst_multiplier must be >= 1");
}

SyntheticSpec take_synthetic_keys(KeyValues& kv) {
    SyntheticSpec s;
    s.seed = kv.take_u64("seed", s.seed);
    s.timestamps = kv.take_size("timestamps", s.timestamps);
    s.dt = kv.take_double("dt", s.dt);
    s.start = kv.take_double("start", s.start);
    const std::string arrivals = kv.take_string("arrivals", "fixed");
    if (arrivals != "fixed" && arrivals != "poisson")
        throw ConfigError("synthetic spec: arrivals must be 'fixed' or 'poisson'");
    s.poisson = arrivals == "poisson";
    s.rate = kv.take_double("rate", s.rate);
    s.components = kv.take_size("true_components", s.components);
    if (kv.has("weights")) s.weights = kv.take_double_list("weights");
    if (kv.has("units")) s.units = kv.take_size_list("units");
    const std::string layout = kv.take_string("layout", "disjoint");
    if (layout != "disjoint" && layout != "random")
        throw ConfigError("synthetic spec: layout must be 'disjoint' or 'random'");
    s.disjoint = layout == "disjoint";
    s.concentration = kv.take_double("concentration", s.concentration);
    s.continuous = kv.take_size("continuous", s.continuous);
    s.modeSpacing = kv.take_double("mode_spacing", s.modeSpacing);
    s.continuousSd = kv.take_double("continuous_sd", s.continuousSd);
    s.dynamicsAmplitude = kv.take_double("dynamics_amplitude", s.dynamicsAmplitude);
    s.dynamicsPeriod = kv.take_double("dynamics_period", s.dynamicsPeriod);
    s.window = kv.take_size("window", s.window);
    s.anomalyFraction = kv.take_double("anomaly_fraction", s.anomalyFraction);
    if (kv.has("burst_windows")) s.burstWindows = kv.take_size_list("burst_windows");
    s.burstMultiplier = kv.take_double("burst_multiplier", s.burstMultiplier);
    s.warmupWindows = kv.take_size("warmup_windows", s.warmupWindows);
    s.validate();
    return s;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    KeyValues kv = KeyValues::load(path);
    SyntheticSpec s = take_synthetic_keys(kv);
    kv.require_all_used();
    return s;
}

TensorShape SyntheticStream::units_shape() const {
    TensorShape shape;
    for (const auto& a : A) shape.units.push_back(static_cast<std::size_t>(a.cols()));
    return shape;
}

SyntheticStream generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    RngHandle rng(spec.seed);
    const std::size_t K = spec.components;
    SyntheticStream out;
    out.start = spec.start;

    out.weights = spec.weights.empty() ? std::vector<double>(K, 1.0) : spec.weights;
    const double wsum = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
    for (double& w : out.weights) w /= wsum;

    for (std::size_t U : spec.units) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(U));
        for (std::size_t k = 0; k < K; ++k) {
            const auto row = static_cast<Eigen::Index>(k);
            if (spec.disjoint) {
                const std::size_t lo = k * U / K, hi = (k + 1) * U / K;
                const Eigen::VectorXd p = dirichlet(hi - lo, spec.concentration, rng);
                A.row(row).segment(static_cast<Eigen::Index>(lo), p.size()) = p.transpose();
            } else {
                A.row(row) = dirichlet(U, spec.concentration, rng).transpose();
            }
        }
        out.A.push_back(std::move(A));
    }
    for (std::size_t m = 0; m < spec.continuous; ++m) {
        Eigen::MatrixXd mu(static_cast<Eigen::Index>(K), 1);
        for (std::size_t k = 0; k < K; ++k)
            mu(static_cast<Eigen::Index>(k), 0) =
                static_cast<double>(k) * spec.modeSpacing + 0.5 * static_cast<double>(m);
        out.means.push_back(std::move(mu));
    }

    const std::size_t expectedWindows = (spec.timestamps + spec.window - 1) / spec.window;
    if (!spec.burstWindows.empty()) {
        out.burstWindows.insert(spec.burstWindows.begin(), spec.burstWindows.end());
    } else if (spec.anomalyFraction > 0.0 && expectedWindows > spec.warmupWindows) {
        std::vector<std::size_t> pool(expectedWindows - spec.warmupWindows);
        std::iota(pool.begin(), pool.end(), spec.warmupWindows);
        const auto n = std::min(pool.size(), static_cast<std::size_t>(std::llround(
                                                 spec.anomalyFraction * static_cast<double>(expectedWindows))));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            out.burstWindows.insert(pool[i]);
        }
    }
    out.burstComponent.resize(expectedWindows);
    for (auto& b : out.burstComponent) b = rng.below(K);

    std::vector<double> pi(K);
    std::normal_distribution<double> noise(0.0, spec.continuousSd);
    auto emit = [&](double time, std::size_t k, bool anomalous) {
        EventRecord r;
        r.timestamp = time;
        for (const auto& A : out.A) {
            const Eigen::VectorXd row = A.row(static_cast<Eigen::Index>(k)).transpose();
            r.cat.push_back(static_cast<UnitId>(
                sample_categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), rng)));
        }
        for (const auto& mu : out.means)
            r.cont.push_back(mu(static_cast<Eigen::Index>(k), 0) + noise(rng.engine()));
        r.label = anomalous;
        out.records.push_back(std::move(r));
        out.components.push_back(static_cast<ComponentId>(k));
    };

    std::size_t emitted = 0;
    for (std::size_t t = 0; t < spec.timestamps; ++t) {
        const double time = static_cast<double>(t) * spec.dt;
        double norm = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double phase = 2.0 * std::numbers::pi *
                                 (time / spec.dynamicsPeriod + static_cast<double>(k) / static_cast<double>(K));
            pi[k] = out.weights[k] * std::exp(spec.dynamicsAmplitude * std::sin(phase));
            norm += pi[k];
        }
        for (double& p : pi) p /= norm;

        std::size_t n;
        if (spec.poisson) {
            std::poisson_distribution<std::size_t> pois(spec.rate);
            n = pois(rng.engine());
        } else {
            n = static_cast<std::size_t>(std::llround(spec.rate));
        }
        if (n == 0) continue;
        const std::size_t w = emitted / spec.window;
        ++emitted;
        for (std::size_t i = 0; i < n; ++i) emit(time, sample_categorical(pi, rng), false);

        if (out.burstWindows.count(w) && w < out.burstComponent.size()) {
            const std::size_t b = out.burstComponent[w];
            const double extraMean = (spec.burstMultiplier - 1.0) * spec.rate * pi[b];
            std::size_t extra;
            if (spec.poisson) {
                std::poisson_distribution<std::size_t> pois(extraMean);
                extra = extraMean > 0.0 ? pois(rng.engine()) : 0;
            } else {
                extra = static_cast<std::size_t>(std::llround(extraMean));
            }
            for (std::size_t i = 0; i < extra; ++i) emit(time, b, true);
        }
    }
    out.windows = (emitted + spec.window - 1) / spec.window;
    for (auto it = out.burstWindows.begin(); it != out.burstWindows.end();)
        it = *it >= out.windows ? out.burstWindows.erase(it) : std::next(it);
    return out;
}

void write_synthetic_csv(const SyntheticStream& s, std::ostream& out) {
    out << "timestamp";
    for (std::size_t m = 0; m < s.A.size(); ++m) out << ",cat" << m;
    for (std::size_t m = 0; m < s.means.size(); ++m) out << ",cont" << m;
    out << ",component,label\n";
    for (std::size_t i = 0; i < s.records.size(); ++i) {
        const EventRecord& r = s.records[i];
        out << num(s.start + r.timestamp);
        for (std::size_t m = 0; m < r.cat.size(); ++m) out << ",a" << m << "u" << r.cat[m];
        for (double v : r.cont) out << ',' << num(v);
        out << ',' << s.components[i] << ',' << (r.label.value_or(false) ? 1 : 0) << '\n';
    }
}

}  // namespace hetstream
