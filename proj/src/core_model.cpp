#include "hetstream/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {

void CurrentTensor::push(EventRecord record) {
    if (timestamps.empty() || record.timestamp != timestamps.back()) {
        if (!timestamps.empty() && record.timestamp < timestamps.back()) {
            throw OrderingError("CurrentTensor::push: timestamp goes backwards");
        }
        timestamps.push_back(record.timestamp);
        offsets.push_back(offsets.back());
    }
    records.push_back(std::move(record));
    ++offsets.back();
}

void CurrentTensor::validate(const TensorShape& shape) const {
    if (offsets.size() != timestamps.size() + 1 || offsets.front() != 0 ||
        offsets.back() != records.size()) {
        throw ContractError("CurrentTensor: slot offsets do not cover the records");
    }
    for (std::size_t t = 1; t < timestamps.size(); ++t) {
        if (!(timestamps[t] > timestamps[t - 1]))
            throw ContractError("CurrentTensor: timestamps must be strictly increasing");
    }
    if (!records.empty() && !(interval > 0.0))
        throw ContractError("CurrentTensor: interval must be positive");
    for (std::size_t t = 0; t < slots(); ++t) {
        for (std::size_t i = offsets[t]; i < offsets[t + 1]; ++i) {
            const EventRecord& r = records[i];
            if (r.timestamp != timestamps[t])
                throw ContractError("CurrentTensor: record timestamp differs from its slot");
            if (r.cat.size() != shape.categorical() || r.cont.size() != shape.continuous())
                throw ContractError("CurrentTensor: record arity does not match the shape");
            for (std::size_t m = 0; m < r.cat.size(); ++m)
                if (r.cat[m] >= shape.units[m])
                    throw ContractError("CurrentTensor: unit id out of range");
            for (double v : r.cont)
                if (!std::isfinite(v)) throw ContractError("CurrentTensor: non-finite value");
        }
    }
}

CountStats CountStats::zeros(std::size_t K, const TensorShape& shape, std::size_t slots) {
    CountStats c;
    const auto k = static_cast<Eigen::Index>(K);
    c.nK = CountVector::Zero(k);
    for (std::size_t u : shape.units)
        c.nMode.push_back(CountMatrix::Zero(k, static_cast<Eigen::Index>(u)));
    for (std::size_t g : shape.grids)
        c.nGrid.push_back(CountMatrix::Zero(k, static_cast<Eigen::Index>(g)));
    c.nTK = CountMatrix::Zero(static_cast<Eigen::Index>(slots), k);
    return c;
}

void CountStats::update(std::size_t t, ComponentId k, std::span<const UnitId> cat,
                        std::span<const GridId> grid, std::int64_t delta) {
    nK(k) += delta;
    nTK(static_cast<Eigen::Index>(t), k) += delta;
    for (std::size_t m = 0; m < cat.size(); ++m) nMode[m](k, cat[m]) += delta;
    for (std::size_t m = 0; m < grid.size(); ++m) nGrid[m](k, grid[m]) += delta;
}

bool CountStats::operator==(const CountStats& o) const {
    if (nK != o.nK || nTK.rows() != o.nTK.rows() || nTK != o.nTK) return false;
    if (nMode.size() != o.nMode.size() || nGrid.size() != o.nGrid.size()) return false;
    for (std::size_t m = 0; m < nMode.size(); ++m)
        if (nMode[m].cols() != o.nMode[m].cols() || nMode[m] != o.nMode[m]) return false;
    for (std::size_t m = 0; m < nGrid.size(); ++m)
        if (nGrid[m].cols() != o.nGrid[m].cols() || nGrid[m] != o.nGrid[m]) return false;
    return true;
}

bool is_consistent(const CountStats& c, const CurrentTensor& tensor) {
    if ((c.nK.array() < 0).any() || (c.nTK.array() < 0).any()) return false;
    if (c.total() != static_cast<std::int64_t>(tensor.size())) return false;
    if (c.nTK.rows() != static_cast<Eigen::Index>(tensor.slots())) return false;
    for (std::size_t t = 0; t < tensor.slots(); ++t)
        if (c.nTK.row(static_cast<Eigen::Index>(t)).sum() !=
            static_cast<std::int64_t>(tensor.count_at(t)))
            return false;
    if (CountVector(c.nTK.colwise().sum().transpose()) != c.nK) return false;
    for (const auto* family : {&c.nMode, &c.nGrid}) {
        for (const CountMatrix& M : *family) {
            if ((M.array() < 0).any()) return false;
            if (CountVector(M.rowwise().sum()) != c.nK) return false;
        }
    }
    return true;
}

CountStats counts_from_assignments(const CurrentTensor& tensor, const TensorShape& shape,
                                   std::size_t K, std::span<const ComponentId> z,
                                   std::span<const GridId> gridIds) {
    const std::size_t n = tensor.size();
    const std::size_t m2 = shape.continuous();
    if (z.size() != n || gridIds.size() != n * m2)
        throw ContractError("counts_from_assignments: assignment arrays do not match the tensor");
    CountStats c = CountStats::zeros(K, shape, tensor.slots());
    for (std::size_t t = 0; t < tensor.slots(); ++t) {
        for (std::size_t i = tensor.offsets[t]; i < tensor.offsets[t + 1]; ++i) {
            if (z[i] >= K) throw ContractError("counts_from_assignments: component id out of range");
            const auto& cat = tensor.records[i].cat;
            if (cat.size() != shape.categorical())
                throw ContractError("counts_from_assignments: record arity mismatch");
            for (std::size_t m = 0; m < cat.size(); ++m)
                if (cat[m] >= shape.units[m])
                    throw ContractError("counts_from_assignments: unit id out of range");
            const auto grid = gridIds.subspan(i * m2, m2);
            for (std::size_t m = 0; m < m2; ++m)
                if (grid[m] >= shape.grids[m])
                    throw ContractError("counts_from_assignments: grid id out of range");
            c.update(t, z[i], cat, grid, +1);
        }
    }
    return c;
}

ModelParams ModelParams::initial(std::size_t K, const TensorShape& shape) {
    ModelParams p;
    const auto k = static_cast<Eigen::Index>(K);
    for (std::size_t u : shape.units) {
        const auto cols = static_cast<Eigen::Index>(u);
        p.Ahat.push_back(Eigen::MatrixXd::Constant(k, cols, 1.0 / static_cast<double>(u)));
    }
    for (std::size_t g : shape.grids)
        p.Chat.push_back(Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(g)));
    p.A = p.Ahat;
    p.C = p.Chat;
    p.carry.assign(K, GaussState{});
    return p;
}

void ModelParams::snapshot() {
    Ahat = A;
    Chat = C;
}

Eigen::MatrixXd ModelParams::component_weights() const {
    const auto K = static_cast<Eigen::Index>(B.size());
    const auto T = static_cast<Eigen::Index>(bTimestamps.size());
    Eigen::MatrixXd w(T, K);
    for (Eigen::Index t = 0; t < T; ++t) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) mx = std::max(mx, B[k][t].mean());
        double z = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) z += (w(t, k) = std::exp(B[k][t].mean() - mx));
        w.row(t) /= z;
    }
    return w;
}

StreamStats StreamStats::zeros(std::size_t K, const TensorShape& shape) {
    const CountStats c = CountStats::zeros(K, shape, 0);
    StreamStats s;
    s.sK = c.nK;
    s.sMode = c.nMode;
    s.sGrid = c.nGrid;
    return s;
}

double Config::alpha_for(std::size_t m1) const {
    if (alpha.empty()) return 1.0 / static_cast<double>(K);
    return alpha.size() == 1 ? alpha.front() : alpha.at(m1);
}

std::size_t Config::grids_for(std::size_t m2) const {
    if (grids.empty()) return defaultGrids;
    return grids.size() == 1 ? grids.front() : grids.at(m2);
}

void Config::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (K < 1) fail("components must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (windowSize < 1) fail("window must be >= 1");
    if (defaultGrids < 2) fail("grids must be >= 2");
    for (std::size_t g : grids)
        if (g < 2) fail("grids must be >= 2");
    for (double a : alpha)
        if (!(a > 0.0) || !std::isfinite(a)) fail("alpha must be positive");
    if (!(sigma2C > 0.0) || !std::isfinite(sigma2C)) fail("sigma2_c must be positive");
    if (!(sigma2Noise > 0.0) || !std::isfinite(sigma2Noise)) fail("sigma2_noise must be positive");
    for (const KernelHyper* h : {&kernelB, &kernelC}) {
        if (!(h->signalVar > 0.0) || !std::isfinite(h->signalVar))
            fail("kernel signal variance must be positive");
        if (h->lengthscale && !(*h->lengthscale > 0.0)) fail("kernel lengthscale must be positive");
    }
    if (derivativeOrder != 1) fail("only derivative order 1 (Matern-3/2) is supported");
    if (lbfgsMaxIter < 1) fail("lbfgs_max_iter must be >= 1");
    if (!(pThreshold > 0.0 && pThreshold < 1.0)) fail("p_threshold must lie in (0, 1)");
}

Config default_config() { return Config{}; }

}  // namespace hetstream
