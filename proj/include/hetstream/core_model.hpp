#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hetstream/gp_ssm.hpp"

namespace hetstream {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

using UnitId = std::uint32_t;
using GridId = std::uint32_t;
using ComponentId = std::uint32_t;

// One timestamped observation. `label` is ground truth for evaluation and is
// never read by inference or detection.
struct EventRecord {
    double timestamp = 0.0;
    std::vector<UnitId> cat;
    std::vector<double> cont;
    std::optional<bool> label;
};

// Attribute cardinalities: U per categorical attribute, G per continuous one.
struct TensorShape {
    std::vector<std::size_t> units;
    std::vector<std::size_t> grids;

    std::size_t categorical() const { return units.size(); }
    std::size_t continuous() const { return grids.size(); }
};

// A window of `slots()` distinct timestamps. Records of slot t live in
// records[offsets[t] .. offsets[t+1]).
struct CurrentTensor {
    std::vector<double> timestamps;
    std::vector<std::size_t> offsets{0};
    std::vector<EventRecord> records;
    double interval = 0.0;  // seconds since the previous window's last timestamp

    std::size_t slots() const { return timestamps.size(); }
    std::size_t size() const { return records.size(); }
    std::size_t count_at(std::size_t t) const { return offsets[t + 1] - offsets[t]; }

    // Append a record; opens a new slot when the timestamp differs from the last one.
    void push(EventRecord record);

    // Throws ContractError when an invariant is broken.
    void validate(const TensorShape& shape) const;
};

struct CountStats {
    CountVector nK;
    std::vector<CountMatrix> nMode;
    std::vector<CountMatrix> nGrid;
    CountMatrix nTK;

    static CountStats zeros(std::size_t K, const TensorShape& shape, std::size_t slots);

    std::size_t components() const { return static_cast<std::size_t>(nK.size()); }
    std::int64_t total() const { return nK.sum(); }

    // Add `delta` (+1 / -1) for one record assigned to component k at slot t.
    void update(std::size_t t, ComponentId k, std::span<const UnitId> cat,
                std::span<const GridId> grid, std::int64_t delta);

    bool operator==(const CountStats& other) const;
};

// True when all marginal identities of CountStats hold against the tensor.
bool is_consistent(const CountStats& counts, const CurrentTensor& tensor);

// z[i] is the component of record i; gridIds is row-major N x M2.
CountStats counts_from_assignments(const CurrentTensor& tensor, const TensorShape& shape,
                                   std::size_t K, std::span<const ComponentId> z,
                                   std::span<const GridId> gridIds);

struct ModelParams {
    std::vector<Eigen::MatrixXd> A;     // K x U per categorical attribute
    std::vector<Eigen::MatrixXd> C;     // K x G per continuous attribute, log-density
    std::vector<Eigen::MatrixXd> Ahat;  // prior means for the current window
    std::vector<Eigen::MatrixXd> Chat;

    // Smoothed B states, B[k][t], for the last processed window.
    std::vector<std::vector<GaussState>> B;
    std::vector<double> bTimestamps;

    // Last smoothed state per component, carried into the next window.
    std::vector<GaussState> carry;
    std::optional<double> carryTime;

    std::size_t components() const { return B.empty() ? carry.size() : B.size(); }

    // Uniform Ahat rows and all-zero Chat; no carried B state.
    static ModelParams initial(std::size_t K, const TensorShape& shape);

    // Ahat <- A, Chat <- C ahead of the next window.
    void snapshot();

    // softmax(H m^s) per timestamp, Tc x K.
    Eigen::MatrixXd component_weights() const;
};

struct StreamStats {
    double totalNormalTime = 0.0;
    CountVector sK;
    std::vector<CountMatrix> sMode;
    std::vector<CountMatrix> sGrid;

    static StreamStats zeros(std::size_t K, const TensorShape& shape);

    bool operator==(const StreamStats& other) const = default;
};

struct KernelHyper {
    std::optional<double> lengthscale;  // unset: derived from data spacing
    double signalVar = 1.0;
};

struct Config {
    std::size_t K = 20;
    std::size_t defaultGrids = 300;
    std::vector<std::size_t> grids;  // per continuous attribute; empty -> defaultGrids
    std::size_t epochs = 30;
    std::size_t windowSize = 30;
    std::vector<double> alpha;  // per categorical attribute; empty -> 1/K
    double sigma2C = 1.0;
    double sigma2Noise = 0.1;
    KernelHyper kernelB;
    KernelHyper kernelC;
    int derivativeOrder = 1;
    std::size_t lbfgsMaxIter = 100;
    double pThreshold = 0.05;
    std::uint64_t seed = 0;

    double alpha_for(std::size_t m1) const;
    std::size_t grids_for(std::size_t m2) const;

    // Throws ConfigError.
    void validate() const;
};

Config default_config();

}  // namespace hetstream
