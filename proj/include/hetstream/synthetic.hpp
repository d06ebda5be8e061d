#pragma once

// Labelled synthetic streams: K planted components with categorical
// multinomials, Gaussian continuous modes, smooth mixing dynamics and
// burst windows in which one component's rate is multiplied.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "hetstream/core_model.hpp"
#include "hetstream/keyvalue.hpp"

namespace hetstream {

struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::size_t timestamps = 1500;
    double dt = 1.0;
    double start = 0.0;  // absolute time of the first timestamp in the CSV
    bool poisson = false;
    double rate = 30.0;  // records per timestamp before bursts
    std::size_t components = 3;
    std::vector<double> weights;            // empty -> uniform
    std::vector<std::size_t> units{15};     // per categorical attribute
    bool disjoint = true;                   // components own disjoint unit blocks
    double concentration = 1.0;             // Dirichlet parameter of each A row
    std::size_t continuous = 1;
    double modeSpacing = 6.0;
    double continuousSd = 1.0;
    double dynamicsAmplitude = 0.0;
    double dynamicsPeriod = 300.0;
    std::size_t window = 30;
    double anomalyFraction = 0.1;
    std::vector<std::size_t> burstWindows;  // explicit; overrides anomalyFraction
    double burstMultiplier = 20.0;
    std::size_t warmupWindows = 5;

    void validate() const;
};

// Consumes the generator keys; leaves others in `kv` untouched.
SyntheticSpec take_synthetic_keys(KeyValues& kv);
SyntheticSpec load_synthetic_spec(const std::string& path);

struct SyntheticStream {
    std::vector<EventRecord> records;       // timestamps relative to `start`, unit ids as generated
    std::vector<ComponentId> components;    // true component per record
    std::vector<double> weights;            // base mixing weights
    std::vector<Eigen::MatrixXd> A;         // K x U per categorical attribute
    std::vector<Eigen::MatrixXd> means;     // K x 1 per continuous attribute
    std::set<std::size_t> burstWindows;
    std::vector<std::size_t> burstComponent;  // per window; meaningful for burst windows
    std::size_t windows = 0;
    double start = 0.0;

    TensorShape units_shape() const;
};

SyntheticStream generate_synthetic(const SyntheticSpec& spec);

// Columns: timestamp, cat0.., cont0.., component, label.
void write_synthetic_csv(const SyntheticStream& stream, std::ostream& out);

}  // namespace hetstream
