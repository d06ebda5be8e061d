#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace hetstream {

// Seeded generator. Identical seed and call sequence give identical draws.
class RngHandle {
public:
    explicit RngHandle(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Deterministic child generator for an independent worker or stage.
    RngHandle split(std::uint64_t stream) const;

    double uniform();                 // [0, 1)
    double normal();                  // N(0, 1)
    double exponential();             // Exp(1)
    std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

// Index i with probability weights[i] / sum(weights).
std::size_t sample_categorical(std::span<const double> weights, RngHandle& rng);

// Same, from unnormalized log-weights (max-shifted internally).
std::size_t sample_categorical_log(std::span<const double> logWeights, RngHandle& rng);

// Polya-Gamma PG(b, c). Integer b <= 170 sums exact PG(1, c) draws; larger or
// fractional b falls back to a moment-matched normal truncated at zero.
double sample_polya_gamma(double b, double c, RngHandle& rng);

// Exact PG(1, c) draw (Devroye-style alternating-series rejection).
double sample_polya_gamma_1(double c, RngHandle& rng);

// Closed-form moments of PG(b, c).
double polya_gamma_mean(double b, double c);
double polya_gamma_var(double b, double c);

}  // namespace hetstream
