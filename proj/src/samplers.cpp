#include "hetstream/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;  // switch point between the two proposal pieces

// log Phi(x), standard normal CDF.
double log_norm_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// n-th term of the alternating series for the J*(1, 0) density.
double series_term(int n, double x) {
    const double k = (n + 0.5) * kPi;
    if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
    if (x > 0.0) {
        const double e = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                         2.0 * (n + 0.5) * (n + 0.5) / x;
        return std::exp(e);
    }
    return 0.0;
}

// Probability of drawing from the truncated-exponential piece of the proposal.
double exponential_mass(double z) {
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double b = std::sqrt(1.0 / kTrunc) * (kTrunc * z - 1.0);
    const double a = -std::sqrt(1.0 / kTrunc) * (kTrunc * z + 1.0);
    const double x0 = std::log(fz) + fz * kTrunc;
    const double xb = x0 - z + log_norm_cdf(b);
    const double xa = x0 + z + log_norm_cdf(a);
    const double qOverP = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
    return 1.0 / (1.0 + qOverP);
}

// Inverse-Gaussian(1/z, 1) truncated to (0, kTrunc].
double truncated_inverse_gaussian(double z, RngHandle& rng) {
    double x = kTrunc + 1.0;
    if (1.0 / kTrunc > z) {
        double accept = 0.0;
        while (rng.uniform() > accept) {
            double e1 = rng.exponential();
            double e2 = rng.exponential();
            while (e1 * e1 > 2.0 * e2 / kTrunc) {
                e1 = rng.exponential();
                e2 = rng.exponential();
            }
            x = 1.0 + e1 * kTrunc;
            x = kTrunc / (x * x);
            accept = std::exp(-0.5 * z * z * x);
        }
    } else {
        const double mu = 1.0 / z;
        while (x > kTrunc) {
            double y = rng.normal();
            y *= y;
            const double halfMu = 0.5 * mu;
            const double muY = mu * y;
            x = mu + halfMu * muY - halfMu * std::sqrt(4.0 * muY + muY * muY);
            if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
        }
    }
    return x;
}

}  // namespace

RngHandle RngHandle::split(std::uint64_t stream) const {
    return RngHandle(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

double RngHandle::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double RngHandle::normal() { return normal_(engine_); }

double RngHandle::exponential() { return -std::log1p(-uniform()); }

std::uint64_t RngHandle::below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

std::size_t sample_categorical(std::span<const double> weights, RngHandle& rng) {
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0)
            throw NumericError("sample_categorical: weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw NumericError("sample_categorical: weights sum to zero");
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = i;
        if (target < acc) return i;
    }
    return last;
}

std::size_t sample_categorical_log(std::span<const double> logWeights, RngHandle& rng) {
    if (logWeights.empty()) throw NumericError("sample_categorical_log: no weights");
    const double mx = *std::max_element(logWeights.begin(), logWeights.end());
    if (!std::isfinite(mx)) throw NumericError("sample_categorical_log: non-finite log-weights");
    thread_local std::vector<double> w;
    w.resize(logWeights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logWeights[i] - mx);
    return sample_categorical(w, rng);
}

double sample_polya_gamma_1(double c, RngHandle& rng) {
    const double z = 0.5 * std::abs(c);
    const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
    const double pExp = exponential_mass(z);
    for (;;) {
        const double x = rng.uniform() < pExp ? kTrunc + rng.exponential() / fz
                                              : truncated_inverse_gaussian(z, rng);
        double s = series_term(0, x);
        const double y = rng.uniform() * s;
        for (int n = 1;; ++n) {
            if (n % 2 == 1) {
                s -= series_term(n, x);
                if (y <= s) return 0.25 * x;
            } else {
                s += series_term(n, x);
                if (y > s) break;
            }
        }
    }
}

double polya_gamma_mean(double b, double c) {
    const double x = std::abs(c);
    if (x < 1e-4) return 0.25 * b * (1.0 - x * x / 12.0);
    return b * std::tanh(0.5 * x) / (2.0 * x);
}

double polya_gamma_var(double b, double c) {
    const double x = std::abs(c);
    if (x < 1e-3) return b / 24.0 * (1.0 - x * x / 5.0);
    // (sinh x - x) / cosh^2(x/2) rewritten to avoid overflow.
    const double sech = 1.0 / std::cosh(0.5 * x);
    return b / (4.0 * x * x * x) * (2.0 * std::tanh(0.5 * x) - x * sech * sech);
}

double sample_polya_gamma(double b, double c, RngHandle& rng) {
    if (!(b > 0.0) || !std::isfinite(b)) throw ContractError("sample_polya_gamma: b must be > 0");
    if (!std::isfinite(c)) throw NumericError("sample_polya_gamma: non-finite tilt");
    if (b <= 170.0 && b == std::floor(b)) {
        double sum = 0.0;
        for (int i = 0; i < static_cast<int>(b); ++i) sum += sample_polya_gamma_1(c, rng);
        return sum;
    }
    const double mean = polya_gamma_mean(b, c);
    const double sd = std::sqrt(polya_gamma_var(b, c));
    for (;;) {
        const double x = mean + sd * rng.normal();
        if (x > 0.0) return x;
    }
}

}  // namespace hetstream
