#include "hetstream/detector.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

constexpr double kFloor = 1e-9;

template <typename Observed, typename Expected>
double pearson(const Observed& obs, const Expected& exp) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < obs.rows(); ++i) {
        for (Eigen::Index j = 0; j < obs.cols(); ++j) {
            const double o = static_cast<double>(obs(i, j));
            double e = exp(i, j);
            if (e < kFloor) {
                if (o == 0.0) continue;
                e = kFloor;
            }
            s += (o - e) * (o - e) / e;
        }
    }
    return s;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw NumericError("stream statistics overflow");
    return r;
}

template <typename Acc, typename Inc>
void accumulate(Acc& acc, const Inc& inc) {
    if (acc.rows() != inc.rows() || acc.cols() != inc.cols())
        throw ContractError("update_stats: count shapes differ from the stream statistics");
    for (Eigen::Index i = 0; i < acc.rows(); ++i)
        for (Eigen::Index j = 0; j < acc.cols(); ++j) acc(i, j) = checked_add(acc(i, j), inc(i, j));
}

}  // namespace

ExpectedCounts expected_counts(const CountStats& counts, const StreamStats& stats, double interval) {
    if (!(interval > 0.0) || !std::isfinite(interval))
        throw ContractError("expected_counts: window interval must be positive");
    if (!(stats.totalNormalTime >= 0.0))
        throw ContractError("expected_counts: negative normal time");
    if (stats.sK.size() != counts.nK.size() || stats.sMode.size() != counts.nMode.size() ||
        stats.sGrid.size() != counts.nGrid.size())
        throw ContractError("expected_counts: statistics do not match the counts");
    const double q = interval / (stats.totalNormalTime + interval);
    ExpectedCounts e;
    e.nK = (counts.nK + stats.sK).cast<double>() * q;
    for (std::size_t m = 0; m < counts.nMode.size(); ++m)
        e.nMode.push_back((counts.nMode[m] + stats.sMode[m]).cast<double>() * q);
    for (std::size_t m = 0; m < counts.nGrid.size(); ++m)
        e.nGrid.push_back((counts.nGrid[m] + stats.sGrid[m]).cast<double>() * q);
    return e;
}

double chi_square_score(const CountStats& counts, const ExpectedCounts& expected) {
    double score = pearson(counts.nK, expected.nK);
    for (std::size_t m = 0; m < counts.nMode.size(); ++m)
        score += pearson(counts.nMode[m], expected.nMode[m]);
    for (std::size_t m = 0; m < counts.nGrid.size(); ++m)
        score += pearson(counts.nGrid[m], expected.nGrid[m]);
    return score;
}

long degrees_of_freedom(std::size_t K, std::span<const std::size_t> units,
                        std::span<const std::size_t> grids) {
    if (K < 1) throw ConfigError("degrees_of_freedom: need at least one component");
    long cells = 1;
    for (std::size_t u : units) cells += static_cast<long>(u) - 1;
    for (std::size_t g : grids) cells += static_cast<long>(g) - 1;
    const long dof = static_cast<long>(K) * cells - 1;
    if (dof <= 0) throw ConfigError("degrees_of_freedom: configuration has no free cells");
    return dof;
}

double p_value(double score, long dof) {
    if (dof < 1) throw ContractError("p_value: dof must be >= 1");
    if (std::isnan(score)) throw NumericError("p_value: NaN score");
    if (score <= 0.0) return 1.0;
    if (std::isinf(score)) return 0.0;
    return boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * score);
}

AnomalyVerdict detect(const CountStats& counts, const StreamStats& stats, double interval,
                      const TensorShape& shape, double threshold) {
    AnomalyVerdict v;
    v.score = chi_square_score(counts, expected_counts(counts, stats, interval));
    v.dof = degrees_of_freedom(counts.components(), shape.units, shape.grids);
    v.pValue = p_value(v.score, v.dof);
    v.isAnomaly = v.pValue < threshold;
    return v;
}

StreamStats update_stats(const StreamStats& stats, const CountStats& counts, double interval,
                         const AnomalyVerdict& verdict) {
    if (verdict.isAnomaly) return stats;
    StreamStats next = stats;
    next.totalNormalTime += interval;
    accumulate(next.sK, counts.nK);
    for (std::size_t m = 0; m < next.sMode.size(); ++m) accumulate(next.sMode[m], counts.nMode[m]);
    for (std::size_t m = 0; m < next.sGrid.size(); ++m) accumulate(next.sGrid[m], counts.nGrid[m]);
    return next;
}

}  // namespace hetstream
