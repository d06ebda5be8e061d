#pragma once

// Chi-squared goodness-of-fit test of a window's component counts against the
// rates accumulated over all previous normal windows.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "hetstream/core_model.hpp"

namespace hetstream {

struct ExpectedCounts {
    Eigen::VectorXd nK;
    std::vector<Eigen::MatrixXd> nMode;
    std::vector<Eigen::MatrixXd> nGrid;
};

struct AnomalyVerdict {
    double score = 0.0;
    long dof = 0;
    double pValue = 1.0;
    bool isAnomaly = false;
};

// E[N] = (N + S) * interval / (T + interval) for every count family.
ExpectedCounts expected_counts(const CountStats& counts, const StreamStats& stats, double interval);

// Sum of Pearson terms over all cells. Expected values below 1e-9 are floored
// at 1e-9 when the cell is occupied and skipped when it is empty.
double chi_square_score(const CountStats& counts, const ExpectedCounts& expected);

// K * (sum U + sum G - M1 - M2 + 1) - 1; throws ConfigError when not positive.
long degrees_of_freedom(std::size_t K, std::span<const std::size_t> units,
                        std::span<const std::size_t> grids);

// Upper tail P(X > score) of a chi-squared distribution with `dof` degrees of freedom.
double p_value(double score, long dof);

AnomalyVerdict detect(const CountStats& counts, const StreamStats& stats, double interval,
                      const TensorShape& shape, double threshold = 0.05);

// Normal windows are folded into the history; anomalous ones leave it untouched.
StreamStats update_stats(const StreamStats& stats, const CountStats& counts, double interval,
                         const AnomalyVerdict& verdict);

}  // namespace hetstream
