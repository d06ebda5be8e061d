#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "hetstream/stream.hpp"

namespace hetstream {

// Area under the ROC curve; tied scores share their average rank.
// Throws ContractError when all labels are equal.
double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Area under the precision-recall curve by the trapezoid rule, starting at
// (recall 0, precision 1). Tied scores enter the curve as one step.
double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels);

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

// A window is anomalous iff it holds more than `threshold` anomalous records.
std::vector<std::uint8_t> label_windows(std::span<const std::size_t> anomalousCounts,
                                        std::size_t threshold);

struct Evaluation {
    double aucRoc = 0.0;
    double aucPr = 0.0;
    std::size_t windows = 0;
    std::size_t positives = 0;
};

Evaluation evaluate(std::span<const WindowReport> reports, std::span<const std::size_t> anomalousCounts,
                    std::size_t threshold);

std::vector<WindowReport> read_reports(std::istream& in);

// Counts labelled records of `data` falling inside each report's time range.
// Times are compared relative to the first record, as the reports store them.
std::vector<std::size_t> anomalous_counts(std::istream& data, const std::string& timestampColumn,
                                          const std::string& labelColumn,
                                          std::span<const WindowReport> reports);

}  // namespace hetstream
