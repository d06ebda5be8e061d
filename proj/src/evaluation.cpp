#include "hetstream/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

void check_labels(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::size_t& pos, std::size_t& neg) {
    if (scores.size() != labels.size()) throw ContractError("auc: scores and labels differ in length");
    pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
    neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw ContractError("auc: undefined with a single label class");
    for (double s : scores)
        if (std::isnan(s)) throw ContractError("auc: NaN score");
}

// Indices ordered by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return idx;
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    std::size_t pos, neg;
    check_labels(scores, labels, pos, neg);
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rankSum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t q = i; q < j; ++q)
            if (labels[idx[q]]) rankSum += avg;
        i = j;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (rankSum - p * (p + 1.0) / 2.0) / (p * n);
}

double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    std::size_t pos, neg;
    check_labels(scores, labels, pos, neg);
    const auto idx = descending(scores);
    double tp = 0.0, fp = 0.0;
    double prevRecall = 0.0, prevPrecision = 1.0, area = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (labels[idx[j]] ? tp : fp) += 1.0;
            ++j;
        }
        const double recall = tp / static_cast<double>(pos);
        const double precision = tp / (tp + fp);
        area += (recall - prevRecall) * 0.5 * (precision + prevPrecision);
        prevRecall = recall;
        prevPrecision = precision;
        i = j;
    }
    return area;
}

double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.size() != b.size()) throw ContractError("adjusted_rand_index: label vectors differ in length");
    const double n = static_cast<double>(a.size());
    if (a.size() < 2) return 1.0;
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
    std::map<std::uint32_t, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    double sumJoint = 0.0, sumA = 0.0, sumB = 0.0;
    for (const auto& [k, v] : joint) sumJoint += choose2(v);
    for (const auto& [k, v] : ra) sumA += choose2(v);
    for (const auto& [k, v] : rb) sumB += choose2(v);
    const double expected = sumA * sumB / choose2(n);
    const double maxIndex = 0.5 * (sumA + sumB);
    if (maxIndex == expected) return 1.0;  // both partitions trivial
    return (sumJoint - expected) / (maxIndex - expected);
}

std::vector<std::uint8_t> label_windows(std::span<const std::size_t> counts, std::size_t threshold) {
    std::vector<std::uint8_t> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] > threshold ? 1 : 0;
    return out;
}

Evaluation evaluate(std::span<const WindowReport> reports, std::span<const std::size_t> counts,
                    std::size_t threshold) {
    if (reports.size() != counts.size()) throw ContractError("evaluate: reports and counts differ in length");
    std::vector<double> scores;
    for (const auto& r : reports) scores.push_back(r.verdict.score);
    const auto labels = label_windows(counts, threshold);
    Evaluation e;
    e.windows = reports.size();
    e.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    e.aucRoc = auc_roc(scores, labels);
    e.aucPr = auc_pr(scores, labels);
    return e;
}

std::vector<WindowReport> read_reports(std::istream& in) {
    std::vector<WindowReport> out;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("invalid JSON: ") + e.what(), lineNo);
        }
        out.push_back(report_from_json(j));
        if (out.back().window != out.size() - 1)
            throw SchemaError("reports out of order", lineNo);
    }
    return out;
}

std::vector<std::size_t> anomalous_counts(std::istream& data, const std::string& timestampColumn,
                                          const std::string& labelColumn,
                                          std::span<const WindowReport> reports) {
    ColumnRoles roles;
    roles.timestamp = timestampColumn;
    roles.label = labelColumn;
    std::vector<Vocab> vocabs;
    CsvEventReader reader(data, roles, vocabs, false);
    std::vector<std::size_t> counts(reports.size(), 0);
    std::size_t w = 0;
    while (auto rec = reader.next()) {
        while (w < reports.size() && rec->timestamp > reports[w].tLast) ++w;
        if (w == reports.size()) throw SchemaError("record past the last reported window", reader.line());
        if (rec->timestamp < reports[w].tFirst)
            throw SchemaError("record outside every reported window", reader.line());
        if (rec->label.value_or(false)) ++counts[w];
    }
    return counts;
}

}  // namespace hetstream
