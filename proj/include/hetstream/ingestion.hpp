#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hetstream/core_model.hpp"

namespace hetstream {

// Contiguous intervals [edges[g], edges[g+1]) tiling [edges.front(), edges.back()].
struct GridSpec {
    std::vector<double> edges;

    std::size_t size() const { return edges.empty() ? 0 : edges.size() - 1; }
    double width(std::size_t g) const { return edges[g + 1] - edges[g]; }
    double center(std::size_t g) const { return 0.5 * (edges[g] + edges[g + 1]); }
    std::vector<double> widths() const;
    std::vector<double> centers() const;
};

// Equal-width grid over the 0.1%..99.9% sample quantiles, first and last
// intervals stretched to the sample min / max.
GridSpec build_grid(std::span<const double> samples, std::size_t G);

// Clamps: below the range -> 0, above -> G-1.
GridId locate_grid(double x, const GridSpec& spec);

// Dense string <-> id bijection for one categorical attribute.
class Vocab {
public:
    UnitId intern(std::string_view name);
    std::optional<UnitId> find(std::string_view name) const;
    const std::string& name(UnitId id) const { return names_.at(id); }
    std::size_t size() const { return names_.size(); }

private:
    std::unordered_map<std::string, UnitId> ids_;
    std::vector<std::string> names_;
};

// Groups a timestamp-ordered record stream into windows of `Tc` distinct
// timestamps. A window's interval runs from the previous window's last
// timestamp; the first window starts one median gap before its first timestamp.
class Windower {
public:
    explicit Windower(std::size_t Tc);

    // Returns the completed window when `record` opens a new one.
    std::optional<CurrentTensor> push(EventRecord record);

    // Flushes the trailing (possibly partial) window.
    std::optional<CurrentTensor> finish();

private:
    CurrentTensor close();

    std::size_t Tc_;
    CurrentTensor current_;
    std::optional<double> prevLast_;
};

std::vector<CurrentTensor> window_stream(std::span<const EventRecord> records, std::size_t Tc);

struct ColumnRoles {
    std::string timestamp;
    std::vector<std::string> categorical;
    std::vector<std::string> continuous;
    std::optional<std::string> label;
};

// RFC 4180 field splitting (quoted fields, doubled quotes).
std::vector<std::string> split_csv_line(std::string_view line);

// Epoch seconds ("1514764800.25") or RFC 3339 ("2018-01-01T00:00:00.25Z").
double parse_timestamp(std::string_view text);

// Reads event records from CSV with a header row. Timestamps are returned
// relative to the first record; `origin()` recovers absolute seconds.
class CsvEventReader {
public:
    // Units missing from `vocabs` are interned when `growVocab` is set, else rejected.
    CsvEventReader(std::istream& in, const ColumnRoles& roles, std::vector<Vocab>& vocabs,
                   bool growVocab);

    std::optional<EventRecord> next();

    std::size_t line() const { return line_; }
    std::optional<double> origin() const { return origin_; }

private:
    std::istream& in_;
    std::vector<Vocab>& vocabs_;
    bool growVocab_;
    std::size_t line_ = 0;
    std::size_t width_ = 0;
    std::size_t tsCol_ = 0;
    std::vector<std::size_t> catCols_;
    std::vector<std::size_t> contCols_;
    std::optional<std::size_t> labelCol_;
    std::optional<double> origin_;
    double lastTime_ = 0.0;
};

// One pass over the input collecting every categorical unit.
std::vector<Vocab> scan_vocabularies(std::istream& in, const ColumnRoles& roles);

}  // namespace hetstream
