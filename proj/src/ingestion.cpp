#include "hetstream/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

double quantile_sorted(const std::vector<double>& x, double p) {
    const double h = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

int parse_digits(std::string_view s, std::size_t pos, std::size_t n) {
    if (pos + n > s.size()) throw SchemaError("malformed timestamp '" + std::string(s) + "'");
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + n, v);
    if (ec != std::errc() || ptr != s.data() + pos + n)
        throw SchemaError("malformed timestamp '" + std::string(s) + "'");
    return v;
}

double median_gap(const std::vector<double>& ts) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
    return gaps[gaps.size() / 2];
}

}  // namespace

std::vector<double> GridSpec::widths() const {
    std::vector<double> w(size());
    for (std::size_t g = 0; g < w.size(); ++g) w[g] = width(g);
    return w;
}

std::vector<double> GridSpec::centers() const {
    std::vector<double> c(size());
    for (std::size_t g = 0; g < c.size(); ++g) c[g] = center(g);
    return c;
}

GridSpec build_grid(std::span<const double> samples, std::size_t G) {
    if (G < 2) throw ConfigError("build_grid: need at least 2 grids");
    std::vector<double> x;
    x.reserve(samples.size());
    for (double v : samples)
        if (std::isfinite(v)) x.push_back(v);
    if (x.size() < 2) throw ContractError("build_grid: need at least two finite samples");
    std::sort(x.begin(), x.end());
    const double mn = x.front();
    const double mx = x.back();
    if (!(mx > mn)) throw ContractError("build_grid: degenerate range, all samples identical");

    double lo = quantile_sorted(x, 0.001);
    double hi = quantile_sorted(x, 0.999);
    if (!(hi > lo)) {
        lo = mn;
        hi = mx;
    }
    const double w = (hi - lo) / static_cast<double>(G);
    GridSpec spec;
    spec.edges.resize(G + 1);
    for (std::size_t g = 0; g <= G; ++g) spec.edges[g] = lo + static_cast<double>(g) * w;
    spec.edges.front() = std::min(lo, mn);
    spec.edges.back() = std::max(hi, mx);
    return spec;
}

GridId locate_grid(double x, const GridSpec& spec) {
    const auto first = spec.edges.begin() + 1;
    const auto last = spec.edges.end() - 1;
    return static_cast<GridId>(std::upper_bound(first, last, x) - first);
}

UnitId Vocab::intern(std::string_view name) {
    if (auto id = find(name)) return *id;
    const auto id = static_cast<UnitId>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
}

std::optional<UnitId> Vocab::find(std::string_view name) const {
    const auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

Windower::Windower(std::size_t Tc) : Tc_(Tc) {
    if (Tc < 1) throw ConfigError("window size must be >= 1");
}

std::optional<CurrentTensor> Windower::push(EventRecord record) {
    if (!current_.timestamps.empty() && record.timestamp < current_.timestamps.back())
        throw OrderingError("records are not sorted by timestamp");
    if (prevLast_ && current_.timestamps.empty() && record.timestamp <= *prevLast_)
        throw OrderingError("records are not sorted by timestamp");
    std::optional<CurrentTensor> done;
    if (current_.slots() == Tc_ && record.timestamp != current_.timestamps.back())
        done = close();
    current_.push(std::move(record));
    return done;
}

std::optional<CurrentTensor> Windower::finish() {
    if (current_.timestamps.empty()) return std::nullopt;
    return close();
}

CurrentTensor Windower::close() {
    CurrentTensor out = std::move(current_);
    current_ = CurrentTensor{};
    double start;
    if (prevLast_) {
        start = *prevLast_;
    } else if (out.slots() > 1) {
        start = out.timestamps.front() - median_gap(out.timestamps);
    } else {
        start = out.timestamps.front() - 1.0;
    }
    out.interval = out.timestamps.back() - start;
    prevLast_ = out.timestamps.back();
    return out;
}

std::vector<CurrentTensor> window_stream(std::span<const EventRecord> records, std::size_t Tc) {
    Windower w(Tc);
    std::vector<CurrentTensor> out;
    for (const EventRecord& r : records)
        if (auto t = w.push(r)) out.push_back(std::move(*t));
    if (auto t = w.finish()) out.push_back(std::move(*t));
    return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) throw SchemaError("unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

double parse_timestamp(std::string_view text) {
    const std::string_view s = trim(text);
    if (auto v = parse_double(s)) {
        if (!std::isfinite(*v)) throw SchemaError("non-finite timestamp");
        return *v;
    }
    // YYYY-MM-DD[T ]HH:MM:SS[.frac](Z|+HH:MM|-HH:MM)
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't' &&
                                                         s[10] != ' ') ||
        s[13] != ':' || s[16] != ':') {
        throw SchemaError("malformed timestamp '" + std::string(s) + "'");
    }
    using namespace std::chrono;
    const year_month_day ymd{year{parse_digits(s, 0, 4)},
                             month{static_cast<unsigned>(parse_digits(s, 5, 2))},
                             day{static_cast<unsigned>(parse_digits(s, 8, 2))}};
    if (!ymd.ok()) throw SchemaError("invalid date in timestamp '" + std::string(s) + "'");
    const int hh = parse_digits(s, 11, 2);
    const int mm = parse_digits(s, 14, 2);
    const int ss = parse_digits(s, 17, 2);
    std::size_t pos = 19;
    double frac = 0.0;
    if (pos < s.size() && s[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
        frac = parse_double(std::string("0") + std::string(s.substr(pos, end - pos))).value_or(0.0);
        pos = end;
    }
    double offset = 0.0;
    if (pos < s.size()) {
        const char z = s[pos];
        if (z == 'Z' || z == 'z') {
            ++pos;
        } else if ((z == '+' || z == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
            const double off = parse_digits(s, pos + 1, 2) * 3600.0 + parse_digits(s, pos + 4, 2) * 60.0;
            offset = z == '+' ? off : -off;
            pos += 6;
        }
    }
    if (pos != s.size()) throw SchemaError("malformed timestamp '" + std::string(s) + "'");
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss + frac - offset;
}

namespace {

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("column '" + name + "' not found in header", 1);
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

CsvEventReader::CsvEventReader(std::istream& in, const ColumnRoles& roles,
                               std::vector<Vocab>& vocabs, bool growVocab)
    : in_(in), vocabs_(vocabs), growVocab_(growVocab) {
    std::string headerLine;
    if (!std::getline(in_, headerLine)) throw SchemaError("empty input, expected a header row", 1);
    line_ = 1;
    std::vector<std::string> header = split_csv_line(headerLine);
    for (auto& h : header) h = std::string(trim(h));
    width_ = header.size();
    tsCol_ = column_index(header, roles.timestamp);
    for (const auto& c : roles.categorical) catCols_.push_back(column_index(header, c));
    for (const auto& c : roles.continuous) contCols_.push_back(column_index(header, c));
    if (roles.label) labelCol_ = column_index(header, *roles.label);
    if (vocabs_.size() < catCols_.size()) vocabs_.resize(catCols_.size());
}

std::optional<EventRecord> CsvEventReader::next() {
    std::string text;
    while (std::getline(in_, text)) {
        ++line_;
        if (trim(text).empty()) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_line(text);
        } catch (const SchemaError& e) {
            throw SchemaError(e.what(), line_);
        }
        if (f.size() != width_)
            throw SchemaError("expected " + std::to_string(width_) + " fields, got " +
                                  std::to_string(f.size()),
                              line_);
        EventRecord r;
        double ts;
        try {
            ts = parse_timestamp(f[tsCol_]);
        } catch (const SchemaError& e) {
            throw SchemaError(e.what(), line_);
        }
        if (!origin_) origin_ = ts;
        r.timestamp = ts - *origin_;
        if (r.timestamp < lastTime_) throw OrderingError("timestamps are not sorted", line_);
        lastTime_ = r.timestamp;
        for (std::size_t m = 0; m < catCols_.size(); ++m) {
            const std::string_view unit = trim(f[catCols_[m]]);
            if (growVocab_) {
                r.cat.push_back(vocabs_[m].intern(unit));
            } else if (auto id = vocabs_[m].find(unit)) {
                r.cat.push_back(*id);
            } else {
                throw SchemaError("unknown unit '" + std::string(unit) + "'", line_);
            }
        }
        for (std::size_t c : contCols_) {
            const auto v = parse_double(f[c]);
            if (!v || !std::isfinite(*v))
                throw SchemaError("bad continuous value '" + f[c] + "'", line_);
            r.cont.push_back(*v);
        }
        if (labelCol_) {
            const std::string_view l = trim(f[*labelCol_]);
            if (l == "1" || l == "true")
                r.label = true;
            else if (l == "0" || l == "false" || l.empty())
                r.label = false;
            else
                throw SchemaError("label must be 0 or 1, got '" + std::string(l) + "'", line_);
        }
        return r;
    }
    return std::nullopt;
}

std::vector<Vocab> scan_vocabularies(std::istream& in, const ColumnRoles& roles) {
    std::vector<Vocab> vocabs;
    CsvEventReader reader(in, roles, vocabs, true);
    while (reader.next()) {
    }
    return vocabs;
}

}  // namespace hetstream
