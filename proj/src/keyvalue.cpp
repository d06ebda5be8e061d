#include "hetstream/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "hetstream/error.hpp"

namespace hetstream {
namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError("config: key '" + key + "' expects a number, got '" + text + "'");
    return v;
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in) {
    KeyValues kv;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineNo) + ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineNo) + ": empty key");
        if (kv.values_.count(key))
            throw ConfigError("config line " + std::to_string(lineNo) + ": duplicate key '" + key + "'");
        kv.values_[key] = strip(line.substr(eq + 1));
        kv.lines_[key] = lineNo;
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
}

std::optional<std::string> KeyValues::take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    taken_.insert(key);
    return it->second;
}

std::string KeyValues::take_string(const std::string& key, const std::string& fallback) {
    return take(key).value_or(fallback);
}

double KeyValues::take_double(const std::string& key, double fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    const double d = parse_number<double>(key, *v);
    if (!std::isfinite(d)) throw ConfigError("config: key '" + key + "' must be finite");
    return d;
}

std::size_t KeyValues::take_size(const std::string& key, std::size_t fallback) {
    const auto v = take(key);
    return v ? parse_number<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValues::take_u64(const std::string& key, std::uint64_t fallback) {
    const auto v = take(key);
    return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool KeyValues::take_bool(const std::string& key, bool fallback) {
    const auto v = take(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + *v + "'");
}

std::vector<std::string> KeyValues::take_list(const std::string& key) {
    std::vector<std::string> out;
    const auto v = take(key);
    if (!v || v->empty()) return out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = v->find(',', start);
        out.push_back(strip(v->substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<double> KeyValues::take_double_list(const std::string& key) {
    std::vector<double> out;
    for (const auto& s : take_list(key)) out.push_back(parse_number<double>(key, s));
    return out;
}

std::vector<std::size_t> KeyValues::take_size_list(const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& s : take_list(key)) out.push_back(parse_number<std::size_t>(key, s));
    return out;
}

std::vector<std::string> KeyValues::unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!taken_.count(k)) out.push_back(k);
    return out;
}

void KeyValues::require_all_used() const {
    const auto keys = unused();
    if (keys.empty()) return;
    std::string msg = "config: unknown key(s):";
    for (const auto& k : keys) msg += " '" + k + "' (line " + std::to_string(lines_.at(k)) + ")";
    throw ConfigError(msg);
}

}  // namespace hetstream
