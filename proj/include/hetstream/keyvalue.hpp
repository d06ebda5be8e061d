#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hetstream {

// Flat "key = value" text with '#' comments. Values are read with take_*; keys
// never taken are reported by `unused()` so typos surface as errors.
class KeyValues {
public:
    static KeyValues parse(std::istream& in);
    static KeyValues load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> take(const std::string& key);
    std::string take_string(const std::string& key, const std::string& fallback);
    double take_double(const std::string& key, double fallback);
    std::size_t take_size(const std::string& key, std::size_t fallback);
    std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
    bool take_bool(const std::string& key, bool fallback);
    std::vector<std::string> take_list(const std::string& key);
    std::vector<double> take_double_list(const std::string& key);
    std::vector<std::size_t> take_size_list(const std::string& key);

    std::vector<std::string> unused() const;

    // Throws ConfigError naming every key that was never taken.
    void require_all_used() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::size_t> lines_;
    std::set<std::string> taken_;
};

}  // namespace hetstream
