#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace svsdu {

/// Flat `name = value` record. Blank lines and lines starting with '#' are
/// ignored; later keys overwrite earlier ones.
class KvRecord {
public:
    KvRecord() = default;

    static KvRecord parse(std::string_view text);
    static KvRecord load(const std::string& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void set(const std::string& key, double value);

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
    [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;

    [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }

    /// Serializes in key order, one `name = value` per line.
    [[nodiscard]] std::string str() const;

private:
    std::map<std::string, std::string> values_;
};

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace svsdu
