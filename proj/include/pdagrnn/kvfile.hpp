#pragma once

// Flat key=value text used by cube/label headers, checkpoint headers and
// experiment configs. Blank lines and lines starting with '#' are ignored.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pdagrnn {

class KeyValues {
public:
    static KeyValues parse(std::string_view text, std::string_view source = "<text>");
    static KeyValues read_file(const std::filesystem::path& path);

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    std::uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

    /// Keys not present in `allowed`, sorted.
    std::vector<std::string> unknown_keys(const std::set<std::string>& allowed) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }
    std::string source() const { return source_; }

private:
    std::map<std::string, std::string> entries_;
    std::string source_;
};

std::uint64_t parse_uint(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

}  // namespace pdagrnn
