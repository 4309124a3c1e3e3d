#include "pdagrnn/kvfile.hpp"

#include "pdagrnn/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pdagrnn {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, std::string_view source) {
    KeyValues kv;
    kv.source_ = std::string(source);
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": empty key");
        if (kv.entries_.count(key) != 0)
            throw ValidationError(kv.source_ + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        kv.entries_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValues KeyValues::read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

const std::string& KeyValues::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ValidationError(source_ + ": missing key '" + key + "'");
    return it->second;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

std::uint64_t KeyValues::get_uint(const std::string& key) const { return parse_uint(get(key), key); }
double KeyValues::get_double(const std::string& key) const { return parse_double(get(key), key); }
bool KeyValues::get_bool(const std::string& key) const { return parse_bool(get(key), key); }

std::vector<std::string> KeyValues::unknown_keys(const std::set<std::string>& allowed) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (allowed.count(k) == 0) out.push_back(k);
    return out;
}

std::uint64_t parse_uint(std::string_view text, std::string_view what) {
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc{} || ptr != end)
        throw ValidationError("'" + std::string(what) + "': expected a non-negative integer, got '" + std::string(text) + "'");
    return value;
}

double parse_double(std::string_view text, std::string_view what) {
    // std::from_chars for double is available in libstdc++ 11.
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (text.empty() || ec != std::errc{} || ptr != end || !std::isfinite(value))
        throw ValidationError("'" + std::string(what) + "': expected a finite number, got '" + std::string(text) + "'");
    return value;
}

bool parse_bool(std::string_view text, std::string_view what) {
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ValidationError("'" + std::string(what) + "': expected a boolean, got '" + std::string(text) + "'");
}

}  // namespace pdagrnn
