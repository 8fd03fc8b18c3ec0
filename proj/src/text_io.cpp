#include "forkbench/text_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "forkbench/strategies.hpp"

namespace forkbench::text {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf.data(), ptr);
}

double parse_double(std::string_view token, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(v)) {
        throw ParseError(line, "expected a finite number, got '" + std::string(token) + "'");
    }
    return v;
}

long long parse_int(std::string_view token, std::size_t line) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw ParseError(line, "expected an integer, got '" + std::string(token) + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const auto start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

std::map<std::string, std::string> parse_header(std::string_view line, std::string_view magic, int version,
                                                const std::vector<std::string_view>& allowed) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= line.size()) {
        const auto semi = line.find(';', start);
        const auto end = semi == std::string_view::npos ? line.size() : semi;
        parts.push_back(trim(line.substr(start, end - start)));
        if (semi == std::string_view::npos) break;
        start = semi + 1;
    }
    const auto head = split_ws(parts.front());
    if (head.size() != 2 || head[0] != magic) {
        throw ParseError(1, "expected header starting with '" + std::string(magic) + "'");
    }
    const std::string expected_version = "v" + std::to_string(version);
    if (head[1] != expected_version) {
        throw ParseError(1, "version mismatch: expected " + expected_version + ", got " + std::string(head[1]));
    }
    std::map<std::string, std::string> kv;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].empty()) continue;
        const auto eq = parts[i].find('=');
        if (eq == std::string_view::npos) throw ParseError(1, "malformed header field '" + std::string(parts[i]) + "'");
        const std::string key(trim(parts[i].substr(0, eq)));
        const std::string value(trim(parts[i].substr(eq + 1)));
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ParseError(1, "unknown header key '" + key + "'");
        }
        if (!kv.emplace(key, value).second) throw ParseError(1, "duplicate header key '" + key + "'");
    }
    return kv;
}

}  // namespace forkbench::text
