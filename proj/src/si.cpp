#include "tdrscan/si.hpp"

#include "tdrscan/errors.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace tdr {

namespace {

std::optional<double> si_multiplier(char c) {
    switch (c) {
    case 'k': return 1e3;
    case 'M': return 1e6;
    case 'm': return 1e-3;
    case 'u': return 1e-6;
    case 'n': return 1e-9;
    case 'p': return 1e-12;
    default: return std::nullopt;
    }
}

bool all_alpha(std::string_view s) {
    for (char c : s) {
        if (!std::isalpha(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

} // namespace

std::optional<double> try_parse_si(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
        text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
        text.remove_suffix(1);
    if (text.empty()) return std::nullopt;

    // strtod needs a terminated buffer; literals here are short.
    std::string buf(text);
    char* end = nullptr;
    double value = std::strtod(buf.c_str(), &end);
    if (end == buf.c_str()) return std::nullopt;

    std::string_view tail(end);
    if (tail.empty()) return value;
    if (!all_alpha(tail)) return std::nullopt;

    if (auto mult = si_multiplier(tail.front())) {
        // "70k", "3ns", "1mV": prefix plus ignored unit letters.
        return value * *mult;
    }
    // Pure unit tail like "5V" or "3s".
    return value;
}

double parse_si(std::string_view text) {
    if (auto v = try_parse_si(text)) return *v;
    throw ParseError("invalid number '" + std::string(text) + "'");
}

std::string format_number(double v) {
    char buf[64];
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return buf;
    }
    // %.17g always round-trips a double; prefer the shortest form that does.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

} // namespace tdr
