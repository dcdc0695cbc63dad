#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace tdr {

/// Parses a number with an optional SI scale suffix (k, M, m, u, n, p)
/// and an optional unit tail which is ignored: "120" -> 120, "70k" -> 7e4,
/// "16p" -> 1.6e-11, "3ns" -> 3e-9, "1mV" -> 1e-3, "2e8" -> 2e8.
/// A bare unit without a scale prefix ("5V", "3s") is accepted as-is.
/// Note that a lone trailing "m" always means milli, never metres.
std::optional<double> try_parse_si(std::string_view text);

/// Like try_parse_si but throws ParseError on malformed input.
double parse_si(std::string_view text);

/// Shortest round-trippable decimal representation of v, locale independent.
std::string format_number(double v);

} // namespace tdr
