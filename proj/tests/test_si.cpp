#include "tdrscan/si.hpp"

#include "tdrscan/errors.hpp"

#include <doctest.h>

using namespace tdr;

TEST_CASE("plain numbers pass through") {
    CHECK(parse_si("120") == 120.0);
    CHECK(parse_si("2e8") == 2e8);
    CHECK(parse_si("-1.5") == -1.5);
    CHECK(parse_si(" 42 ") == 42.0);
}

TEST_CASE("scale prefixes") {
    CHECK(parse_si("70k") == doctest::Approx(70e3));
    CHECK(parse_si("16p") == doctest::Approx(16e-12));
    CHECK(parse_si("3n") == doctest::Approx(3e-9));
    CHECK(parse_si("1M") == doctest::Approx(1e6));
    CHECK(parse_si("5u") == doctest::Approx(5e-6));
    CHECK(parse_si("2m") == doctest::Approx(2e-3));
}

TEST_CASE("prefix plus unit tail") {
    CHECK(parse_si("3ns") == doctest::Approx(3e-9));
    CHECK(parse_si("1mV") == doctest::Approx(1e-3));
    CHECK(parse_si("41.67pF") == doctest::Approx(41.67e-12));
}

TEST_CASE("bare unit without prefix") {
    CHECK(parse_si("5V") == 5.0);
    CHECK(parse_si("3s") == 3.0);
}

TEST_CASE("rejects garbage") {
    CHECK_THROWS_AS(parse_si(""), ParseError);
    CHECK_THROWS_AS(parse_si("abc"), ParseError);
    CHECK_THROWS_AS(parse_si("1.2.3"), ParseError);
    CHECK_THROWS_AS(parse_si("3 ns extra"), ParseError);
    CHECK(!try_parse_si("12x3").has_value());
}

TEST_CASE("format_number round-trips") {
    for (double v : {0.0, 1.0, -2.5, 59.8973, 2e8, 16e-12, 1.0 / 3.0}) {
        CHECK(std::stod(format_number(v)) == v);
    }
}
