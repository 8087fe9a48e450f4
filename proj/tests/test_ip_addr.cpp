#include <catch2/catch_amalgamated.hpp>

#include "asrisk/ip_addr.hpp"
#include "asrisk/util.hpp"

using namespace asrisk;

TEST_CASE("parses and prints both families") {
    auto v4 = IpAddr::parse("198.51.100.17");
    REQUIRE(v4);
    CHECK(v4->family() == Family::v4);
    CHECK(v4->to_string() == "198.51.100.17");

    auto v6 = IpAddr::parse("2001:db8::1");
    REQUIRE(v6);
    CHECK(v6->family() == Family::v6);
    CHECK(v6->to_string() == "2001:db8::1");

    CHECK_FALSE(IpAddr::parse("not an address"));
    CHECK_FALSE(IpAddr::parse("256.1.2.3"));
    CHECK_FALSE(IpAddr::parse(""));
}

TEST_CASE("ordering is byte-lexicographic within a family") {
    auto a = *IpAddr::parse("10.0.0.1");
    auto b = *IpAddr::parse("10.0.1.0");
    CHECK(a < b);
    CHECK(a == *IpAddr::parse("10.0.0.1"));
    CHECK(IpAddr::from_v4(0x0a000001u) == a);

    auto x = *IpAddr::parse("2001:db8::1");
    auto y = *IpAddr::parse("2001:db8::2");
    CHECK(x < y);
}

TEST_CASE("three-decimal rendering rounds half away from zero") {
    CHECK(format_prob3(0.0149) == "0.015");
    CHECK(format_prob3(0.0145) == "0.015");  // .5 goes up, not to even
    CHECK(format_prob3(0.224) == "0.224");
    CHECK(format_prob3(1.0) == "1.000");
    CHECK(format_prob3(0.0) == "0.000");
}

TEST_CASE("bandwidth renders as Gbit/s with two decimals") {
    CHECK(format_gbits(1250000000ull) == "10.00");  // 10 Gbit/s
    CHECK(format_gbits(0) == "0.00");
    CHECK(format_gbits(744000000ull) == "5.95");
}

TEST_CASE("kahan summation keeps long sums tight") {
    KahanSum sum;
    for (int i = 0; i < 1000000; ++i) sum.add(1e-7);
    CHECK(sum.value() == Catch::Approx(0.1).margin(1e-12));
}
