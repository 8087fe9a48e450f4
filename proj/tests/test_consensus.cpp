#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "asrisk/consensus.hpp"

using namespace asrisk;

namespace {

const char* kThreeRelays = R"({
  "relays_published": "2022-09-17 12:00:00",
  "relays": [
    {"fingerprint": "AAAA", "or_addresses": ["198.51.100.10:443"],
     "flags": ["Guard", "Running"], "advertised_bandwidth": 1000000,
     "guard_probability": 0.5, "exit_probability": 0.0},
    {"fingerprint": "BBBB", "or_addresses": ["198.51.100.20:443", "[2001:db8::20]:443"],
     "flags": ["Exit"], "advertised_bandwidth": 2000000,
     "exit_probability": 0.25},
    {"fingerprint": "CCCC", "or_addresses": ["[2001:db8::30]:9001"],
     "flags": ["Running"], "advertised_bandwidth": 500}
  ]
})";

AsnDatabase test_mapper() {
    AsnDatabase db;
    db.load_ip2asn("198.51.100.0\t198.51.100.255\t64500\tZZ\tALPHA-NET\n", Family::v4);
    db.load_ip2asn("2001:db8::\t2001:db8:0:0:ffff:ffff:ffff:ffff\t64600\tZZ\tBETA-NET\n", Family::v6);
    return db;
}

}  // namespace

TEST_CASE("loads a small relay snapshot") {
    auto snap = load_snapshot(kThreeRelays);
    REQUIRE(snap.relays.size() == 3);
    CHECK(snap.fetched_at == "2022-09-17 12:00:00");
    CHECK(snap.total_guard_probability() == Catch::Approx(0.5));
    CHECK(snap.total_exit_probability() == Catch::Approx(0.25));
    CHECK(snap.relays[0].addr_v4);
    CHECK_FALSE(snap.relays[0].addr_v6);
    CHECK(snap.relays[1].addr_v6);
    CHECK(snap.relays[1].flags.count("Exit") == 1);
    CHECK(snap.relays[2].advertised_bandwidth == 500);
}

TEST_CASE("empty relay list is a valid snapshot") {
    auto snap = load_snapshot(R"({"relays": []})");
    CHECK(snap.relays.empty());
    CHECK(snap.total_guard_probability() == 0.0);
    CHECK(snap.total_exit_probability() == 0.0);
}

TEST_CASE("probability out of range names the relay") {
    CHECK_THROWS_MATCHES(
        load_snapshot(R"({"relays": [{"fingerprint": "DEAD", "or_addresses": ["10.0.0.1:1"],
                          "guard_probability": 1.2}]})"),
        ValidationError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("DEAD")));
}

TEST_CASE("malformed document reports a byte offset") {
    try {
        load_snapshot("{\"relays\": [ nope");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset > 0);
    }
}

TEST_CASE("records without any address are dropped and counted") {
    auto snap = load_snapshot(R"({"relays": [
        {"fingerprint": "AAAA", "or_addresses": ["10.0.0.1:1"]},
        {"fingerprint": "BBBB", "or_addresses": []},
        {"fingerprint": "CCCC"}
    ]})");
    CHECK(snap.relays.size() == 1);
    CHECK(snap.dropped_without_address == 2);
}

TEST_CASE("snapshot-level probability mass cap") {
    CHECK_THROWS_AS(load_snapshot(R"({"relays": [
        {"fingerprint": "A", "or_addresses": ["10.0.0.1:1"], "guard_probability": 0.7},
        {"fingerprint": "B", "or_addresses": ["10.0.0.2:1"], "guard_probability": 0.7}
    ]})"),
                    ValidationError);
}

TEST_CASE("aggregation sums per AS and reports unmapped relays") {
    auto snap = load_snapshot(R"({"relays": [
        {"fingerprint": "A", "or_addresses": ["198.51.100.1:1"], "exit_probability": 0.1},
        {"fingerprint": "B", "or_addresses": ["198.51.100.2:1"], "exit_probability": 0.2},
        {"fingerprint": "C", "or_addresses": ["203.0.113.1:1"], "exit_probability": 0.05}
    ]})");
    auto mapper = test_mapper();
    auto agg = aggregate_by_as(snap, mapper, Family::v4);
    REQUIRE(agg.stats.size() == 1);
    CHECK(agg.stats[0].asn == 64500u);
    CHECK(agg.stats[0].p_exit == Catch::Approx(0.3));
    CHECK(agg.stats[0].relay_count == 2);
    CHECK(agg.unmapped_relays == 1);
    CHECK(agg.unmapped_exit == Catch::Approx(0.05));
}

TEST_CASE("relays without the family address are excluded from that family") {
    auto snap = load_snapshot(kThreeRelays);
    auto mapper = test_mapper();
    auto v4 = aggregate_by_as(snap, mapper, Family::v4);
    auto v6 = aggregate_by_as(snap, mapper, Family::v6);
    CHECK(v4.skipped_no_family_address == 1);  // CCCC is v6-only
    CHECK(v6.skipped_no_family_address == 1);  // AAAA is v4-only
    REQUIRE(v4.stats.size() == 1);
    REQUIRE(v6.stats.size() == 1);
    CHECK(v6.stats[0].asn == 64600u);
}

TEST_CASE("conservation: AS mass plus unmapped mass equals relay totals") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> tiny(0.0, 1e-4);
    nlohmann::json doc;
    doc["relays"] = nlohmann::json::array();
    for (int i = 0; i < 5000; ++i) {
        nlohmann::json r;
        r["fingerprint"] = "F" + std::to_string(i);
        // half inside the mapped range, half outside any range
        std::string addr = (i % 2 == 0) ? "198.51.100." + std::to_string(i % 256)
                                        : "203.0.114." + std::to_string(i % 256);
        r["or_addresses"] = {addr + ":443"};
        r["guard_probability"] = tiny(rng);
        r["exit_probability"] = tiny(rng);
        doc["relays"].push_back(std::move(r));
    }
    auto snap = load_snapshot(doc.dump());
    auto mapper = test_mapper();
    auto agg = aggregate_by_as(snap, mapper, Family::v4);
    KahanSum as_guard, as_exit;
    for (const auto& s : agg.stats) {
        as_guard.add(s.p_guard);
        as_exit.add(s.p_exit);
    }
    CHECK(as_guard.value() + agg.unmapped_guard ==
          Catch::Approx(snap.total_guard_probability()).margin(1e-9));
    CHECK(as_exit.value() + agg.unmapped_exit ==
          Catch::Approx(snap.total_exit_probability()).margin(1e-9));
}

TEST_CASE("re-aggregation is deterministic") {
    auto snap = load_snapshot(kThreeRelays);
    auto mapper = test_mapper();
    auto a = aggregate_by_as(snap, mapper, Family::v4);
    auto b = aggregate_by_as(snap, mapper, Family::v4);
    REQUIRE(a.stats.size() == b.stats.size());
    for (std::size_t i = 0; i < a.stats.size(); ++i) {
        CHECK(a.stats[i].asn == b.stats[i].asn);
        CHECK(a.stats[i].p_guard == b.stats[i].p_guard);
        CHECK(a.stats[i].p_exit == b.stats[i].p_exit);
    }
}

TEST_CASE("diversity curve: prefix sums in descending order") {
    std::vector<AsStats> stats;
    stats.push_back({64501, 1, 0, 0.0, 0.4, Family::v4});
    stats.push_back({64502, 1, 0, 0.0, 0.3, Family::v4});
    stats.push_back({64503, 1, 0, 0.0, 0.3, Family::v4});
    auto curve = diversity_curve(stats, DiversityCurve::Kind::exit);
    REQUIRE(curve.points.size() == 3);
    CHECK(curve.points[0] == std::make_pair(1, 0.4));
    CHECK(curve.points[1].second == Catch::Approx(0.7));
    CHECK(curve.points[2].second == Catch::Approx(1.0));
}

TEST_CASE("diversity curve: singleton and empty") {
    std::vector<AsStats> one;
    one.push_back({64500, 1, 0, 0.2, 0.0, Family::v4});
    auto curve = diversity_curve(one, DiversityCurve::Kind::guard);
    REQUIRE(curve.points.size() == 1);
    CHECK(curve.points[0] == std::make_pair(1, 0.2));
    CHECK_THROWS_AS(diversity_curve({}, DiversityCurve::Kind::guard), ValidationError);
}

TEST_CASE("diversity curve properties on random stats") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> dist(0.0, 1e-3);
    std::vector<AsStats> stats;
    KahanSum total;
    for (int i = 0; i < 800; ++i) {
        double p = dist(rng);
        stats.push_back({static_cast<std::uint32_t>(64500 + i), 1, 0, p, 0.0, Family::v4});
        total.add(p);
    }
    auto curve = diversity_curve(stats, DiversityCurve::Kind::guard);
    double prev = 0.0;
    for (const auto& [rank, cum] : curve.points) {
        CHECK(cum >= prev);
        prev = cum;
    }
    CHECK(curve.points.back().second == Catch::Approx(total.value()).margin(1e-6));
    // ties broken by ascending ASN: equal-probability neighbours stay sorted
    auto tie_curve = diversity_curve(
        {{64502, 1, 0, 0.5, 0.0, Family::v4}, {64501, 1, 0, 0.5, 0.0, Family::v4}},
        DiversityCurve::Kind::guard);
    CHECK(tie_curve.points[0].second == Catch::Approx(0.5));
}

TEST_CASE("ipv6 support summary counts relays, ASes and bandwidth") {
    auto snap = load_snapshot(R"({"relays": [
        {"fingerprint": "A", "or_addresses": ["198.51.100.1:1"], "advertised_bandwidth": 100,
         "guard_probability": 0.1},
        {"fingerprint": "B", "or_addresses": ["198.51.100.2:1", "[2001:db8::2]:1"],
         "advertised_bandwidth": 300, "exit_probability": 0.1},
        {"fingerprint": "C", "or_addresses": ["198.51.100.3:1", "[2001:db8::3]:1"],
         "advertised_bandwidth": 100},
        {"fingerprint": "D", "or_addresses": ["198.51.100.4:1"], "advertised_bandwidth": 100}
    ]})");
    auto mapper = test_mapper();
    auto sum = ipv6_support_summary(snap, mapper);
    CHECK(sum.all.relays_all == 4);
    CHECK(sum.all.relays_v6 == 2);
    CHECK(sum.all.relay_share_pct() == 50);
    CHECK(sum.all.ases_all == 1);
    CHECK(sum.all.ases_v6 == 1);
    CHECK(sum.all.bandwidth_all == 600);
    CHECK(sum.all.bandwidth_v6 == 400);
    CHECK(sum.exit.relays_all == 1);
    CHECK(sum.exit.relays_v6 == 1);
    CHECK(sum.guard.relays_v6 == 0);
    CHECK(sum.guard.relay_share_pct() == 0);
}
