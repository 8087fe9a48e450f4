#include <catch2/catch_amalgamated.hpp>

#include "asrisk/targets.hpp"

using namespace asrisk;

namespace {

std::vector<ProbeRecord> country_inventory() {
    // AS64500: three DE probes; AS64501: one DE probe; AS64502: two DE
    // probes; AS64503: one US probe
    auto mk = [](std::int64_t id, std::uint32_t asn, const char* cc) {
        ProbeRecord p;
        p.probe_id = id;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        p.country_code = cc;
        return p;
    };
    return {mk(1, 64500, "DE"), mk(2, 64500, "DE"), mk(3, 64500, "DE"), mk(4, 64501, "DE"),
            mk(5, 64502, "DE"), mk(6, 64502, "DE"), mk(7, 64503, "US")};
}

AsnDatabase dest_mapper() {
    AsnDatabase db;
    db.load_ip2asn(
        "198.51.100.0\t198.51.100.255\t64500\tDE\tALPHA\n"
        "203.0.113.0\t203.0.113.255\t64501\tRU\tBETA\n"
        "192.0.2.0\t192.0.2.255\t64502\tUA\tGAMMA\n",
        Family::v4);
    return db;
}

}  // namespace

TEST_CASE("derive_clients: most probes first, ties by ASN") {
    auto inv = country_inventory();
    auto top1 = derive_clients(inv, "DE", 1, Family::v4);
    REQUIRE(top1.asns.size() == 1);
    CHECK(top1.asns[0] == 64500u);

    auto top3 = derive_clients(inv, "DE", 3, Family::v4);
    REQUIRE(top3.asns.size() == 3);
    CHECK(top3.asns == std::vector<std::uint32_t>{64500, 64502, 64501});
    CHECK(top3.warnings.empty());
}

TEST_CASE("derive_clients: ties go to the lower ASN") {
    auto mk = [](std::int64_t id, std::uint32_t asn) {
        ProbeRecord p;
        p.probe_id = id;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        p.country_code = "DE";
        return p;
    };
    std::vector<ProbeRecord> inv = {mk(1, 64510), mk(2, 64510), mk(3, 64505), mk(4, 64505)};
    auto out = derive_clients(inv, "DE", 2, Family::v4);
    CHECK(out.asns == std::vector<std::uint32_t>{64505, 64510});
}

TEST_CASE("derive_clients: short result carries a warning; empty country too") {
    auto inv = country_inventory();
    auto out = derive_clients(inv, "US", 5, Family::v4);
    CHECK(out.asns.size() == 1);
    REQUIRE(out.warnings.size() == 1);
    auto none = derive_clients(inv, "FR", 3, Family::v4);
    CHECK(none.asns.empty());
    CHECK(none.warnings.size() == 1);
}

TEST_CASE("probes without country codes never enter country toplists") {
    ProbeRecord p;
    p.probe_id = 1;
    p.asn_v4 = 64500;
    p.address_v4 = IpAddr::parse("10.0.0.1");
    p.status = ProbeStatus::connected;
    auto out = derive_clients({p}, "DE", 1, Family::v4);
    CHECK(out.asns.empty());
}

TEST_CASE("fixture resolver behaves like a lookup table") {
    FixtureResolver r(
        "example.org\tv4\t198.51.100.7\n"
        "multi.example\tv4\t198.51.100.8,203.0.113.9\n"
        "v6.example\tv6\t2001:db8::1\n");
    auto one = r.resolve("example.org", Family::v4);
    REQUIRE(one.addresses.size() == 1);
    CHECK(one.addresses[0].to_string() == "198.51.100.7");
    CHECK(r.resolve("multi.example", Family::v4).addresses.size() == 2);
    auto missing = r.resolve("absent.example", Family::v4);
    CHECK(missing.addresses.empty());
    CHECK(missing.note == "no records");
    // family is part of the key
    CHECK(r.resolve("example.org", Family::v6).addresses.empty());
}

TEST_CASE("domain lists accept bare and rank,domain forms") {
    auto bare = load_domain_list("a.example\nb.example\n");
    CHECK(bare == std::vector<std::string>{"a.example", "b.example"});
    auto tranco = load_domain_list("1,a.example\r\n2,b.example\n# comment\n\n3,c.example\n");
    CHECK(tranco == std::vector<std::string>{"a.example", "b.example", "c.example"});
}

TEST_CASE("derive_destinations: resolve, map, probe-filter, dedupe") {
    FixtureResolver resolver(
        "top1.example\tv4\t198.51.100.7\n"
        "top2.example\tv4\t203.0.113.7\n"
        "top3.example\tv4\t198.51.100.9\n");
    auto mapper = dest_mapper();
    std::vector<ProbeRecord> inv;
    for (std::uint32_t asn : {64500u, 64501u}) {
        ProbeRecord p;
        p.probe_id = asn;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        inv.push_back(p);
    }
    auto out = derive_destinations({"top1.example", "top2.example", "top3.example"}, resolver,
                                   mapper, inv, 100, Family::v4);
    REQUIRE(out.destinations.size() == 2);
    CHECK(out.destinations[0].asn == 64500u);
    CHECK(out.destinations[1].asn == 64501u);
    CHECK(out.destinations[0].source_domains ==
          std::vector<std::string>{"top1.example", "top3.example"});
    CHECK(out.destinations[0].lowest_address->to_string() == "198.51.100.7");
}

TEST_CASE("destination AS without a probe is excluded") {
    FixtureResolver resolver("top1.example\tv4\t192.0.2.5\n");
    auto mapper = dest_mapper();
    auto out = derive_destinations({"top1.example"}, resolver, mapper, {}, 100, Family::v4);
    CHECK(out.destinations.empty());
    REQUIRE(out.dropped_no_probe.size() == 1);
    CHECK(out.dropped_no_probe[0] == 64502u);
}

TEST_CASE("resolver failure skips the domain without failing the derivation") {
    FixtureResolver resolver("good.example\tv4\t198.51.100.7\n");
    auto mapper = dest_mapper();
    std::vector<ProbeRecord> inv;
    ProbeRecord p;
    p.probe_id = 1;
    p.asn_v4 = 64500;
    p.address_v4 = IpAddr::parse("10.0.0.1");
    p.status = ProbeStatus::connected;
    inv.push_back(p);
    auto out = derive_destinations({"broken.example", "good.example"}, resolver, mapper, inv, 100,
                                   Family::v4);
    CHECK(out.destinations.size() == 1);
    REQUIRE(out.skipped_domains.size() == 1);
    CHECK(out.skipped_domains[0] == "broken.example (no records)");
}

TEST_CASE("top_k cuts the domain list, not the AS list") {
    FixtureResolver resolver(
        "top1.example\tv4\t198.51.100.7\n"
        "top2.example\tv4\t203.0.113.7\n");
    auto mapper = dest_mapper();
    std::vector<ProbeRecord> inv;
    for (std::uint32_t asn : {64500u, 64501u}) {
        ProbeRecord p;
        p.probe_id = asn;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        inv.push_back(p);
    }
    auto out = derive_destinations({"top1.example", "top2.example"}, resolver, mapper, inv, 1,
                                   Family::v4);
    CHECK(out.destinations.size() == 1);
}

TEST_CASE("country filter keeps only matching registry countries") {
    FixtureResolver resolver(
        "ru.example\tv4\t203.0.113.7\n"
        "ua.example\tv4\t192.0.2.5\n"
        "de.example\tv4\t198.51.100.7\n");
    auto mapper = dest_mapper();
    std::vector<ProbeRecord> inv;
    for (std::uint32_t asn : {64500u, 64501u, 64502u}) {
        ProbeRecord p;
        p.probe_id = asn;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        inv.push_back(p);
    }
    auto out = derive_destinations({"ru.example", "ua.example", "de.example"}, resolver, mapper,
                                   inv, 100, Family::v4, {"RU", "UA"});
    REQUIRE(out.destinations.size() == 2);
    CHECK(out.destinations[0].asn == 64501u);
    CHECK(out.destinations[1].asn == 64502u);
    REQUIRE(out.dropped_country_filter.size() == 1);
    CHECK(out.dropped_country_filter[0] == 64500u);
}

TEST_CASE("scenario parsing round trip") {
    auto spec = parse_scenario(
        "# sample scenario\n"
        "label = demo-v4\n"
        "family = v4\n"
        "client_rule = top_probes\n"
        "client_country = DE\n"
        "client_top_n = 10\n"
        "client_union_with = AS64500, 64510\n"
        "destination_rule = toplist\n"
        "domains_file = top.csv\n"
        "resolver_fixture = resolver.tsv\n"
        "fallback_count = 1\n");
    CHECK(spec.label == "demo-v4");
    CHECK(spec.family == Family::v4);
    CHECK(spec.client_rule == ScenarioSpec::ClientRule::top_probes);
    CHECK(spec.client_union_with == std::vector<std::uint32_t>{64500, 64510});
    CHECK(spec.effective_top_k() == 100);
    CHECK(spec.fallback_count == 1);

    CHECK_THROWS_AS(parse_scenario("label = x\nfamily = v4\nbogus_key = 1\n"), ParseError);
    CHECK_THROWS_AS(parse_scenario("family = v4\n"), ValidationError);  // no label
}

TEST_CASE("v6 scenarios default to 250 toplist domains") {
    auto spec = parse_scenario("label = x\nfamily = v6\n");
    CHECK(spec.effective_top_k() == 250);
    auto spec4 = parse_scenario("label = x\nfamily = v4\n");
    CHECK(spec4.effective_top_k() == 100);
    auto spec_override = parse_scenario("label = x\nfamily = v6\ndestination_top_k = 42\n");
    CHECK(spec_override.effective_top_k() == 42);
}

TEST_CASE("union entries without probes are dropped with a report line") {
    auto inv = country_inventory();
    auto mapper = dest_mapper();
    ScenarioSpec spec = parse_scenario(
        "label = union-demo\n"
        "family = v4\n"
        "client_rule = explicit\n"
        "client_asns = 64500\n"
        "client_union_with = 64999\n"  // merged away, no probe anymore
        "destination_rule = explicit\n"
        "destination_asns = 64501\n");
    auto targets = build_target_sets(spec, inv, mapper, nullptr, {});
    REQUIRE(targets.clients.size() == 1);
    CHECK(targets.clients[0].asn == 64500u);
    CHECK(targets.clients[0].probe_id == 1);
    bool reported = false;
    for (const auto& line : targets.report)
        if (line.find("64999") != std::string::npos) reported = true;
    CHECK(reported);
}

TEST_CASE("blocked list ranking by popularity list") {
    auto ranked = rank_domains_by({"z.example", "a.example", "m.example"},
                                  {"a.example", "b.example", "m.example"});
    CHECK(ranked == std::vector<std::string>{"a.example", "m.example", "z.example"});
}

TEST_CASE("offline determinism: derivation is byte-stable across runs") {
    FixtureResolver resolver(
        "top1.example\tv4\t198.51.100.7\n"
        "top2.example\tv4\t203.0.113.7\n");
    auto mapper = dest_mapper();
    std::vector<ProbeRecord> inv;
    for (std::uint32_t asn : {64500u, 64501u}) {
        ProbeRecord p;
        p.probe_id = asn;
        p.asn_v4 = asn;
        p.address_v4 = IpAddr::parse("10.0.0.1");
        p.status = ProbeStatus::connected;
        inv.push_back(p);
    }
    auto a = derive_destinations({"top1.example", "top2.example"}, resolver, mapper, inv, 100, Family::v4);
    auto b = derive_destinations({"top1.example", "top2.example"}, resolver, mapper, inv, 100, Family::v4);
    REQUIRE(a.destinations.size() == b.destinations.size());
    for (std::size_t i = 0; i < a.destinations.size(); ++i) {
        CHECK(a.destinations[i].asn == b.destinations[i].asn);
        CHECK(a.destinations[i].source_domains == b.destinations[i].source_domains);
    }
}
