#include <catch2/catch_amalgamated.hpp>

#include "asrisk/planner.hpp"
#include "helpers.hpp"

using namespace asrisk;
using testutil::make_probe;

namespace {

struct PlannerFixture {
    AsnDatabase mapper;
    ConsensusSnapshot snapshot;
    AsAggregate aggregate;
    std::vector<ProbeRecord> inventory;
    TargetSets targets;
    ScenarioSpec spec;

    PlannerFixture() {
        mapper.load_ip2asn(
            "10.0.0.0\t10.0.0.255\t64500\tZZ\tCLIENT-NET\n"   // client
            "10.0.1.0\t10.0.1.255\t64510\tZZ\tGUARD-A\n"      // guards
            "10.0.2.0\t10.0.2.255\t64511\tZZ\tGUARD-B\n"
            "10.0.3.0\t10.0.3.255\t64512\tZZ\tGUARD-C\n"
            "10.0.4.0\t10.0.4.255\t64520\tZZ\tEXIT-A\n"       // exits
            "10.0.5.0\t10.0.5.255\t64521\tZZ\tEXIT-B\n"
            "10.0.6.0\t10.0.6.255\t64530\tZZ\tDEST-NET\n",    // destination
            Family::v4);
        snapshot = load_snapshot(R"({"relays": [
            {"fingerprint": "G1a", "or_addresses": ["10.0.1.10:1"], "guard_probability": 0.35},
            {"fingerprint": "G1b", "or_addresses": ["10.0.1.11:1"], "guard_probability": 0.15},
            {"fingerprint": "G2", "or_addresses": ["10.0.2.10:1"], "guard_probability": 0.3},
            {"fingerprint": "G3", "or_addresses": ["10.0.3.10:1"], "guard_probability": 0.2},
            {"fingerprint": "E1", "or_addresses": ["10.0.4.10:1"], "exit_probability": 0.6},
            {"fingerprint": "E2", "or_addresses": ["10.0.5.10:1"], "exit_probability": 0.4}
        ]})");
        aggregate = aggregate_by_as(snapshot, mapper, Family::v4);
        inventory = {make_probe(11, 64500, "10.0.0.20"), make_probe(12, 64530, "10.0.6.20"),
                     make_probe(21, 64510, "10.0.1.20"), make_probe(22, 64510, "10.0.1.21"),
                     make_probe(31, 64520, "10.0.4.20")};
        spec.label = "planner-demo";
        spec.family = Family::v4;
        targets.family = Family::v4;
        targets.clients = {{64500, 11, *IpAddr::parse("10.0.0.20")}};
        targets.destinations.push_back({64530, 12, *IpAddr::parse("10.0.6.20"), {}, std::nullopt});
    }
};

}  // namespace

TEST_CASE("plan sizes are the direction products") {
    PlannerFixture f;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.count(Direction::D1) == 3);  // 1 client x 3 guard ASes
    CHECK(plan.count(Direction::D2) == 1);  // 1 exit AS with probe x 1 destination
    CHECK(plan.count(Direction::D3) == 2);  // 1 destination x 2 exit ASes
    CHECK(plan.count(Direction::D4) == 1);  // 1 guard AS with probe x 1 client
    CHECK(plan.definitions.size() == 7);
}

TEST_CASE("two clients double D1 and D4") {
    PlannerFixture f;
    f.targets.clients.push_back({64511, 99, *IpAddr::parse("10.0.2.20")});
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.count(Direction::D1) == 6);
    CHECK(plan.count(Direction::D4) == 2);
}

TEST_CASE("zero destinations empty both exit directions") {
    PlannerFixture f;
    f.targets.destinations.clear();
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.count(Direction::D2) == 0);
    CHECK(plan.count(Direction::D3) == 0);
    CHECK(plan.count(Direction::D1) == 3);
}

TEST_CASE("relay targets use the strongest relay; probe targets use probe addresses") {
    PlannerFixture f;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    for (const auto& def : plan.definitions) {
        if (def.direction == Direction::D1 && def.target_asn == 64510)
            CHECK(def.target_ip.to_string() == "10.0.1.10");  // G1a (0.35) beats G1b (0.15)
        if (def.direction == Direction::D4) {
            CHECK(def.target_ip.to_string() == "10.0.0.20");  // client probe address
            CHECK(def.source_probe == 21);                    // primary probe, lowest id
        }
        if (def.direction == Direction::D2) CHECK(def.target_ip.to_string() == "10.0.6.20");
    }
}

TEST_CASE("fallback probes add definitions for multi-probe relay ASes") {
    PlannerFixture f;
    f.spec.fallback_count = 1;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.count(Direction::D4) == 2);  // probes 21 and 22 in AS64510
    CHECK(plan.count(Direction::D2) == 1);  // AS64520 has a single probe either way
    // fallback keeps primary-first ordering
    std::vector<std::int64_t> d4_probes;
    for (const auto& def : plan.definitions)
        if (def.direction == Direction::D4) d4_probes.push_back(def.source_probe);
    CHECK(d4_probes == std::vector<std::int64_t>{21, 22});
}

TEST_CASE("definitions are sorted and rebuilds are identical") {
    PlannerFixture f;
    Plan a = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    Plan b = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan_to_json(a) == plan_to_json(b));
    for (std::size_t i = 1; i < a.definitions.size(); ++i) {
        const auto& x = a.definitions[i - 1];
        const auto& y = a.definitions[i];
        bool ordered = x.direction < y.direction ||
                       (x.direction == y.direction &&
                        (x.source_asn < y.source_asn ||
                         (x.source_asn == y.source_asn && x.target_asn <= y.target_asn)));
        CHECK(ordered);
    }
}

TEST_CASE("role-set containment between forward and reverse directions") {
    PlannerFixture f;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    std::set<std::uint32_t> d2_sources, d3_targets, d4_sources, d1_targets;
    for (const auto& def : plan.definitions) {
        if (def.direction == Direction::D1) d1_targets.insert(def.target_asn);
        if (def.direction == Direction::D2) d2_sources.insert(def.source_asn);
        if (def.direction == Direction::D3) d3_targets.insert(def.target_asn);
        if (def.direction == Direction::D4) d4_sources.insert(def.source_asn);
    }
    for (auto asn : d2_sources) CHECK(d3_targets.count(asn) == 1);
    for (auto asn : d4_sources) CHECK(d1_targets.count(asn) == 1);
}

TEST_CASE("every definition carries the fixed measurement parameters") {
    PlannerFixture f;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    auto text = plan_to_json(plan);
    auto parsed = nlohmann::json::parse(text);
    REQUIRE(parsed.is_array());
    for (const auto& j : parsed) {
        CHECK(j.at("protocol") == "ICMP");
        CHECK(j.at("response_timeout_ms") == 20000);
        CHECK(j.at("packets_per_hop") == 1);
    }
}

TEST_CASE("coverage estimates: full sides report 1.0, probe sides report mass") {
    PlannerFixture f;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.coverage_estimate[0] == 1.0);
    CHECK(plan.coverage_estimate[1] == Catch::Approx(0.6));  // exit AS64520 has the probe
    CHECK(plan.coverage_estimate[2] == 1.0);
    CHECK(plan.coverage_estimate[3] == Catch::Approx(0.5));  // guard AS64510
    auto re = estimate_coverage(plan, f.aggregate);
    CHECK(re[1] == Catch::Approx(0.6));
    CHECK(re[3] == Catch::Approx(0.5));
}

TEST_CASE("full exit coverage reports the whole exit mass") {
    PlannerFixture f;
    f.inventory.push_back(make_probe(32, 64521, "10.0.5.20"));
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.coverage_estimate[1] == Catch::Approx(1.0));
}

TEST_CASE("synthetic fallback-free D2 coverage example") {
    // exit ASes 0.6 (probe) and 0.4 (no probe): D2 coverage 0.6
    PlannerFixture f;
    auto it = std::remove_if(f.inventory.begin(), f.inventory.end(),
                             [](const ProbeRecord& p) { return p.probe_id == 31; });
    f.inventory.erase(it, f.inventory.end());
    f.inventory.push_back(make_probe(31, 64520, "10.0.4.20"));
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.coverage_estimate[1] == Catch::Approx(0.6));
}

TEST_CASE("a stats row without any consensus relay is skipped with a warning") {
    PlannerFixture f;
    AsStats ghost;
    ghost.asn = 64999;
    ghost.p_guard = 0.1;
    ghost.family = Family::v4;
    f.aggregate.stats.push_back(ghost);
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    CHECK(plan.count(Direction::D1) == 3);  // ghost AS contributed no pair
    bool warned = false;
    for (const auto& w : plan.warnings)
        if (w.find("64999") != std::string::npos) warned = true;
    CHECK(warned);
}

TEST_CASE("plan JSON round trip preserves definitions") {
    PlannerFixture f;
    f.spec.fallback_count = 1;
    Plan plan = build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper);
    Plan back = plan_from_json(plan_to_json(plan), plan.scenario_label);
    REQUIRE(back.definitions.size() == plan.definitions.size());
    for (std::size_t i = 0; i < plan.definitions.size(); ++i) {
        CHECK(back.definitions[i].key() == plan.definitions[i].key());
        CHECK(back.definitions[i].source_probe == plan.definitions[i].source_probe);
        CHECK(back.definitions[i].target_ip == plan.definitions[i].target_ip);
    }
    CHECK(back.family == Family::v4);
}

TEST_CASE("replay keys name direction, AS pair and family") {
    MeasurementDefinition def;
    def.direction = Direction::D2;
    def.source_asn = 64520;
    def.target_asn = 64530;
    def.family = Family::v4;
    CHECK(def.key() == "D2:64520:64530:v4");
}

TEST_CASE("family mismatch between aggregate and targets is a contract error") {
    PlannerFixture f;
    f.targets.family = Family::v6;
    CHECK_THROWS_AS(build_plan(f.spec, f.targets, f.snapshot, f.aggregate, f.inventory, f.mapper),
                    ContractError);
}
