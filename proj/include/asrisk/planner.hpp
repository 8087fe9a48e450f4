// asrisk -- expand target sets into the four traceroute direction plans.
//
//   D1  client probe        -> guard relay AS
//   D2  exit relay AS probe -> destination probe
//   D3  destination probe   -> exit relay AS
//   D4  guard relay AS probe-> client probe

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrisk/consensus.hpp"
#include "asrisk/probes.hpp"
#include "asrisk/targets.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

enum class Direction { D1, D2, D3, D4 };

inline const char* direction_name(Direction d) {
    switch (d) {
        case Direction::D1: return "D1";
        case Direction::D2: return "D2";
        case Direction::D3: return "D3";
        case Direction::D4: return "D4";
    }
    return "?";
}

inline std::optional<Direction> direction_from_string(std::string_view s) {
    if (s == "D1") return Direction::D1;
    if (s == "D2") return Direction::D2;
    if (s == "D3") return Direction::D3;
    if (s == "D4") return Direction::D4;
    return std::nullopt;
}

// Measurement parameters are constants of the method, not knobs.
constexpr const char* kTracerouteProtocol = "ICMP";
constexpr int kResponseTimeoutMs = 20000;
constexpr int kPacketsPerHop = 1;

struct MeasurementDefinition {
    Direction direction = Direction::D1;
    std::int64_t source_probe = 0;
    std::uint32_t source_asn = 0;
    IpAddr target_ip;
    std::uint32_t target_asn = 0;
    Family family = Family::v4;

    // Replay/store key; deliberately excludes the probe id so archives
    // survive probe churn.
    std::string key() const {
        return std::string(direction_name(direction)) + ":" + std::to_string(source_asn) + ":" +
               std::to_string(target_asn) + ":" + family_name(family);
    }
};

struct Plan {
    std::string scenario_label;
    Family family = Family::v4;
    std::vector<MeasurementDefinition> definitions;
    std::array<double, 4> coverage_estimate{};  // by direction index
    std::vector<std::string> warnings;

    std::size_t count(Direction d) const {
        return std::count_if(definitions.begin(), definitions.end(),
                             [d](const MeasurementDefinition& m) { return m.direction == d; });
    }
};

namespace detail {

// Address of the relay with the highest probability of the requested kind
// inside this AS; deterministic tie-break on fingerprint.
inline std::optional<IpAddr> representative_relay_address(const ConsensusSnapshot& snapshot,
                                                          const AsnDatabase& mapper,
                                                          std::uint32_t asn, Family family,
                                                          DiversityCurve::Kind kind) {
    const RelayDescriptor* best = nullptr;
    for (const auto& r : snapshot.relays) {
        const auto& addr = r.addr(family);
        if (!addr) continue;
        auto mapped = mapper.lookup(*addr);
        if (!mapped || *mapped != asn) continue;
        double p = kind == DiversityCurve::Kind::guard ? r.guard_probability : r.exit_probability;
        if (!best) {
            best = &r;
            continue;
        }
        double bp = kind == DiversityCurve::Kind::guard ? best->guard_probability : best->exit_probability;
        if (p > bp || (p == bp && r.fingerprint < best->fingerprint)) best = &r;
    }
    if (!best) return std::nullopt;
    return *best->addr(family);
}

}  // namespace detail

// Sizes: |D1| = clients x guard ASes, |D3| = destinations x exit ASes,
// |D2| = exit-with-probe ASes x destinations, |D4| = guard-with-probe ASes
// x clients. fallback_count adds definitions from further probes of the
// same relay AS where available (D2/D4 only).
inline Plan build_plan(const ScenarioSpec& spec, const TargetSets& targets,
                       const ConsensusSnapshot& snapshot, const AsAggregate& aggregate,
                       const std::vector<ProbeRecord>& inventory, const AsnDatabase& mapper) {
    if (aggregate.family != targets.family)
        throw ContractError("build_plan: aggregate and targets have different families");
    Family family = targets.family;

    Plan plan;
    plan.scenario_label = spec.label;
    plan.family = family;

    std::vector<const AsStats*> guard_ases, exit_ases;
    for (const auto& s : aggregate.stats) {
        if (s.p_guard > 0.0) guard_ases.push_back(&s);
        if (s.p_exit > 0.0) exit_ases.push_back(&s);
    }

    // relay target addresses, resolved once per (AS, kind)
    auto relay_target = [&](std::uint32_t asn, DiversityCurve::Kind kind) {
        return detail::representative_relay_address(snapshot, mapper, asn, family, kind);
    };

    // D1: every client probe traceroutes every guard AS
    for (const auto& client : targets.clients) {
        for (const AsStats* g : guard_ases) {
            auto addr = relay_target(g->asn, DiversityCurve::Kind::guard);
            if (!addr) {
                plan.warnings.push_back("D1 AS" + std::to_string(g->asn) +
                                        ": no relay address of the requested family, pair skipped");
                continue;
            }
            plan.definitions.push_back({Direction::D1, client.probe_id, client.asn, *addr, g->asn, family});
        }
    }

    // D2: probes inside exit ASes traceroute every destination probe
    KahanSum d2_mass;
    for (const AsStats* e : exit_ases) {
        auto probes = eligible_probes(inventory, e->asn, family);
        if (probes.empty()) continue;
        d2_mass.add(e->p_exit);
        std::size_t take = std::min<std::size_t>(probes.size(), 1 + static_cast<std::size_t>(spec.fallback_count));
        for (std::size_t i = 0; i < take; ++i)
            for (const auto& dest : targets.destinations)
                plan.definitions.push_back(
                    {Direction::D2, probes[i].probe_id, e->asn, dest.probe_address, dest.asn, family});
    }

    // D3: every destination probe traceroutes every exit AS
    for (const auto& dest : targets.destinations) {
        for (const AsStats* e : exit_ases) {
            auto addr = relay_target(e->asn, DiversityCurve::Kind::exit);
            if (!addr) {
                plan.warnings.push_back("D3 AS" + std::to_string(e->asn) +
                                        ": no relay address of the requested family, pair skipped");
                continue;
            }
            plan.definitions.push_back({Direction::D3, dest.probe_id, dest.asn, *addr, e->asn, family});
        }
    }

    // D4: probes inside guard ASes traceroute every client probe
    KahanSum d4_mass;
    for (const AsStats* g : guard_ases) {
        auto probes = eligible_probes(inventory, g->asn, family);
        if (probes.empty()) continue;
        d4_mass.add(g->p_guard);
        std::size_t take = std::min<std::size_t>(probes.size(), 1 + static_cast<std::size_t>(spec.fallback_count));
        for (std::size_t i = 0; i < take; ++i)
            for (const auto& client : targets.clients)
                plan.definitions.push_back(
                    {Direction::D4, probes[i].probe_id, g->asn, client.probe_address, client.asn, family});
    }

    // deterministic order: direction, source AS, target AS, then probe id
    // so fallback definitions follow their primary
    std::sort(plan.definitions.begin(), plan.definitions.end(),
              [](const MeasurementDefinition& a, const MeasurementDefinition& b) {
                  if (a.direction != b.direction) return a.direction < b.direction;
                  if (a.source_asn != b.source_asn) return a.source_asn < b.source_asn;
                  if (a.target_asn != b.target_asn) return a.target_asn < b.target_asn;
                  return a.source_probe < b.source_probe;
              });

    plan.coverage_estimate[0] = 1.0;
    plan.coverage_estimate[1] = d2_mass.value();
    plan.coverage_estimate[2] = 1.0;
    plan.coverage_estimate[3] = d4_mass.value();
    return plan;
}

// D1/D3 cover their whole target sets by construction; D2/D4 cover the
// probability mass of the relay ASes they could source from.
inline std::array<double, 4> estimate_coverage(const Plan& plan, const AsAggregate& aggregate) {
    std::array<double, 4> out{1.0, 0.0, 1.0, 0.0};
    std::map<std::uint32_t, double> guard_p, exit_p;
    for (const auto& s : aggregate.stats) {
        if (s.p_guard > 0.0) guard_p[s.asn] = s.p_guard;
        if (s.p_exit > 0.0) exit_p[s.asn] = s.p_exit;
    }
    std::set<std::uint32_t> d2_sources, d4_sources;
    for (const auto& def : plan.definitions) {
        if (def.direction == Direction::D2) d2_sources.insert(def.source_asn);
        if (def.direction == Direction::D4) d4_sources.insert(def.source_asn);
    }
    KahanSum d2, d4;
    for (auto asn : d2_sources)
        if (auto it = exit_p.find(asn); it != exit_p.end()) d2.add(it->second);
    for (auto asn : d4_sources)
        if (auto it = guard_p.find(asn); it != guard_p.end()) d4.add(it->second);
    out[1] = d2.value();
    out[3] = d4.value();
    return out;
}

// Plan file: JSON array of definitions, stable key order, audit- and
// replay-friendly.
inline std::string plan_to_json(const Plan& plan) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& def : plan.definitions) {
        nlohmann::ordered_json j;
        j["direction"] = direction_name(def.direction);
        j["source_probe"] = def.source_probe;
        j["source_asn"] = def.source_asn;
        j["target_ip"] = def.target_ip.to_string();
        j["target_asn"] = def.target_asn;
        j["family"] = family_name(def.family);
        j["protocol"] = kTracerouteProtocol;
        j["response_timeout_ms"] = kResponseTimeoutMs;
        j["packets_per_hop"] = kPacketsPerHop;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

inline Plan plan_from_json(std::string_view text, const std::string& label = {}) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("plan file: ") + e.what(), e.byte);
    }
    if (!arr.is_array()) throw ParseError("plan file: expected a JSON array");
    Plan plan;
    plan.scenario_label = label;
    for (const auto& j : arr) {
        MeasurementDefinition def;
        auto dir = direction_from_string(j.at("direction").get<std::string>());
        if (!dir) throw ParseError("plan file: bad direction");
        def.direction = *dir;
        def.source_probe = j.at("source_probe").get<std::int64_t>();
        def.source_asn = j.at("source_asn").get<std::uint32_t>();
        auto addr = IpAddr::parse(j.at("target_ip").get<std::string>());
        if (!addr) throw ParseError("plan file: bad target_ip");
        def.target_ip = *addr;
        def.target_asn = j.at("target_asn").get<std::uint32_t>();
        auto fam = family_from_string(j.at("family").get<std::string>());
        if (!fam) throw ParseError("plan file: bad family");
        def.family = *fam;
        if (j.contains("protocol") && j["protocol"].get<std::string>() != kTracerouteProtocol)
            throw ValidationError("plan file: unexpected protocol");
        plan.definitions.push_back(std::move(def));
    }
    if (!plan.definitions.empty()) plan.family = plan.definitions.front().family;
    return plan;
}

}  // namespace asrisk
