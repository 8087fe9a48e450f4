// asrisk -- turn traceroute results into per-AS entry/exit side
// probabilities and combine both sides into correlation potential.
//
// Entry side: directions D1 (client -> guard AS) and D4 (guard AS -> client).
// Exit side:  directions D2 (exit AS -> destination) and D3 (destination -> exit AS).
// Forward and reverse observations of one (endpoint, relay AS) pair are
// unioned; every AS in the union accrues that relay AS's probability once.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asrisk/consensus.hpp"
#include "asrisk/executor.hpp"
#include "asrisk/planner.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

enum class Side { entry, exit };

inline const char* side_name(Side s) { return s == Side::entry ? "entry" : "exit"; }

inline Side direction_side(Direction d) {
    return (d == Direction::D1 || d == Direction::D4) ? Side::entry : Side::exit;
}

enum class AsRole { endpoint, relay, transit };

inline const char* role_name(AsRole r) {
    switch (r) {
        case AsRole::endpoint: return "endpoint";
        case AsRole::relay: return "relay";
        case AsRole::transit: return "transit";
    }
    return "?";
}

struct PathObservation {
    Side side = Side::entry;
    std::uint32_t endpoint_asn = 0;  // client AS (entry) or destination AS (exit)
    std::uint32_t relay_asn = 0;     // guard AS (entry) or exit AS (exit)
    double relay_probability = 0.0;
    std::set<std::uint32_t> observed_asns;
    int unmapped_hops = 0;
};

// One result -> one observation. The source AS is on its own path by
// construction; responding hops are mapped through ip2asn and unmapped
// hops are dropped (tallied in unmapped_hops).
inline std::optional<PathObservation> extract_observation(const TracerouteResult& result,
                                                          const MeasurementDefinition& definition,
                                                          const AsnDatabase& mapper,
                                                          double relay_probability) {
    if (result.status == ResultStatus::failed) return std::nullopt;
    PathObservation obs;
    obs.side = direction_side(definition.direction);
    switch (definition.direction) {
        case Direction::D1:
            obs.endpoint_asn = definition.source_asn;
            obs.relay_asn = definition.target_asn;
            break;
        case Direction::D4:
            obs.endpoint_asn = definition.target_asn;
            obs.relay_asn = definition.source_asn;
            break;
        case Direction::D2:
            obs.endpoint_asn = definition.target_asn;
            obs.relay_asn = definition.source_asn;
            break;
        case Direction::D3:
            obs.endpoint_asn = definition.source_asn;
            obs.relay_asn = definition.target_asn;
            break;
    }
    obs.relay_probability = relay_probability;
    obs.observed_asns.insert(definition.source_asn);
    for (const auto& hop : result.hops) {
        for (const auto& resp : hop.responses) {
            if (!resp.from) continue;
            if (auto asn = mapper.lookup(*resp.from))
                obs.observed_asns.insert(*asn);
            else
                ++obs.unmapped_hops;
        }
    }
    return obs;
}

struct SideTableRow {
    std::uint32_t asn = 0;
    double p_total = 0.0;   // = p_relays + p_routes, exact
    double p_relays = 0.0;  // accruals where this AS hosts the pair's relays
    double p_routes = 0.0;  // accruals as intermediate or endpoint
    int route_count = 0;    // distinct traceroutes containing this AS
    AsRole role = AsRole::transit;
};

struct SideTable {
    Side side = Side::entry;
    std::uint32_t endpoint_asn = 0;
    std::vector<SideTableRow> rows;  // descending p_total, ties ascending ASN

    const SideTableRow* find(std::uint32_t asn) const {
        for (const auto& r : rows)
            if (r.asn == asn) return &r;
        return nullptr;
    }
};

// All observations must share one endpoint and side. relay_stats supplies
// the role marker (an AS hosting relays of this side is a relay AS).
inline SideTable build_side_table(const std::vector<PathObservation>& observations,
                                  const std::vector<AsStats>& relay_stats) {
    SideTable table;
    if (observations.empty()) return table;
    table.side = observations.front().side;
    table.endpoint_asn = observations.front().endpoint_asn;

    DiversityCurve::Kind kind =
        table.side == Side::entry ? DiversityCurve::Kind::guard : DiversityCurve::Kind::exit;

    // union the observed sets per relay-AS pair
    std::map<std::uint32_t, std::set<std::uint32_t>> pair_union;
    std::map<std::uint32_t, double> pair_probability;
    std::map<std::uint32_t, int> route_count;
    for (const auto& obs : observations) {
        if (obs.side != table.side || obs.endpoint_asn != table.endpoint_asn)
            throw ContractError("build_side_table: mixed sides or endpoints");
        pair_union[obs.relay_asn].insert(obs.observed_asns.begin(), obs.observed_asns.end());
        auto [it, fresh] = pair_probability.emplace(obs.relay_asn, obs.relay_probability);
        if (!fresh && it->second != obs.relay_probability)
            throw ContractError("build_side_table: inconsistent relay probability for AS" +
                                std::to_string(obs.relay_asn));
        for (std::uint32_t asn : obs.observed_asns) ++route_count[asn];
    }

    std::set<std::uint32_t> relay_hosts;
    for (const auto& s : relay_stats)
        if (side_probability(s, kind) > 0.0) relay_hosts.insert(s.asn);

    std::map<std::uint32_t, SideTableRow> rows;
    for (const auto& [relay_asn, members] : pair_union) {
        double p = pair_probability[relay_asn];
        for (std::uint32_t asn : members) {
            SideTableRow& row = rows[asn];
            row.asn = asn;
            if (asn == relay_asn)
                row.p_relays += p;
            else
                row.p_routes += p;
        }
    }
    for (auto& [asn, row] : rows) {
        row.p_total = row.p_relays + row.p_routes;
        row.route_count = route_count[asn];
        if (asn == table.endpoint_asn)
            row.role = AsRole::endpoint;
        else if (relay_hosts.count(asn))
            row.role = AsRole::relay;
        else
            row.role = AsRole::transit;
        table.rows.push_back(row);
    }
    std::sort(table.rows.begin(), table.rows.end(), [](const SideTableRow& a, const SideTableRow& b) {
        if (a.p_total != b.p_total) return a.p_total > b.p_total;
        return a.asn < b.asn;
    });
    return table;
}

struct CorrelationRow {
    std::uint32_t asn = 0;
    double p_guard = 0.0;
    double p_exit = 0.0;
    double p_and = 0.0;
    AsRole role = AsRole::transit;
};

enum class CombineMode { per_destination, worst_case_max };

// Rows for every AS present on both sides of this client's circuits;
// p_and is the product of the side probabilities. worst_case_max takes
// each AS's maximum exit-side probability over all destinations.
inline std::vector<CorrelationRow> combine(const SideTable& entry,
                                           const std::vector<SideTable>& exits,
                                           CombineMode mode) {
    if (exits.empty()) throw ContractError("combine: no exit-side tables");
    if (mode == CombineMode::per_destination && exits.size() != 1)
        throw ContractError("combine: per_destination mode takes exactly one exit table");
    if (entry.side != Side::entry) throw ContractError("combine: first table is not entry-side");
    for (const auto& e : exits)
        if (e.side != Side::exit) throw ContractError("combine: exit table list holds a non-exit table");

    std::map<std::uint32_t, std::pair<double, AsRole>> exit_best;
    for (const auto& table : exits) {
        for (const auto& row : table.rows) {
            auto [it, fresh] = exit_best.emplace(row.asn, std::make_pair(row.p_total, row.role));
            if (!fresh) {
                if (row.p_total > it->second.first) it->second.first = row.p_total;
                if (static_cast<int>(row.role) < static_cast<int>(it->second.second))
                    it->second.second = row.role;
            }
        }
    }

    std::vector<CorrelationRow> out;
    for (const auto& row : entry.rows) {
        if (row.p_total <= 0.0) continue;
        auto it = exit_best.find(row.asn);
        if (it == exit_best.end() || it->second.first <= 0.0) continue;
        CorrelationRow cr;
        cr.asn = row.asn;
        cr.p_guard = row.p_total;
        cr.p_exit = it->second.first;
        cr.p_and = cr.p_guard * cr.p_exit;
        cr.role = static_cast<int>(row.role) <= static_cast<int>(it->second.second) ? row.role
                                                                                    : it->second.second;
        out.push_back(cr);
    }
    std::sort(out.begin(), out.end(), [](const CorrelationRow& a, const CorrelationRow& b) {
        if (a.p_and != b.p_and) return a.p_and > b.p_and;
        return a.asn < b.asn;
    });
    return out;
}

// Keep rows at or above the threshold on both sides. Endpoint- and
// relay-role rows stay by default (marked by their role); drop them with
// keep_non_transit = false to look at pure transit ASes only.
inline std::vector<CorrelationRow> filter_significant(const std::vector<CorrelationRow>& rows,
                                                      double threshold = 0.01,
                                                      bool keep_non_transit = true) {
    std::vector<CorrelationRow> out;
    for (const auto& r : rows) {
        if (r.p_guard < threshold || r.p_exit < threshold) continue;
        if (!keep_non_transit && r.role != AsRole::transit) continue;
        out.push_back(r);
    }
    return out;
}

struct DirectionAccount {
    std::size_t planned = 0;
    std::size_t succeeded = 0;
};

struct AnalysisCoverage {
    std::array<DirectionAccount, 4> directions{};  // indexed by Direction
    double entry_covered_probability = 0.0;  // relay mass with >=1 successful observation
    double exit_covered_probability = 0.0;

    std::size_t planned_total() const {
        std::size_t n = 0;
        for (const auto& d : directions) n += d.planned;
        return n;
    }
    std::size_t succeeded_total() const {
        std::size_t n = 0;
        for (const auto& d : directions) n += d.succeeded;
        return n;
    }
};

inline AnalysisCoverage analysis_coverage(const Plan& plan,
                                          const std::vector<TracerouteResult>& results,
                                          const std::vector<PathObservation>& observations) {
    AnalysisCoverage cov;
    for (const auto& def : plan.definitions)
        ++cov.directions[static_cast<int>(def.direction)].planned;
    for (const auto& r : results)
        if (r.status == ResultStatus::success)
            ++cov.directions[static_cast<int>(plan.definitions[r.definition_ref].direction)].succeeded;

    // covered mass per side: each relay AS with at least one successful
    // observation contributes its probability once
    std::map<std::uint32_t, double> entry_mass, exit_mass;
    for (const auto& obs : observations) {
        if (obs.side == Side::entry)
            entry_mass.emplace(obs.relay_asn, obs.relay_probability);
        else
            exit_mass.emplace(obs.relay_asn, obs.relay_probability);
    }
    KahanSum entry_sum, exit_sum;
    for (const auto& [asn, p] : entry_mass) entry_sum.add(p);
    for (const auto& [asn, p] : exit_mass) exit_sum.add(p);
    cov.entry_covered_probability = entry_sum.value();
    cov.exit_covered_probability = exit_sum.value();
    return cov;
}

// Convenience: split observations by (side, endpoint) for table building.
inline std::map<std::pair<Side, std::uint32_t>, std::vector<PathObservation>> group_observations(
    const std::vector<PathObservation>& observations) {
    std::map<std::pair<Side, std::uint32_t>, std::vector<PathObservation>> out;
    for (const auto& obs : observations) out[{obs.side, obs.endpoint_asn}].push_back(obs);
    return out;
}

}  // namespace asrisk
