// asrisk -- measurement-probe inventory: parse probe records, pick one
// probe per AS, and compute how much guard/exit probability the probes cover.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrisk/consensus.hpp"
#include "asrisk/ip_addr.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

enum class ProbeStatus { connected, disconnected, abandoned };

struct ProbeRecord {
    std::int64_t probe_id = 0;
    std::optional<std::uint32_t> asn_v4;
    std::optional<std::uint32_t> asn_v6;
    std::optional<IpAddr> address_v4;
    std::optional<IpAddr> address_v6;
    ProbeStatus status = ProbeStatus::disconnected;
    std::string country_code;

    // Eligible = connected, with an AS number and a public address for the
    // family. Abandoned probes are never eligible.
    bool eligible(Family f) const {
        if (status != ProbeStatus::connected) return false;
        if (f == Family::v4) return asn_v4.has_value() && address_v4.has_value();
        return asn_v6.has_value() && address_v6.has_value();
    }
    std::optional<std::uint32_t> asn(Family f) const {
        return f == Family::v4 ? asn_v4 : asn_v6;
    }
    const std::optional<IpAddr>& address(Family f) const {
        return f == Family::v4 ? address_v4 : address_v6;
    }
};

struct CoverageReport {
    Family family = Family::v4;
    DiversityCurve::Kind side = DiversityCurve::Kind::guard;
    int total_ases = 0;
    int covered_ases = 0;
    int total_relays = 0;
    int covered_relays = 0;
    double total_probability = 0.0;
    double covered_probability = 0.0;
};

inline ProbeStatus parse_probe_status(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "connected") return ProbeStatus::connected;
    if (s == "abandoned") return ProbeStatus::abandoned;
    return ProbeStatus::disconnected;  // disconnected, never connected, unknown
}

// Probe document: JSON array of probe objects (the public probe-API shape,
// also accepted wrapped in {"results": [...]}). Unknown fields ignored.
inline std::vector<ProbeRecord> load_probes(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("probe document: ") + e.what(), e.byte);
    }
    const nlohmann::json* arr = &doc;
    if (doc.is_object() && doc.contains("results") && doc["results"].is_array())
        arr = &doc["results"];
    if (!arr->is_array())
        throw ParseError("probe document: expected a JSON array of probes");

    std::vector<ProbeRecord> out;
    out.reserve(arr->size());
    for (const auto& pj : *arr) {
        if (!pj.is_object())
            throw ParseError("probe document: probe entry is not an object");
        ProbeRecord p;
        if (pj.contains("id") && pj["id"].is_number_integer())
            p.probe_id = pj["id"].get<std::int64_t>();
        else
            throw ParseError("probe document: probe entry missing integer 'id'");
        if (pj.contains("asn_v4") && pj["asn_v4"].is_number_unsigned())
            p.asn_v4 = pj["asn_v4"].get<std::uint32_t>();
        if (pj.contains("asn_v6") && pj["asn_v6"].is_number_unsigned())
            p.asn_v6 = pj["asn_v6"].get<std::uint32_t>();
        if (pj.contains("address_v4") && pj["address_v4"].is_string())
            p.address_v4 = IpAddr::parse(pj["address_v4"].get<std::string>());
        if (pj.contains("address_v6") && pj["address_v6"].is_string())
            p.address_v6 = IpAddr::parse(pj["address_v6"].get<std::string>());
        if (pj.contains("status") && pj["status"].is_object() &&
            pj["status"].contains("name") && pj["status"]["name"].is_string())
            p.status = parse_probe_status(pj["status"]["name"].get<std::string>());
        if (pj.contains("country_code") && pj["country_code"].is_string())
            p.country_code = pj["country_code"].get<std::string>();
        out.push_back(std::move(p));
    }
    return out;
}

// Lowest probe id among the eligible probes of an AS; deterministic across runs.
inline std::optional<ProbeRecord> select_probe(const std::vector<ProbeRecord>& inventory,
                                               std::uint32_t asn, Family family) {
    const ProbeRecord* best = nullptr;
    for (const auto& p : inventory) {
        if (!p.eligible(family) || p.asn(family) != asn) continue;
        if (!best || p.probe_id < best->probe_id) best = &p;
    }
    if (!best) return std::nullopt;
    return *best;
}

// All eligible probes of an AS, ordered by ascending id (primary first).
inline std::vector<ProbeRecord> eligible_probes(const std::vector<ProbeRecord>& inventory,
                                                std::uint32_t asn, Family family) {
    std::vector<ProbeRecord> out;
    for (const auto& p : inventory)
        if (p.eligible(family) && p.asn(family) == asn) out.push_back(p);
    std::sort(out.begin(), out.end(),
              [](const ProbeRecord& a, const ProbeRecord& b) { return a.probe_id < b.probe_id; });
    return out;
}

inline std::set<std::uint32_t> covered_ases(const std::vector<ProbeRecord>& inventory,
                                            Family family) {
    std::set<std::uint32_t> out;
    for (const auto& p : inventory)
        if (p.eligible(family)) out.insert(*p.asn(family));
    return out;
}

inline CoverageReport coverage(const std::vector<AsStats>& stats,
                               const std::vector<ProbeRecord>& inventory,
                               DiversityCurve::Kind side, Family family) {
    CoverageReport rep;
    rep.family = family;
    rep.side = side;
    auto probed = covered_ases(inventory, family);
    KahanSum total, covered;
    for (const auto& s : stats) {
        double p = side_probability(s, side);
        if (p <= 0.0) continue;
        ++rep.total_ases;
        rep.total_relays += s.relay_count;
        total.add(p);
        if (probed.count(s.asn)) {
            ++rep.covered_ases;
            rep.covered_relays += s.relay_count;
            covered.add(p);
        }
    }
    rep.total_probability = total.value();
    rep.covered_probability = covered.value();
    return rep;
}

// The n highest-probability ASes of the side that no eligible probe lives in.
inline std::vector<AsStats> top_uncovered(const std::vector<AsStats>& stats,
                                          const std::vector<ProbeRecord>& inventory,
                                          DiversityCurve::Kind side, std::size_t n) {
    Family family = stats.empty() ? Family::v4 : stats.front().family;
    auto probed = covered_ases(inventory, family);
    std::vector<AsStats> uncovered;
    for (const auto& s : stats)
        if (side_probability(s, side) > 0.0 && !probed.count(s.asn)) uncovered.push_back(s);
    std::sort(uncovered.begin(), uncovered.end(), [side](const AsStats& a, const AsStats& b) {
        double pa = side_probability(a, side), pb = side_probability(b, side);
        if (pa != pb) return pa > pb;
        return a.asn < b.asn;
    });
    if (uncovered.size() > n) uncovered.resize(n);
    return uncovered;
}

}  // namespace asrisk
