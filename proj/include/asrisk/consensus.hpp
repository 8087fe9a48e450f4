// asrisk -- Tor relay snapshot: parse relay-detail documents, aggregate
// guard/exit probability per AS, diversity curves, IPv6 support counts.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrisk/asn_map.hpp"
#include "asrisk/ip_addr.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

struct RelayDescriptor {
    std::string fingerprint;
    std::optional<IpAddr> addr_v4;
    std::optional<IpAddr> addr_v6;
    std::set<std::string> flags;
    std::uint64_t advertised_bandwidth = 0;  // bytes/s
    double guard_probability = 0.0;
    double exit_probability = 0.0;

    const std::optional<IpAddr>& addr(Family f) const {
        return f == Family::v4 ? addr_v4 : addr_v6;
    }
    bool is_guard() const { return guard_probability > 0.0; }
    bool is_exit() const { return exit_probability > 0.0; }
};

struct ConsensusSnapshot {
    std::string fetched_at;  // provenance only, carried from the source document
    std::vector<RelayDescriptor> relays;
    std::size_t dropped_without_address = 0;

    double total_guard_probability() const {
        KahanSum s;
        for (const auto& r : relays) s.add(r.guard_probability);
        return s.value();
    }
    double total_exit_probability() const {
        KahanSum s;
        for (const auto& r : relays) s.add(r.exit_probability);
        return s.value();
    }
};

struct AsStats {
    std::uint32_t asn = 0;
    int relay_count = 0;
    std::uint64_t bandwidth_bytes = 0;  // rendered as Gbit/s in tables
    double p_guard = 0.0;
    double p_exit = 0.0;
    Family family = Family::v4;
};

// aggregate_by_as output: one AsStats per AS plus the relays whose address
// had no ip2asn mapping, reported separately rather than silently dropped.
struct AsAggregate {
    std::vector<AsStats> stats;  // sorted by ASN
    Family family = Family::v4;
    int unmapped_relays = 0;
    double unmapped_guard = 0.0;
    double unmapped_exit = 0.0;
    std::uint64_t unmapped_bandwidth = 0;
    int skipped_no_family_address = 0;
};

struct DiversityCurve {
    enum class Kind { guard, exit };
    Kind kind = Kind::guard;
    // (1-based AS rank, cumulative probability), rank order: descending
    // probability, ties by ascending ASN
    std::vector<std::pair<int, double>> points;
};

// "ip:port" with IPv6 in brackets.
inline std::optional<IpAddr> parse_or_address(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '[') {
        auto close = s.find(']');
        if (close == std::string::npos) return std::nullopt;
        return IpAddr::parse(s.substr(1, close - 1));
    }
    auto colon = s.rfind(':');
    if (colon == std::string::npos) return IpAddr::parse(s);
    return IpAddr::parse(s.substr(0, colon));
}

// Relay-details document: JSON object with a "relays" array, onionoo
// "details" schema. Unknown fields are ignored; absent probabilities are 0.
inline ConsensusSnapshot load_snapshot(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("relay-details document: ") + e.what(), e.byte);
    }
    if (!doc.is_object() || !doc.contains("relays") || !doc["relays"].is_array())
        throw ParseError("relay-details document: missing 'relays' array");

    ConsensusSnapshot snap;
    if (doc.contains("relays_published") && doc["relays_published"].is_string())
        snap.fetched_at = doc["relays_published"].get<std::string>();

    for (const auto& rj : doc["relays"]) {
        if (!rj.is_object())
            throw ParseError("relay-details document: relay entry is not an object");
        RelayDescriptor r;
        if (rj.contains("fingerprint") && rj["fingerprint"].is_string())
            r.fingerprint = rj["fingerprint"].get<std::string>();
        if (rj.contains("or_addresses") && rj["or_addresses"].is_array()) {
            for (const auto& aj : rj["or_addresses"]) {
                if (!aj.is_string()) continue;
                auto addr = parse_or_address(aj.get<std::string>());
                if (!addr) continue;
                if (addr->family() == Family::v4 && !r.addr_v4) r.addr_v4 = *addr;
                if (addr->family() == Family::v6 && !r.addr_v6) r.addr_v6 = *addr;
            }
        }
        if (rj.contains("flags") && rj["flags"].is_array())
            for (const auto& fj : rj["flags"])
                if (fj.is_string()) r.flags.insert(fj.get<std::string>());
        if (rj.contains("advertised_bandwidth") && rj["advertised_bandwidth"].is_number())
            r.advertised_bandwidth = rj["advertised_bandwidth"].get<std::uint64_t>();
        if (rj.contains("guard_probability") && rj["guard_probability"].is_number())
            r.guard_probability = rj["guard_probability"].get<double>();
        if (rj.contains("exit_probability") && rj["exit_probability"].is_number())
            r.exit_probability = rj["exit_probability"].get<double>();

        if (r.guard_probability < 0.0 || r.guard_probability > 1.0 ||
            r.exit_probability < 0.0 || r.exit_probability > 1.0)
            throw ValidationError("relay " + r.fingerprint + ": probability outside [0,1]");

        if (!r.addr_v4 && !r.addr_v6) {
            ++snap.dropped_without_address;
            continue;
        }
        snap.relays.push_back(std::move(r));
    }

    constexpr double kEps = 1e-6;
    if (snap.total_guard_probability() > 1.0 + kEps)
        throw ValidationError("snapshot guard probability mass exceeds 1");
    if (snap.total_exit_probability() > 1.0 + kEps)
        throw ValidationError("snapshot exit probability mass exceeds 1");
    return snap;
}

// Relays lacking an address of the requested family are skipped (the
// per-family analyses only see relays reachable over that family);
// relays whose address has no ASN mapping land in the unmapped bucket.
inline AsAggregate aggregate_by_as(const ConsensusSnapshot& snapshot,
                                   const AsnDatabase& mapper, Family family) {
    struct Acc {
        int relays = 0;
        std::uint64_t bandwidth = 0;
        KahanSum guard;
        KahanSum exit;
    };
    std::map<std::uint32_t, Acc> by_as;
    AsAggregate out;
    out.family = family;
    KahanSum unmapped_guard, unmapped_exit;
    for (const auto& r : snapshot.relays) {
        const auto& addr = r.addr(family);
        if (!addr) {
            ++out.skipped_no_family_address;
            continue;
        }
        auto asn = mapper.lookup(*addr);
        if (!asn) {
            ++out.unmapped_relays;
            unmapped_guard.add(r.guard_probability);
            unmapped_exit.add(r.exit_probability);
            out.unmapped_bandwidth += r.advertised_bandwidth;
            continue;
        }
        Acc& a = by_as[*asn];
        ++a.relays;
        a.bandwidth += r.advertised_bandwidth;
        a.guard.add(r.guard_probability);
        a.exit.add(r.exit_probability);
    }
    out.unmapped_guard = unmapped_guard.value();
    out.unmapped_exit = unmapped_exit.value();
    out.stats.reserve(by_as.size());
    for (const auto& [asn, acc] : by_as) {
        AsStats s;
        s.asn = asn;
        s.relay_count = acc.relays;
        s.bandwidth_bytes = acc.bandwidth;
        s.p_guard = acc.guard.value();
        s.p_exit = acc.exit.value();
        s.family = family;
        out.stats.push_back(s);
    }
    return out;
}

inline double side_probability(const AsStats& s, DiversityCurve::Kind kind) {
    return kind == DiversityCurve::Kind::guard ? s.p_guard : s.p_exit;
}

inline DiversityCurve diversity_curve(const std::vector<AsStats>& stats,
                                      DiversityCurve::Kind kind) {
    if (stats.empty())
        throw ValidationError("diversity_curve: empty AS statistics");
    std::vector<const AsStats*> order;
    order.reserve(stats.size());
    for (const auto& s : stats) order.push_back(&s);
    std::sort(order.begin(), order.end(), [kind](const AsStats* a, const AsStats* b) {
        double pa = side_probability(*a, kind), pb = side_probability(*b, kind);
        if (pa != pb) return pa > pb;
        return a->asn < b->asn;
    });
    DiversityCurve curve;
    curve.kind = kind;
    KahanSum cumulative;
    int rank = 1;
    for (const AsStats* s : order) {
        cumulative.add(side_probability(*s, kind));
        curve.points.emplace_back(rank++, cumulative.value());
    }
    return curve;
}

struct Ipv6SupportRow {
    int relays_all = 0;
    int relays_v6 = 0;
    int ases_all = 0;  // distinct ASes via the v4 mapping
    int ases_v6 = 0;
    std::uint64_t bandwidth_all = 0;
    std::uint64_t bandwidth_v6 = 0;

    int relay_share_pct() const {
        return relays_all == 0 ? 0 : static_cast<int>(std::llround(100.0 * relays_v6 / relays_all));
    }
    int bandwidth_share_pct() const {
        return bandwidth_all == 0
                   ? 0
                   : static_cast<int>(std::llround(100.0 * static_cast<double>(bandwidth_v6) /
                                                   static_cast<double>(bandwidth_all)));
    }
};

struct Ipv6SupportSummary {
    Ipv6SupportRow all;
    Ipv6SupportRow exit;
    Ipv6SupportRow guard;
};

inline Ipv6SupportSummary ipv6_support_summary(const ConsensusSnapshot& snapshot,
                                               const AsnDatabase& mapper) {
    Ipv6SupportSummary sum;
    auto classify = [&](auto pred, Ipv6SupportRow& row) {
        std::set<std::uint32_t> as_all, as_v6;
        for (const auto& r : snapshot.relays) {
            if (!pred(r)) continue;
            ++row.relays_all;
            row.bandwidth_all += r.advertised_bandwidth;
            if (r.addr_v4)
                if (auto asn = mapper.lookup(*r.addr_v4)) as_all.insert(*asn);
            if (r.addr_v6) {
                ++row.relays_v6;
                row.bandwidth_v6 += r.advertised_bandwidth;
                if (auto asn = mapper.lookup(*r.addr_v6)) as_v6.insert(*asn);
            }
        }
        row.ases_all = static_cast<int>(as_all.size());
        row.ases_v6 = static_cast<int>(as_v6.size());
    };
    classify([](const RelayDescriptor&) { return true; }, sum.all);
    classify([](const RelayDescriptor& r) { return r.is_exit(); }, sum.exit);
    classify([](const RelayDescriptor& r) { return r.is_guard(); }, sum.guard);
    return sum;
}

}  // namespace asrisk
