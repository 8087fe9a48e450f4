// asrisk -- scenario target sets: country toplists of client ASes,
// domain-toplist and blocked-list destination ASes, and the resolver
// plumbing behind them.

#pragma once

#include <netdb.h>
#include <sys/socket.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asrisk/asn_map.hpp"
#include "asrisk/ip_addr.hpp"
#include "asrisk/probes.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

struct ResolveResult {
    std::vector<IpAddr> addresses;
    std::string note;  // reason when empty ("no records", "timeout", ...)
};

class Resolver {
public:
    virtual ~Resolver() = default;
    virtual ResolveResult resolve(const std::string& domain, Family family) = 0;
};

// Offline resolver reading `domain<TAB>family<TAB>ip[,ip...]` lines.
// Behaves like the live backend would given the same answers.
class FixtureResolver : public Resolver {
public:
    explicit FixtureResolver(std::string_view text) {
        std::size_t pos = 0, line_no = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            std::string_view line =
                text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() : eol + 1;
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            std::size_t t1 = line.find('\t');
            std::size_t t2 = t1 == std::string_view::npos ? std::string_view::npos : line.find('\t', t1 + 1);
            if (t1 == std::string_view::npos || t2 == std::string_view::npos)
                throw ParseError("resolver fixture line " + std::to_string(line_no) +
                                 ": expected domain<TAB>family<TAB>ips");
            std::string domain(line.substr(0, t1));
            auto fam = family_from_string(line.substr(t1 + 1, t2 - t1 - 1));
            if (!fam)
                throw ParseError("resolver fixture line " + std::to_string(line_no) + ": bad family");
            std::vector<IpAddr> addrs;
            std::string_view rest = line.substr(t2 + 1);
            std::size_t p = 0;
            while (p <= rest.size()) {
                std::size_t comma = rest.find(',', p);
                std::string_view tok = rest.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p);
                if (!tok.empty()) {
                    auto a = IpAddr::parse(tok);
                    if (!a || a->family() != *fam)
                        throw ParseError("resolver fixture line " + std::to_string(line_no) +
                                         ": bad address '" + std::string(tok) + "'");
                    addrs.push_back(*a);
                }
                if (comma == std::string_view::npos) break;
                p = comma + 1;
            }
            table_[{domain, *fam}] = std::move(addrs);
        }
    }

    ResolveResult resolve(const std::string& domain, Family family) override {
        auto it = table_.find({domain, family});
        if (it == table_.end()) return {{}, "no records"};
        return {it->second, {}};
    }

private:
    std::map<std::pair<std::string, Family>, std::vector<IpAddr>> table_;
};

// Live resolver on getaddrinfo. Only used when a run explicitly opts out
// of offline mode.
class SystemResolver : public Resolver {
public:
    ResolveResult resolve(const std::string& domain, Family family) override {
        addrinfo hints{};
        hints.ai_family = family == Family::v4 ? AF_INET : AF_INET6;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        int rc = getaddrinfo(domain.c_str(), nullptr, &hints, &res);
        if (rc != 0) return {{}, gai_strerror(rc)};
        ResolveResult out;
        for (addrinfo* it = res; it; it = it->ai_next) {
            char buf[INET6_ADDRSTRLEN] = {};
            if (it->ai_family == AF_INET) {
                auto* sa = reinterpret_cast<sockaddr_in*>(it->ai_addr);
                inet_ntop(AF_INET, &sa->sin_addr, buf, sizeof(buf));
            } else if (it->ai_family == AF_INET6) {
                auto* sa = reinterpret_cast<sockaddr_in6*>(it->ai_addr);
                inet_ntop(AF_INET6, &sa->sin6_addr, buf, sizeof(buf));
            } else {
                continue;
            }
            if (auto a = IpAddr::parse(buf)) out.addresses.push_back(*a);
        }
        freeaddrinfo(res);
        if (out.addresses.empty()) out.note = "no records";
        return out;
    }
};

// Domain list file: either bare `domain` lines or Tranco-style `rank,domain`.
// Returned in rank order.
inline std::vector<std::string> load_domain_list(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        auto comma = line.find(',');
        if (comma != std::string_view::npos) {
            std::string_view head = line.substr(0, comma);
            bool numeric = !head.empty() &&
                           std::all_of(head.begin(), head.end(), [](unsigned char c) { return std::isdigit(c); });
            if (numeric) line = line.substr(comma + 1);
        }
        out.emplace_back(line);
    }
    return out;
}

struct ClientDerivation {
    std::vector<std::uint32_t> asns;
    std::vector<std::string> warnings;
};

// The n ASes of a country with the most eligible probes; ties go to the
// lower ASN. Probes without a country code never enter country toplists.
inline ClientDerivation derive_clients(const std::vector<ProbeRecord>& inventory,
                                       const std::string& country, std::size_t n, Family family) {
    std::map<std::uint32_t, int> counts;
    for (const auto& p : inventory) {
        if (!p.eligible(family)) continue;
        if (p.country_code.empty() || p.country_code != country) continue;
        ++counts[*p.asn(family)];
    }
    std::vector<std::pair<std::uint32_t, int>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    ClientDerivation out;
    for (std::size_t i = 0; i < ranked.size() && i < n; ++i) out.asns.push_back(ranked[i].first);
    if (out.asns.size() < n)
        out.warnings.push_back("country " + country + ": only " + std::to_string(out.asns.size()) +
                               " of " + std::to_string(n) + " requested client ASes available");
    return out;
}

struct DestinationAs {
    std::uint32_t asn = 0;
    std::vector<std::string> source_domains;  // first-seen rank order
    std::optional<IpAddr> lowest_address;     // lowest resolved address in this AS
};

struct DestinationDerivation {
    std::vector<DestinationAs> destinations;  // first-seen rank order, deduplicated
    std::vector<std::string> skipped_domains;  // resolver failures, logged not fatal
    std::vector<std::uint32_t> dropped_no_probe;
    std::vector<std::uint32_t> dropped_country_filter;
};

// Resolve the first top_k domains, map each address to an AS, keep ASes
// that host an eligible probe; optional country filter on the registered
// country of the resolved address's range.
inline DestinationDerivation derive_destinations(const std::vector<std::string>& domains,
                                                 Resolver& resolver, const AsnDatabase& mapper,
                                                 const std::vector<ProbeRecord>& inventory,
                                                 std::size_t top_k, Family family,
                                                 const std::set<std::string>& country_filter = {}) {
    DestinationDerivation out;
    std::map<std::uint32_t, std::size_t> index;
    std::set<std::uint32_t> dropped_probe_seen, dropped_country_seen;
    auto probed = covered_ases(inventory, family);
    std::size_t taken = 0;
    for (const auto& domain : domains) {
        if (taken >= top_k) break;
        ++taken;
        ResolveResult rr = resolver.resolve(domain, family);
        if (rr.addresses.empty()) {
            out.skipped_domains.push_back(domain + (rr.note.empty() ? "" : " (" + rr.note + ")"));
            continue;
        }
        for (const auto& addr : rr.addresses) {
            auto asn = mapper.lookup(addr);
            if (!asn) continue;
            if (!country_filter.empty()) {
                auto cc = mapper.lookup_country(addr);
                if (!cc || !country_filter.count(*cc)) {
                    if (dropped_country_seen.insert(*asn).second)
                        out.dropped_country_filter.push_back(*asn);
                    continue;
                }
            }
            if (!probed.count(*asn)) {
                if (dropped_probe_seen.insert(*asn).second) out.dropped_no_probe.push_back(*asn);
                continue;
            }
            auto it = index.find(*asn);
            if (it == index.end()) {
                index.emplace(*asn, out.destinations.size());
                DestinationAs d;
                d.asn = *asn;
                d.source_domains.push_back(domain);
                d.lowest_address = addr;
                out.destinations.push_back(std::move(d));
            } else {
                DestinationAs& d = out.destinations[it->second];
                if (std::find(d.source_domains.begin(), d.source_domains.end(), domain) ==
                    d.source_domains.end())
                    d.source_domains.push_back(domain);
                if (!d.lowest_address || addr < *d.lowest_address) d.lowest_address = addr;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scenario files

struct ScenarioSpec {
    std::string label;
    Family family = Family::v4;

    enum class ClientRule { top_probes, explicit_list };
    ClientRule client_rule = ClientRule::explicit_list;
    std::string client_country;
    std::size_t client_top_n = 10;
    std::vector<std::uint32_t> client_asns;
    std::vector<std::uint32_t> client_union_with;

    enum class DestinationRule { toplist, blocked_list, explicit_list };
    DestinationRule destination_rule = DestinationRule::explicit_list;
    std::string domains_file;
    std::string rank_file;  // blocked_list only: popularity ranking source
    std::size_t destination_top_k = 0;  // 0 = family default (100 v4 / 250 v6)
    std::set<std::string> destination_country_filter;
    std::vector<std::uint32_t> destination_asns;
    std::vector<std::uint32_t> destination_union_with;

    std::string resolver_fixture;  // offline resolution source
    int fallback_count = 0;        // extra probes per relay AS in D2/D4

    std::size_t effective_top_k() const {
        if (destination_top_k > 0) return destination_top_k;
        return family == Family::v6 ? 250 : 100;
    }
};

namespace detail {
inline std::vector<std::uint32_t> parse_asn_list(const std::string& value, const std::string& key) {
    std::vector<std::uint32_t> out;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        std::size_t comma = value.find(',', pos);
        std::string tok = value.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        // tolerate surrounding spaces and an optional AS prefix
        while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
        while (!tok.empty() && tok.back() == ' ') tok.pop_back();
        if (!tok.empty()) {
            if (tok.rfind("AS", 0) == 0 || tok.rfind("as", 0) == 0) tok = tok.substr(2);
            char* endp = nullptr;
            unsigned long long v = std::strtoull(tok.c_str(), &endp, 10);
            if (endp == tok.c_str() || *endp != '\0' || v > 0xffffffffull)
                throw ParseError("scenario: bad AS number '" + tok + "' in " + key);
            out.push_back(static_cast<std::uint32_t>(v));
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}
}  // namespace detail

// Scenario file grammar: `key = value` lines, `#` comments. Unknown keys
// are errors so typos do not silently change a measurement.
inline ScenarioSpec parse_scenario(std::string_view text) {
    ScenarioSpec spec;
    bool saw_label = false, saw_family = false;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string line(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto trim = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t");
            std::size_t e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("scenario line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        if (key == "label") {
            spec.label = value;
            saw_label = true;
        } else if (key == "family") {
            auto f = family_from_string(value);
            if (!f) throw ParseError("scenario line " + std::to_string(line_no) + ": bad family '" + value + "'");
            spec.family = *f;
            saw_family = true;
        } else if (key == "client_rule") {
            if (value == "top_probes") spec.client_rule = ScenarioSpec::ClientRule::top_probes;
            else if (value == "explicit") spec.client_rule = ScenarioSpec::ClientRule::explicit_list;
            else throw ParseError("scenario: unknown client_rule '" + value + "'");
        } else if (key == "client_country") {
            spec.client_country = value;
        } else if (key == "client_top_n") {
            spec.client_top_n = std::stoul(value);
            if (spec.client_top_n < 1) throw ValidationError("scenario: client_top_n must be >= 1");
        } else if (key == "client_asns") {
            spec.client_asns = detail::parse_asn_list(value, key);
        } else if (key == "client_union_with") {
            spec.client_union_with = detail::parse_asn_list(value, key);
        } else if (key == "destination_rule") {
            if (value == "toplist") spec.destination_rule = ScenarioSpec::DestinationRule::toplist;
            else if (value == "blocked_list") spec.destination_rule = ScenarioSpec::DestinationRule::blocked_list;
            else if (value == "explicit") spec.destination_rule = ScenarioSpec::DestinationRule::explicit_list;
            else throw ParseError("scenario: unknown destination_rule '" + value + "'");
        } else if (key == "domains_file") {
            spec.domains_file = value;
        } else if (key == "rank_file") {
            spec.rank_file = value;
        } else if (key == "destination_top_k") {
            spec.destination_top_k = std::stoul(value);
            if (spec.destination_top_k < 1) throw ValidationError("scenario: destination_top_k must be >= 1");
        } else if (key == "destination_country_filter") {
            spec.destination_country_filter.clear();
            std::size_t p = 0;
            while (p <= value.size()) {
                std::size_t comma = value.find(',', p);
                std::string tok = value.substr(p, comma == std::string::npos ? std::string::npos : comma - p);
                while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
                while (!tok.empty() && tok.back() == ' ') tok.pop_back();
                if (!tok.empty()) spec.destination_country_filter.insert(tok);
                if (comma == std::string::npos) break;
                p = comma + 1;
            }
        } else if (key == "destination_asns") {
            spec.destination_asns = detail::parse_asn_list(value, key);
        } else if (key == "destination_union_with") {
            spec.destination_union_with = detail::parse_asn_list(value, key);
        } else if (key == "resolver_fixture") {
            spec.resolver_fixture = value;
        } else if (key == "fallback_count") {
            spec.fallback_count = std::stoi(value);
            if (spec.fallback_count < 0 || spec.fallback_count > 2)
                throw ValidationError("scenario: fallback_count must be in [0,2]");
        } else {
            throw ParseError("scenario line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    if (!saw_label) throw ValidationError("scenario: missing label");
    if (!saw_family) throw ValidationError("scenario: missing family");
    return spec;
}

// ---------------------------------------------------------------------------
// Target sets

struct ClientTarget {
    std::uint32_t asn = 0;
    std::int64_t probe_id = 0;
    IpAddr probe_address;
};

struct DestinationTarget {
    std::uint32_t asn = 0;
    std::int64_t probe_id = 0;
    IpAddr probe_address;
    std::vector<std::string> source_domains;
    std::optional<IpAddr> lowest_resolved;
};

struct TargetSets {
    Family family = Family::v4;
    std::vector<ClientTarget> clients;
    std::vector<DestinationTarget> destinations;
    std::vector<std::string> report;  // union-set drops, warnings
};

// Union-with entries that no longer have an eligible probe are dropped with
// a report line; the current inventory decides what can still be measured.
inline TargetSets build_target_sets(const ScenarioSpec& spec,
                                    const std::vector<ProbeRecord>& inventory,
                                    const AsnDatabase& mapper, Resolver* resolver,
                                    const std::vector<std::string>& domains) {
    TargetSets out;
    out.family = spec.family;

    std::vector<std::uint32_t> client_asns;
    if (spec.client_rule == ScenarioSpec::ClientRule::top_probes) {
        auto derived = derive_clients(inventory, spec.client_country, spec.client_top_n, spec.family);
        client_asns = derived.asns;
        for (auto& w : derived.warnings) out.report.push_back(w);
    } else {
        client_asns = spec.client_asns;
    }
    for (std::uint32_t asn : spec.client_union_with)
        if (std::find(client_asns.begin(), client_asns.end(), asn) == client_asns.end())
            client_asns.push_back(asn);

    std::set<std::uint32_t> seen_clients;
    for (std::uint32_t asn : client_asns) {
        if (!seen_clients.insert(asn).second) continue;
        auto probe = select_probe(inventory, asn, spec.family);
        if (!probe) {
            out.report.push_back("client AS" + std::to_string(asn) + " dropped: no eligible probe");
            continue;
        }
        out.clients.push_back({asn, probe->probe_id, *probe->address(spec.family)});
    }

    std::vector<DestinationAs> dests;
    if (spec.destination_rule == ScenarioSpec::DestinationRule::explicit_list) {
        for (std::uint32_t asn : spec.destination_asns) dests.push_back({asn, {}, std::nullopt});
    } else {
        if (!resolver) throw ContractError("destination rule requires a resolver");
        auto derived = derive_destinations(domains, *resolver, mapper, inventory,
                                           spec.destination_rule == ScenarioSpec::DestinationRule::blocked_list
                                               ? domains.size()
                                               : spec.effective_top_k(),
                                           spec.family, spec.destination_country_filter);
        dests = derived.destinations;
        for (auto& d : derived.skipped_domains) out.report.push_back("domain skipped: " + d);
        for (auto asn : derived.dropped_no_probe)
            out.report.push_back("destination AS" + std::to_string(asn) + " dropped: no eligible probe");
        for (auto asn : derived.dropped_country_filter)
            out.report.push_back("destination AS" + std::to_string(asn) + " dropped by country filter");
    }
    for (std::uint32_t asn : spec.destination_union_with) {
        bool present = std::any_of(dests.begin(), dests.end(),
                                   [asn](const DestinationAs& d) { return d.asn == asn; });
        if (!present) dests.push_back({asn, {}, std::nullopt});
    }

    std::set<std::uint32_t> seen_dests;
    for (const auto& d : dests) {
        if (!seen_dests.insert(d.asn).second) continue;
        auto probe = select_probe(inventory, d.asn, spec.family);
        if (!probe) {
            out.report.push_back("destination AS" + std::to_string(d.asn) + " dropped: no eligible probe");
            continue;
        }
        DestinationTarget t;
        t.asn = d.asn;
        t.probe_id = probe->probe_id;
        t.probe_address = *probe->address(spec.family);
        t.source_domains = d.source_domains;
        t.lowest_resolved = d.lowest_address;
        out.destinations.push_back(std::move(t));
    }
    return out;
}

// Blocked-list ordering: rank blocked domains by their position in a
// popularity list; unranked domains follow in file order.
inline std::vector<std::string> rank_domains_by(const std::vector<std::string>& blocked,
                                                const std::vector<std::string>& popularity) {
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < popularity.size(); ++i)
        if (!rank.count(popularity[i])) rank[popularity[i]] = i;
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (rank, original index)
    for (std::size_t i = 0; i < blocked.size(); ++i) {
        auto it = rank.find(blocked[i]);
        order.emplace_back(it == rank.end() ? popularity.size() + i : it->second, i);
    }
    std::sort(order.begin(), order.end());
    std::vector<std::string> out;
    out.reserve(blocked.size());
    for (auto& [r, i] : order) out.push_back(blocked[i]);
    return out;
}

}  // namespace asrisk
