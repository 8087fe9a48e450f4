// asrisk -- ip2asn interval database: load the published TSV files and map
// addresses to AS numbers with a binary search over sorted ranges.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "asrisk/ip_addr.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

struct AsnRange {
    IpAddr range_start;
    IpAddr range_end;  // inclusive
    std::uint32_t asn = 0;
    std::string country;
    std::string description;
};

// Ranges per family, sorted by start and non-overlapping after load.
// AS0 means "not routed" and is reported as unmapped, so path analysis
// skips it the same way it skips gaps.
class AsnDatabase {
public:
    // ip2asn TSV: range_start<TAB>range_end<TAB>AS_number<TAB>country<TAB>description.
    // Unsorted input is sorted; overlaps are rejected naming both lines.
    void load_ip2asn(std::string_view text, Family family) {
        std::vector<AsnRange>& ranges = family == Family::v4 ? ranges_v4_ : ranges_v6_;
        std::vector<std::size_t> lines;  // 1-based source line per range
        std::vector<AsnRange> fresh;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
            pos = eol == std::string_view::npos ? text.size() : eol + 1;
            ++line_no;
            if (line.empty()) continue;
            AsnRange r = parse_line(line, line_no, family);
            fresh.push_back(std::move(r));
            lines.push_back(line_no);
        }

        // sort ranges (keeping source lines attached) and check overlaps
        std::vector<std::size_t> order(fresh.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return fresh[a].range_start < fresh[b].range_start;
        });
        for (std::size_t i = 1; i < order.size(); ++i) {
            const AsnRange& prev = fresh[order[i - 1]];
            const AsnRange& cur = fresh[order[i]];
            if (!(prev.range_end < cur.range_start))
                throw ValidationError("overlapping ip2asn ranges at line " +
                                      std::to_string(lines[order[i - 1]]) + " and line " +
                                      std::to_string(lines[order[i]]));
        }
        std::vector<AsnRange> merged;
        merged.reserve(ranges.size() + fresh.size());
        for (std::size_t idx : order) merged.push_back(std::move(fresh[idx]));
        if (!ranges.empty()) {
            // merging into an already-loaded family: re-sort and re-check
            merged.insert(merged.end(), ranges.begin(), ranges.end());
            std::sort(merged.begin(), merged.end(), [](const AsnRange& a, const AsnRange& b) {
                return a.range_start < b.range_start;
            });
            for (std::size_t i = 1; i < merged.size(); ++i)
                if (!(merged[i - 1].range_end < merged[i].range_start))
                    throw ValidationError("overlapping ip2asn ranges after merge");
        }
        ranges = std::move(merged);
        for (const AsnRange& r : ranges)
            if (r.asn != 0 && !names_.count(r.asn)) names_.emplace(r.asn, r.description);
    }

    bool loaded(Family family) const {
        return !(family == Family::v4 ? ranges_v4_ : ranges_v6_).empty();
    }

    // nullopt for gaps and for AS0.
    std::optional<std::uint32_t> lookup(const IpAddr& ip) const {
        const std::vector<AsnRange>& ranges = ip.family() == Family::v4 ? ranges_v4_ : ranges_v6_;
        auto it = std::upper_bound(ranges.begin(), ranges.end(), ip,
                                   [](const IpAddr& v, const AsnRange& r) { return v < r.range_start; });
        if (it == ranges.begin()) return std::nullopt;
        --it;
        if (ip < it->range_start || it->range_end < ip) return std::nullopt;
        if (it->asn == 0) return std::nullopt;
        return it->asn;
    }

    // Registered country of the range containing ip, if any.
    std::optional<std::string> lookup_country(const IpAddr& ip) const {
        const std::vector<AsnRange>& ranges = ip.family() == Family::v4 ? ranges_v4_ : ranges_v6_;
        auto it = std::upper_bound(ranges.begin(), ranges.end(), ip,
                                   [](const IpAddr& v, const AsnRange& r) { return v < r.range_start; });
        if (it == ranges.begin()) return std::nullopt;
        --it;
        if (ip < it->range_start || it->range_end < ip) return std::nullopt;
        return it->country;
    }

    // AS description as published; empty string when unknown.
    std::string name(std::uint32_t asn) const {
        auto it = names_.find(asn);
        return it == names_.end() ? std::string() : it->second;
    }

    const std::vector<AsnRange>& ranges(Family family) const {
        return family == Family::v4 ? ranges_v4_ : ranges_v6_;
    }

private:
    static AsnRange parse_line(std::string_view line, std::size_t line_no, Family family) {
        std::array<std::string_view, 5> field{};
        std::size_t start = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i <= line.size() && n < 5; ++i) {
            if (i == line.size() || line[i] == '\t') {
                field[n++] = line.substr(start, i - start);
                start = i + 1;
            }
        }
        if (n < 3)
            throw ParseError("ip2asn line " + std::to_string(line_no) + ": expected at least 3 tab-separated fields");
        AsnRange r;
        auto lo = IpAddr::parse(field[0]);
        auto hi = IpAddr::parse(field[1]);
        if (!lo || !hi)
            throw ParseError("ip2asn line " + std::to_string(line_no) + ": unparseable address");
        if (lo->family() != family || hi->family() != family)
            throw ParseError("ip2asn line " + std::to_string(line_no) + ": address family mismatch");
        if (*hi < *lo)
            throw ParseError("ip2asn line " + std::to_string(line_no) + ": range end before start");
        r.range_start = *lo;
        r.range_end = *hi;
        errno = 0;
        char* endp = nullptr;
        std::string asn_text(field[2]);
        unsigned long long v = std::strtoull(asn_text.c_str(), &endp, 10);
        if (endp == asn_text.c_str() || *endp != '\0' || v > 0xffffffffull)
            throw ParseError("ip2asn line " + std::to_string(line_no) + ": bad AS number '" + asn_text + "'");
        r.asn = static_cast<std::uint32_t>(v);
        if (n > 3) r.country = std::string(field[3]);
        if (n > 4) r.description = std::string(field[4]);
        return r;
    }

    std::vector<AsnRange> ranges_v4_;
    std::vector<AsnRange> ranges_v6_;
    std::unordered_map<std::uint32_t, std::string> names_;
};

inline AsnDatabase load_ip2asn(std::string_view text, Family family) {
    AsnDatabase db;
    db.load_ip2asn(text, family);
    return db;
}

}  // namespace asrisk
