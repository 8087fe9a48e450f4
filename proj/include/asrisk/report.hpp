// asrisk -- figure row selection, table/plot-data emission, and
// longitudinal run comparison.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrisk/analysis.hpp"
#include "asrisk/consensus.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

using AsNamer = std::function<std::string(std::uint32_t)>;

inline std::string truncate_name(const std::string& name, std::size_t width = 12) {
    return name.size() <= width ? name : name.substr(0, width);
}

enum class FigureKind { entry_paths, exit_paths, combined, diversity };

inline const char* figure_kind_name(FigureKind k) {
    switch (k) {
        case FigureKind::entry_paths: return "entry_paths";
        case FigureKind::exit_paths: return "exit_paths";
        case FigureKind::combined: return "combined";
        case FigureKind::diversity: return "diversity";
    }
    return "?";
}

// Defaults mirror the published selection rules.
struct FigureSpec {
    FigureKind kind = FigureKind::entry_paths;
    std::size_t entry_top_n = 15;        // most likely ASes per country
    std::size_t entry_min_clients = 5;   // keep ASes occurring for more than this many clients
    enum class RankStat { max, median };
    RankStat rank_stat = RankStat::max;  // statistic behind "most likely"
    double exit_candidate_threshold = 0.20;
    double exit_median_min = 0.01;
    std::size_t exit_min_points = 5;
    std::vector<std::uint32_t> carry_forward;  // ASes selected in a previous period
};

struct FigurePoint {
    std::string group;          // country (entry) or empty
    std::uint32_t endpoint_asn = 0;
    double value = 0.0;
    AsRole role = AsRole::transit;
};

struct FigureRow {
    std::uint32_t asn = 0;
    bool hosts_relays = false;  // asterisk in the published figures
    bool carried = false;       // present only via carry_forward
    std::vector<FigurePoint> points;

    double min_value() const {
        double m = points.empty() ? 0.0 : points.front().value;
        for (const auto& p : points) m = std::min(m, p.value);
        return m;
    }
    double max_value() const {
        double m = 0.0;
        for (const auto& p : points) m = std::max(m, p.value);
        return m;
    }
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t mid = v.size() / 2;
    if (v.size() % 2 == 1) return v[mid];
    return (v[mid - 1] + v[mid]) / 2.0;
}

inline double rank_value(const std::vector<double>& values, FigureSpec::RankStat stat) {
    if (values.empty()) return 0.0;
    if (stat == FigureSpec::RankStat::median) return median_of(values);
    return *std::max_element(values.begin(), values.end());
}

}  // namespace detail

// Entry-side row selection over per-client tables grouped by country:
// per country take the top-N ASes by the rank statistic of p_total, keep
// those occurring for more than entry_min_clients clients in every
// country, then union the carry-forward list.
inline std::vector<FigureRow> select_entry_rows(
    const std::map<std::string, std::vector<SideTable>>& tables_by_country,
    const FigureSpec& spec) {
    // collect p_total per (country, asn) across clients; skip each table's
    // own endpoint row, the selection is about intermediary ASes
    std::map<std::string, std::map<std::uint32_t, std::vector<double>>> values;
    std::map<std::uint32_t, bool> hosts_relays;
    for (const auto& [country, tables] : tables_by_country) {
        for (const auto& table : tables) {
            for (const auto& row : table.rows) {
                if (row.role == AsRole::endpoint) continue;
                if (row.p_total <= 0.0) continue;
                values[country][row.asn].push_back(row.p_total);
                if (row.role == AsRole::relay) hosts_relays[row.asn] = true;
            }
        }
    }

    std::set<std::uint32_t> candidates;
    for (const auto& [country, per_as] : values) {
        std::vector<std::pair<double, std::uint32_t>> ranked;
        for (const auto& [asn, vals] : per_as)
            ranked.emplace_back(detail::rank_value(vals, spec.rank_stat), asn);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < ranked.size() && i < spec.entry_top_n; ++i)
            candidates.insert(ranked[i].second);
    }

    std::set<std::uint32_t> selected;
    for (std::uint32_t asn : candidates) {
        bool everywhere = true;
        for (const auto& [country, per_as] : values) {
            auto it = per_as.find(asn);
            if (it == per_as.end() || it->second.size() <= spec.entry_min_clients) {
                everywhere = false;
                break;
            }
        }
        if (everywhere && !values.empty()) selected.insert(asn);
    }

    std::set<std::uint32_t> carried;
    for (std::uint32_t asn : spec.carry_forward)
        if (!selected.count(asn)) carried.insert(asn);

    std::vector<FigureRow> rows;
    for (std::uint32_t asn : selected) {
        FigureRow row;
        row.asn = asn;
        row.hosts_relays = hosts_relays.count(asn) > 0;
        rows.push_back(row);
    }
    for (std::uint32_t asn : carried) {
        FigureRow row;
        row.asn = asn;
        row.hosts_relays = hosts_relays.count(asn) > 0;
        row.carried = true;
        rows.push_back(row);
    }

    for (auto& row : rows) {
        for (const auto& [country, tables] : tables_by_country) {
            for (const auto& table : tables) {
                const SideTableRow* r = table.find(row.asn);
                if (!r || r->p_total <= 0.0 || r->role == AsRole::endpoint) continue;
                row.points.push_back({country, table.endpoint_asn, r->p_total, r->role});
            }
        }
    }
    std::sort(rows.begin(), rows.end(), [](const FigureRow& a, const FigureRow& b) {
        double ma = a.max_value(), mb = b.max_value();
        if (ma != mb) return ma > mb;
        return a.asn < b.asn;
    });
    return rows;
}

// Exit-side row selection over per-destination tables: candidates are
// ASes exceeding the candidate threshold for some destination; rows with
// a median below exit_median_min or fewer than exit_min_points data
// points are dropped; carry-forward rows are appended.
inline std::vector<FigureRow> select_exit_rows(const std::vector<SideTable>& tables_by_destination,
                                               const FigureSpec& spec) {
    std::map<std::uint32_t, std::vector<double>> values;
    std::map<std::uint32_t, bool> hosts_relays;
    for (const auto& table : tables_by_destination) {
        for (const auto& row : table.rows) {
            if (row.role == AsRole::endpoint) continue;
            if (row.p_total <= 0.0) continue;
            values[row.asn].push_back(row.p_total);
            if (row.role == AsRole::relay) hosts_relays[row.asn] = true;
        }
    }

    std::set<std::uint32_t> selected;
    for (const auto& [asn, vals] : values) {
        double max_v = *std::max_element(vals.begin(), vals.end());
        if (max_v <= spec.exit_candidate_threshold) continue;
        if (vals.size() < spec.exit_min_points) continue;
        if (detail::median_of(vals) < spec.exit_median_min) continue;
        selected.insert(asn);
    }
    std::set<std::uint32_t> carried;
    for (std::uint32_t asn : spec.carry_forward)
        if (!selected.count(asn)) carried.insert(asn);

    std::vector<FigureRow> rows;
    auto emit_row = [&](std::uint32_t asn, bool carry) {
        FigureRow row;
        row.asn = asn;
        row.hosts_relays = hosts_relays.count(asn) > 0;
        row.carried = carry;
        for (const auto& table : tables_by_destination) {
            const SideTableRow* r = table.find(asn);
            if (!r || r->p_total <= 0.0 || r->role == AsRole::endpoint) continue;
            row.points.push_back({{}, table.endpoint_asn, r->p_total, r->role});
        }
        rows.push_back(std::move(row));
    };
    for (std::uint32_t asn : selected) emit_row(asn, false);
    for (std::uint32_t asn : carried) emit_row(asn, true);
    std::sort(rows.begin(), rows.end(), [](const FigureRow& a, const FigureRow& b) {
        double ma = a.max_value(), mb = b.max_value();
        if (ma != mb) return ma > mb;
        return a.asn < b.asn;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Emission

// Plot data: JSON lines, one object per data point.
inline std::string emit_plot_data(FigureKind kind, const std::vector<FigureRow>& rows,
                                  const AsNamer& namer) {
    std::string out;
    for (const auto& row : rows) {
        for (const auto& p : row.points) {
            nlohmann::ordered_json j;
            j["figure"] = figure_kind_name(kind);
            if (!p.group.empty()) j["country"] = p.group;
            j["endpoint_asn"] = p.endpoint_asn;
            j["asn"] = row.asn;
            j["name"] = namer ? namer(row.asn) : std::string();
            j["value"] = round3(p.value);
            j["role"] = role_name(p.role);
            out += j.dump();
            out += '\n';
        }
    }
    return out;
}

// Summary table: one row per AS with point count and min/max.
inline std::string emit_figure_table(const std::vector<FigureRow>& rows, const AsNamer& namer) {
    std::string out = "asn,name,relay_host,carried,points,min,max\n";
    for (const auto& row : rows) {
        out += std::to_string(row.asn) + "," +
               truncate_name(namer ? namer(row.asn) : std::string()) + "," +
               (row.hosts_relays ? "1" : "0") + "," + (row.carried ? "1" : "0") + "," +
               std::to_string(row.points.size()) + "," + format_prob3(row.min_value()) + "," +
               format_prob3(row.max_value()) + "\n";
    }
    return out;
}

inline std::string emit_diversity_csv(const DiversityCurve& curve) {
    std::string out = "rank,cumulative\n";
    for (const auto& [rank, cum] : curve.points)
        out += std::to_string(rank) + "," + format_prob3(cum) + "\n";
    return out;
}

// Side table and correlation exports, the stable interchange formats.
inline std::string side_table_to_csv(const SideTable& table, const AsNamer& namer) {
    std::string out = "asn,name,role,p_total,p_relays,p_routes,route_count\n";
    for (const auto& row : table.rows) {
        out += std::to_string(row.asn) + "," + truncate_name(namer ? namer(row.asn) : std::string()) +
               "," + role_name(row.role) + "," + format_prob3(row.p_total) + "," +
               format_prob3(row.p_relays) + "," + format_prob3(row.p_routes) + "," +
               std::to_string(row.route_count) + "\n";
    }
    return out;
}

inline std::string side_table_to_json(const SideTable& table, const AsNamer& namer) {
    nlohmann::ordered_json j;
    j["side"] = side_name(table.side);
    j["endpoint_asn"] = table.endpoint_asn;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        nlohmann::ordered_json r;
        r["asn"] = row.asn;
        r["name"] = namer ? namer(row.asn) : std::string();
        r["role"] = role_name(row.role);
        r["p_total"] = row.p_total;
        r["p_relays"] = row.p_relays;
        r["p_routes"] = row.p_routes;
        r["route_count"] = row.route_count;
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

inline std::optional<AsRole> role_from_string(std::string_view s) {
    if (s == "endpoint") return AsRole::endpoint;
    if (s == "relay") return AsRole::relay;
    if (s == "transit") return AsRole::transit;
    return std::nullopt;
}

inline SideTable side_table_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("side table: ") + e.what(), e.byte);
    }
    SideTable table;
    table.side = j.at("side").get<std::string>() == "entry" ? Side::entry : Side::exit;
    table.endpoint_asn = j.at("endpoint_asn").get<std::uint32_t>();
    for (const auto& rj : j.at("rows")) {
        SideTableRow row;
        row.asn = rj.at("asn").get<std::uint32_t>();
        auto role = role_from_string(rj.at("role").get<std::string>());
        if (!role) throw ParseError("side table: bad role");
        row.role = *role;
        row.p_total = rj.at("p_total").get<double>();
        row.p_relays = rj.at("p_relays").get<double>();
        row.p_routes = rj.at("p_routes").get<double>();
        row.route_count = rj.at("route_count").get<int>();
        table.rows.push_back(row);
    }
    return table;
}

inline std::vector<CorrelationRow> correlation_from_json(std::string_view text) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("correlation rows: ") + e.what(), e.byte);
    }
    std::vector<CorrelationRow> out;
    for (const auto& rj : arr) {
        CorrelationRow row;
        row.asn = rj.at("asn").get<std::uint32_t>();
        auto role = role_from_string(rj.at("role").get<std::string>());
        if (!role) throw ParseError("correlation rows: bad role");
        row.role = *role;
        row.p_guard = rj.at("p_guard").get<double>();
        row.p_exit = rj.at("p_exit").get<double>();
        row.p_and = rj.at("p_and").get<double>();
        out.push_back(row);
    }
    return out;
}

inline std::string correlation_to_csv(const std::vector<CorrelationRow>& rows, const AsNamer& namer) {
    std::string out = "asn,name,role,p_guard,p_exit,p_and\n";
    for (const auto& row : rows) {
        out += std::to_string(row.asn) + "," + truncate_name(namer ? namer(row.asn) : std::string()) +
               "," + role_name(row.role) + "," + format_prob3(row.p_guard) + "," +
               format_prob3(row.p_exit) + "," + format_prob3(row.p_and) + "\n";
    }
    return out;
}

inline std::string correlation_to_json(const std::vector<CorrelationRow>& rows, const AsNamer& namer) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        nlohmann::ordered_json r;
        r["asn"] = row.asn;
        r["name"] = namer ? namer(row.asn) : std::string();
        r["role"] = role_name(row.role);
        r["p_guard"] = row.p_guard;
        r["p_exit"] = row.p_exit;
        r["p_and"] = row.p_and;
        arr.push_back(std::move(r));
    }
    return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Longitudinal comparison

struct DeltaRow {
    std::uint32_t asn = 0;
    double delta_p_guard = 0.0;
    double delta_p_exit = 0.0;
    double delta_p_and = 0.0;
};

struct DeltaReport {
    std::vector<DeltaRow> changed;        // present in both runs
    std::vector<CorrelationRow> appeared;     // only in run B
    std::vector<CorrelationRow> disappeared;  // only in run A
};

inline DeltaReport compare_runs(const std::vector<CorrelationRow>& run_a,
                                const std::vector<CorrelationRow>& run_b) {
    std::map<std::uint32_t, const CorrelationRow*> a_by_asn, b_by_asn;
    for (const auto& r : run_a) a_by_asn[r.asn] = &r;
    for (const auto& r : run_b) b_by_asn[r.asn] = &r;
    DeltaReport out;
    for (const auto& [asn, ra] : a_by_asn) {
        auto it = b_by_asn.find(asn);
        if (it == b_by_asn.end()) {
            out.disappeared.push_back(*ra);
            continue;
        }
        DeltaRow d;
        d.asn = asn;
        d.delta_p_guard = it->second->p_guard - ra->p_guard;
        d.delta_p_exit = it->second->p_exit - ra->p_exit;
        d.delta_p_and = it->second->p_and - ra->p_and;
        out.changed.push_back(d);
    }
    for (const auto& [asn, rb] : b_by_asn)
        if (!a_by_asn.count(asn)) out.appeared.push_back(*rb);
    return out;
}

inline std::string delta_report_to_csv(const DeltaReport& report, const AsNamer& namer) {
    std::string out = "section,asn,name,delta_p_guard,delta_p_exit,delta_p_and\n";
    for (const auto& d : report.changed)
        out += "changed," + std::to_string(d.asn) + "," +
               truncate_name(namer ? namer(d.asn) : std::string()) + "," +
               format_prob3(d.delta_p_guard) + "," + format_prob3(d.delta_p_exit) + "," +
               format_prob3(d.delta_p_and) + "\n";
    for (const auto& r : report.appeared)
        out += "appeared," + std::to_string(r.asn) + "," +
               truncate_name(namer ? namer(r.asn) : std::string()) + "," + format_prob3(r.p_guard) +
               "," + format_prob3(r.p_exit) + "," + format_prob3(r.p_and) + "\n";
    for (const auto& r : report.disappeared)
        out += "disappeared," + std::to_string(r.asn) + "," +
               truncate_name(namer ? namer(r.asn) : std::string()) + "," + format_prob3(r.p_guard) +
               "," + format_prob3(r.p_exit) + "," + format_prob3(r.p_and) + "\n";
    return out;
}

}  // namespace asrisk
