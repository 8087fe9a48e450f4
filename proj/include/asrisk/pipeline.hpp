// asrisk -- workspace pipeline behind the CLI subcommands. A workspace
// directory holds snapshots, plans, runs, and reports; every stage records
// the hashes of its inputs so results stay traceable to exact files.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "asrisk/analysis.hpp"
#include "asrisk/asn_map.hpp"
#include "asrisk/consensus.hpp"
#include "asrisk/executor.hpp"
#include "asrisk/planner.hpp"
#include "asrisk/probes.hpp"
#include "asrisk/report.hpp"
#include "asrisk/targets.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

namespace fs = std::filesystem;

struct Workspace {
    fs::path root;

    fs::path snapshots() const { return root / "snapshots"; }
    fs::path plans() const { return root / "plans"; }
    fs::path runs() const { return root / "runs"; }
    fs::path reports() const { return root / "reports"; }

    fs::path snapshot_dir(const std::string& name) const { return snapshots() / name; }
    fs::path plan_file(const std::string& label) const { return plans() / (label + ".plan.json"); }
    fs::path plan_meta_file(const std::string& label) const { return plans() / (label + ".plan.meta.json"); }
    fs::path run_dir(const std::string& name) const { return runs() / name; }
};

// ---------------------------------------------------------------------------
// Snapshots

struct LoadedSnapshot {
    std::string name;
    ConsensusSnapshot consensus;
    std::vector<ProbeRecord> probes;
    AsnDatabase mapper;
    std::map<std::string, std::string> file_hashes;  // logical name -> fnv1a64 hex
};

inline void write_snapshot_summary(const Workspace& ws, const std::string& name,
                                   const LoadedSnapshot& snap) {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["fetched_at"] = snap.consensus.fetched_at;
    j["relays"] = snap.consensus.relays.size();
    j["dropped_without_address"] = snap.consensus.dropped_without_address;
    auto ipv6 = ipv6_support_summary(snap.consensus, snap.mapper);
    auto row = [](const Ipv6SupportRow& r) {
        nlohmann::ordered_json o;
        o["relays_all"] = r.relays_all;
        o["relays_v6"] = r.relays_v6;
        o["relay_share_pct"] = r.relay_share_pct();
        o["ases_all"] = r.ases_all;
        o["ases_v6"] = r.ases_v6;
        o["bandwidth_all_gbits"] = format_gbits(r.bandwidth_all);
        o["bandwidth_v6_gbits"] = format_gbits(r.bandwidth_v6);
        o["bandwidth_share_pct"] = r.bandwidth_share_pct();
        return o;
    };
    j["ipv6_support"]["all"] = row(ipv6.all);
    j["ipv6_support"]["exit"] = row(ipv6.exit);
    j["ipv6_support"]["guard"] = row(ipv6.guard);
    write_file_atomic(ws.snapshot_dir(name) / "summary.json", j.dump(2) + "\n");
}

// Import local files as a named snapshot. The v6 ip2asn file is optional;
// v4-only workspaces are common.
inline void snapshot_import(const Workspace& ws, const std::string& name,
                            const fs::path& consensus_path, const fs::path& probes_path,
                            const fs::path& ip2asn_v4_path, const fs::path& ip2asn_v6_path = {}) {
    std::string consensus_text = read_file(consensus_path);
    std::string probes_text = read_file(probes_path);
    std::string ip2asn_v4_text = read_file(ip2asn_v4_path);
    std::string ip2asn_v6_text = ip2asn_v6_path.empty() ? std::string() : read_file(ip2asn_v6_path);

    // validate before anything lands in the workspace
    LoadedSnapshot snap;
    snap.name = name;
    snap.consensus = load_snapshot(consensus_text);
    snap.probes = load_probes(probes_text);
    snap.mapper.load_ip2asn(ip2asn_v4_text, Family::v4);
    if (!ip2asn_v6_text.empty()) snap.mapper.load_ip2asn(ip2asn_v6_text, Family::v6);

    fs::path dir = ws.snapshot_dir(name);
    write_file_atomic(dir / "consensus.json", consensus_text);
    write_file_atomic(dir / "probes.json", probes_text);
    write_file_atomic(dir / "ip2asn-v4.tsv", ip2asn_v4_text);
    if (!ip2asn_v6_text.empty()) write_file_atomic(dir / "ip2asn-v6.tsv", ip2asn_v6_text);

    nlohmann::ordered_json manifest;
    manifest["name"] = name;
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    files["consensus.json"] = fnv1a64_hex(consensus_text);
    files["probes.json"] = fnv1a64_hex(probes_text);
    files["ip2asn-v4.tsv"] = fnv1a64_hex(ip2asn_v4_text);
    if (!ip2asn_v6_text.empty()) files["ip2asn-v6.tsv"] = fnv1a64_hex(ip2asn_v6_text);
    manifest["files"] = std::move(files);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    write_snapshot_summary(ws, name, snap);
}

inline LoadedSnapshot snapshot_load(const Workspace& ws, const std::string& name) {
    fs::path dir = ws.snapshot_dir(name);
    if (!fs::exists(dir / "manifest.json"))
        throw ValidationError("snapshot '" + name + "' not found in workspace");
    LoadedSnapshot snap;
    snap.name = name;
    std::string consensus_text = read_file(dir / "consensus.json");
    std::string probes_text = read_file(dir / "probes.json");
    std::string ip2asn_v4_text = read_file(dir / "ip2asn-v4.tsv");
    snap.consensus = load_snapshot(consensus_text);
    snap.probes = load_probes(probes_text);
    snap.mapper.load_ip2asn(ip2asn_v4_text, Family::v4);
    snap.file_hashes["consensus.json"] = fnv1a64_hex(consensus_text);
    snap.file_hashes["probes.json"] = fnv1a64_hex(probes_text);
    snap.file_hashes["ip2asn-v4.tsv"] = fnv1a64_hex(ip2asn_v4_text);
    if (fs::exists(dir / "ip2asn-v6.tsv")) {
        std::string ip2asn_v6_text = read_file(dir / "ip2asn-v6.tsv");
        snap.mapper.load_ip2asn(ip2asn_v6_text, Family::v6);
        snap.file_hashes["ip2asn-v6.tsv"] = fnv1a64_hex(ip2asn_v6_text);
    }
    return snap;
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageOutputs {
    CoverageReport guard;
    CoverageReport exit;
    std::vector<AsStats> top_uncovered_guard;
    std::vector<AsStats> top_uncovered_exit;
};

inline std::string uncovered_table_csv(const std::vector<AsStats>& rows, const AsnDatabase& mapper,
                                       DiversityCurve::Kind side) {
    std::string out = "asn,name,relays,gbits,p_exit,p_guard\n";
    (void)side;
    for (const auto& s : rows)
        out += std::to_string(s.asn) + "," + truncate_name(mapper.name(s.asn)) + "," +
               std::to_string(s.relay_count) + "," + format_gbits(s.bandwidth_bytes) + "," +
               format_prob3(s.p_exit) + "," + format_prob3(s.p_guard) + "\n";
    return out;
}

inline CoverageOutputs coverage_outputs(const LoadedSnapshot& snap, Family family, std::size_t top_n) {
    auto aggregate = aggregate_by_as(snap.consensus, snap.mapper, family);
    CoverageOutputs out;
    out.guard = coverage(aggregate.stats, snap.probes, DiversityCurve::Kind::guard, family);
    out.exit = coverage(aggregate.stats, snap.probes, DiversityCurve::Kind::exit, family);
    out.top_uncovered_guard = top_uncovered(aggregate.stats, snap.probes, DiversityCurve::Kind::guard, top_n);
    out.top_uncovered_exit = top_uncovered(aggregate.stats, snap.probes, DiversityCurve::Kind::exit, top_n);
    return out;
}

// ---------------------------------------------------------------------------
// Plan stage

struct PlanOutputs {
    Plan plan;
    TargetSets targets;
    std::string plan_hash;
};

// Build a plan from a scenario file against a named snapshot. Files the
// scenario references (domains, resolver fixture) resolve relative to the
// scenario file's directory. In offline mode a destination rule that needs
// resolution requires a resolver fixture.
inline PlanOutputs plan_build(const Workspace& ws, const fs::path& scenario_path,
                              const std::string& snapshot_name, bool offline = true) {
    ScenarioSpec spec = parse_scenario(read_file(scenario_path));
    LoadedSnapshot snap = snapshot_load(ws, snapshot_name);

    std::vector<std::string> domains;
    std::unique_ptr<Resolver> resolver;
    if (spec.destination_rule != ScenarioSpec::DestinationRule::explicit_list) {
        fs::path base = scenario_path.parent_path();
        domains = load_domain_list(read_file(base / spec.domains_file));
        if (spec.destination_rule == ScenarioSpec::DestinationRule::blocked_list &&
            !spec.rank_file.empty())
            domains = rank_domains_by(domains, load_domain_list(read_file(base / spec.rank_file)));
        if (!spec.resolver_fixture.empty())
            resolver = std::make_unique<FixtureResolver>(read_file(base / spec.resolver_fixture));
        else if (!offline)
            resolver = std::make_unique<SystemResolver>();
        else
            throw ValidationError("offline mode: scenario needs a resolver_fixture for domain resolution");
    }

    TargetSets targets = build_target_sets(spec, snap.probes, snap.mapper, resolver.get(), domains);
    auto aggregate = aggregate_by_as(snap.consensus, snap.mapper, spec.family);
    Plan plan = build_plan(spec, targets, snap.consensus, aggregate, snap.probes, snap.mapper);

    std::string plan_json = plan_to_json(plan);
    write_file_atomic(ws.plan_file(spec.label), plan_json);

    nlohmann::ordered_json meta;
    meta["label"] = spec.label;
    meta["family"] = family_name(spec.family);
    meta["snapshot"] = snapshot_name;
    nlohmann::ordered_json snap_hashes = nlohmann::ordered_json::object();
    for (const auto& [file, hash] : snap.file_hashes) snap_hashes[file] = hash;
    meta["snapshot_hashes"] = std::move(snap_hashes);
    meta["scenario_hash"] = fnv1a64_hex(read_file(scenario_path));
    meta["plan_hash"] = fnv1a64_hex(plan_json);
    meta["fallback_count"] = spec.fallback_count;
    nlohmann::ordered_json clients = nlohmann::ordered_json::array();
    for (const auto& c : targets.clients) {
        nlohmann::ordered_json cj;
        cj["asn"] = c.asn;
        cj["probe_id"] = c.probe_id;
        std::string country;
        for (const auto& p : snap.probes)
            if (p.probe_id == c.probe_id) country = p.country_code;
        cj["country"] = country;
        clients.push_back(std::move(cj));
    }
    meta["clients"] = std::move(clients);
    nlohmann::ordered_json dests = nlohmann::ordered_json::array();
    for (const auto& d : targets.destinations) {
        nlohmann::ordered_json dj;
        dj["asn"] = d.asn;
        dj["probe_id"] = d.probe_id;
        dj["source_domains"] = d.source_domains;
        dests.push_back(std::move(dj));
    }
    meta["destinations"] = std::move(dests);
    nlohmann::ordered_json cov = nlohmann::ordered_json::object();
    cov["D1"] = plan.coverage_estimate[0];
    cov["D2"] = plan.coverage_estimate[1];
    cov["D3"] = plan.coverage_estimate[2];
    cov["D4"] = plan.coverage_estimate[3];
    meta["coverage_estimate"] = std::move(cov);
    meta["warnings"] = plan.warnings;
    meta["target_reports"] = targets.report;
    write_file_atomic(ws.plan_meta_file(spec.label), meta.dump(2) + "\n");

    return {std::move(plan), std::move(targets), fnv1a64_hex(plan_json)};
}

// ---------------------------------------------------------------------------
// Run stage

struct RunSummary {
    RunState state;
    std::size_t planned = 0;
    std::size_t succeeded = 0;
    std::size_t failed = 0;
    std::size_t timeout = 0;
};

inline Plan load_plan_checked(const Workspace& ws, const std::string& label,
                              std::string* plan_hash_out = nullptr,
                              nlohmann::json* meta_out = nullptr) {
    fs::path plan_path = ws.plan_file(label);
    if (!fs::exists(plan_path)) throw ValidationError("plan '" + label + "' not found");
    std::string plan_text = read_file(plan_path);
    if (plan_hash_out) *plan_hash_out = fnv1a64_hex(plan_text);
    fs::path meta_path = ws.plan_meta_file(label);
    nlohmann::json meta;
    if (fs::exists(meta_path)) {
        meta = nlohmann::json::parse(read_file(meta_path));
        if (meta.contains("plan_hash") && meta["plan_hash"].get<std::string>() != fnv1a64_hex(plan_text))
            throw ValidationError("plan file for '" + label + "' does not match its recorded hash");
    }
    if (meta_out) *meta_out = meta;
    return plan_from_json(plan_text, label);
}

inline RunSummary run_replay(const Workspace& ws, const std::string& plan_label,
                             const fs::path& archive_dir, const ExecutionLimits& limits,
                             const std::string& run_name_in = {}) {
    std::string run_name = run_name_in.empty() ? plan_label : run_name_in;
    std::string plan_hash;
    nlohmann::json plan_meta;
    Plan plan = load_plan_checked(ws, plan_label, &plan_hash, &plan_meta);
    ReplayBackend backend(archive_dir);
    fs::path run_dir = ws.run_dir(run_name);
    RunState state = execute(plan, backend, limits, run_dir, plan_hash);

    nlohmann::ordered_json meta;
    meta["run"] = run_name;
    meta["plan_label"] = plan_label;
    meta["plan_hash"] = plan_hash;
    meta["backend"] = "replay";
    meta["archive"] = archive_dir.string();
    if (!plan_meta.is_null() && plan_meta.contains("snapshot")) {
        meta["snapshot"] = plan_meta["snapshot"];
        meta["snapshot_hashes"] = plan_meta["snapshot_hashes"];
        meta["family"] = plan_meta["family"];
    }
    write_file_atomic(run_dir / "run.meta.json", meta.dump(2) + "\n");

    RunSummary sum;
    sum.state = state;
    sum.planned = plan.definitions.size();
    sum.succeeded = state.count(DefinitionState::success);
    sum.failed = state.count(DefinitionState::failed);
    sum.timeout = state.count(DefinitionState::timeout);
    return sum;
}

inline RunSummary run_live(const Workspace& ws, const std::string& plan_label, Backend& backend,
                           const ExecutionLimits& limits, const std::string& run_name_in = {}) {
    std::string run_name = run_name_in.empty() ? plan_label : run_name_in;
    std::string plan_hash;
    nlohmann::json plan_meta;
    Plan plan = load_plan_checked(ws, plan_label, &plan_hash, &plan_meta);
    fs::path run_dir = ws.run_dir(run_name);
    RunState state = execute(plan, backend, limits, run_dir, plan_hash);

    nlohmann::ordered_json meta;
    meta["run"] = run_name;
    meta["plan_label"] = plan_label;
    meta["plan_hash"] = plan_hash;
    meta["backend"] = "live";
    if (!plan_meta.is_null() && plan_meta.contains("snapshot")) {
        meta["snapshot"] = plan_meta["snapshot"];
        meta["snapshot_hashes"] = plan_meta["snapshot_hashes"];
        meta["family"] = plan_meta["family"];
    }
    write_file_atomic(run_dir / "run.meta.json", meta.dump(2) + "\n");

    RunSummary sum;
    sum.state = state;
    sum.planned = plan.definitions.size();
    sum.succeeded = state.count(DefinitionState::success);
    sum.failed = state.count(DefinitionState::failed);
    sum.timeout = state.count(DefinitionState::timeout);
    return sum;
}

// ---------------------------------------------------------------------------
// Analyze stage

struct AnalyzeOutputs {
    std::vector<SideTable> entry_tables;  // one per client
    std::vector<SideTable> exit_tables;   // one per destination
    std::map<std::uint32_t, std::vector<CorrelationRow>> correlation_by_client;
    AnalysisCoverage coverage;
    long long unmapped_hops = 0;
};

// Re-derives statistics from the exact snapshot the plan was built from
// (hash-checked), parses all stored results, and writes side tables,
// correlation rows, and the coverage accounting.
inline AnalyzeOutputs analyze_run(const Workspace& ws, const std::string& run_name,
                                  CombineMode mode = CombineMode::worst_case_max,
                                  double threshold = 0.01, bool keep_non_transit = true) {
    fs::path run_dir = ws.run_dir(run_name);
    if (!fs::exists(run_dir / "run.meta.json"))
        throw ValidationError("run '" + run_name + "' not found");
    nlohmann::json run_meta = nlohmann::json::parse(read_file(run_dir / "run.meta.json"));
    std::string plan_label = run_meta.at("plan_label").get<std::string>();

    std::string plan_hash;
    nlohmann::json plan_meta;
    Plan plan = load_plan_checked(ws, plan_label, &plan_hash, &plan_meta);
    if (run_meta.at("plan_hash").get<std::string>() != plan_hash)
        throw ValidationError("plan file changed since the run was executed (hash mismatch)");

    RunState state = runstate_from_json(read_file(run_dir / "runstate.json"));
    if (state.plan_hash != plan_hash)
        throw ValidationError("run state does not match the plan (hash mismatch)");

    if (plan_meta.is_null() || !plan_meta.contains("snapshot"))
        throw ValidationError("plan metadata for '" + plan_label + "' is missing");
    std::string snapshot_name = plan_meta["snapshot"].get<std::string>();
    LoadedSnapshot snap = snapshot_load(ws, snapshot_name);
    for (auto it = plan_meta["snapshot_hashes"].begin(); it != plan_meta["snapshot_hashes"].end(); ++it)
        if (!snap.file_hashes.count(it.key()) || snap.file_hashes[it.key()] != it.value().get<std::string>())
            throw ValidationError("snapshot file " + it.key() + " changed since the plan was built");

    Family family = plan.family;
    auto aggregate = aggregate_by_as(snap.consensus, snap.mapper, family);
    std::map<std::uint32_t, double> guard_p, exit_p;
    for (const auto& s : aggregate.stats) {
        if (s.p_guard > 0.0) guard_p[s.asn] = s.p_guard;
        if (s.p_exit > 0.0) exit_p[s.asn] = s.p_exit;
    }

    auto results = load_results(plan, run_dir, state);
    std::vector<PathObservation> observations;
    long long unmapped_hops = 0;
    for (const auto& result : results) {
        if (result.status == ResultStatus::failed) continue;
        const auto& def = plan.definitions[result.definition_ref];
        double relay_probability = 0.0;
        if (direction_side(def.direction) == Side::entry) {
            std::uint32_t relay_asn = def.direction == Direction::D1 ? def.target_asn : def.source_asn;
            auto it = guard_p.find(relay_asn);
            relay_probability = it == guard_p.end() ? 0.0 : it->second;
        } else {
            std::uint32_t relay_asn = def.direction == Direction::D3 ? def.target_asn : def.source_asn;
            auto it = exit_p.find(relay_asn);
            relay_probability = it == exit_p.end() ? 0.0 : it->second;
        }
        auto obs = extract_observation(result, def, snap.mapper, relay_probability);
        if (obs) {
            unmapped_hops += obs->unmapped_hops;
            observations.push_back(std::move(*obs));
        }
    }

    AnalyzeOutputs out;
    out.unmapped_hops = unmapped_hops;
    out.coverage = analysis_coverage(plan, results, observations);

    auto grouped = group_observations(observations);
    for (const auto& [key, obs_list] : grouped) {
        SideTable table = build_side_table(obs_list, aggregate.stats);
        if (key.first == Side::entry)
            out.entry_tables.push_back(std::move(table));
        else
            out.exit_tables.push_back(std::move(table));
    }

    AsNamer namer = [&snap](std::uint32_t asn) { return snap.mapper.name(asn); };
    fs::path analysis_dir = run_dir / "analysis";
    for (const auto& table : out.entry_tables) {
        std::string base = "side_entry_" + std::to_string(table.endpoint_asn);
        write_file_atomic(analysis_dir / (base + ".json"), side_table_to_json(table, namer));
        write_file_atomic(analysis_dir / (base + ".csv"), side_table_to_csv(table, namer));
    }
    for (const auto& table : out.exit_tables) {
        std::string base = "side_exit_" + std::to_string(table.endpoint_asn);
        write_file_atomic(analysis_dir / (base + ".json"), side_table_to_json(table, namer));
        write_file_atomic(analysis_dir / (base + ".csv"), side_table_to_csv(table, namer));
    }
    for (const auto& entry : out.entry_tables) {
        std::vector<CorrelationRow> rows;
        if (mode == CombineMode::worst_case_max) {
            if (!out.exit_tables.empty()) rows = combine(entry, out.exit_tables, mode);
        } else {
            for (const auto& exit_table : out.exit_tables) {
                auto per = combine(entry, {exit_table}, CombineMode::per_destination);
                std::string base = "correlation_" + std::to_string(entry.endpoint_asn) + "_" +
                                   std::to_string(exit_table.endpoint_asn);
                write_file_atomic(analysis_dir / (base + ".json"), correlation_to_json(per, namer));
                write_file_atomic(analysis_dir / (base + ".csv"), correlation_to_csv(per, namer));
            }
            if (!out.exit_tables.empty())
                rows = combine(entry, out.exit_tables, CombineMode::worst_case_max);
        }
        out.correlation_by_client[entry.endpoint_asn] = rows;
        std::string base = "correlation_" + std::to_string(entry.endpoint_asn);
        write_file_atomic(analysis_dir / (base + ".json"), correlation_to_json(rows, namer));
        write_file_atomic(analysis_dir / (base + ".csv"), correlation_to_csv(rows, namer));
        auto significant = filter_significant(rows, threshold, keep_non_transit);
        write_file_atomic(analysis_dir / ("significant_" + std::to_string(entry.endpoint_asn) + ".csv"),
                          correlation_to_csv(significant, namer));
    }

    nlohmann::ordered_json cov;
    const char* names[4] = {"D1", "D2", "D3", "D4"};
    for (int i = 0; i < 4; ++i) {
        nlohmann::ordered_json d;
        d["planned"] = out.coverage.directions[i].planned;
        d["succeeded"] = out.coverage.directions[i].succeeded;
        cov[names[i]] = std::move(d);
    }
    cov["planned_total"] = out.coverage.planned_total();
    cov["succeeded_total"] = out.coverage.succeeded_total();
    cov["entry_covered_probability"] = out.coverage.entry_covered_probability;
    cov["exit_covered_probability"] = out.coverage.exit_covered_probability;
    cov["unmapped_hops"] = unmapped_hops;
    write_file_atomic(analysis_dir / "coverage.json", cov.dump(2) + "\n");

    nlohmann::ordered_json meta;
    meta["run"] = run_name;
    meta["plan_label"] = plan_label;
    meta["plan_hash"] = plan_hash;
    meta["family"] = family_name(family);
    meta["mode"] = mode == CombineMode::worst_case_max ? "worst_case_max" : "per_destination";
    meta["threshold"] = threshold;
    nlohmann::ordered_json clients = nlohmann::ordered_json::array();
    if (!plan_meta.is_null() && plan_meta.contains("clients"))
        clients = plan_meta["clients"];
    meta["clients"] = clients;
    write_file_atomic(analysis_dir / "analysis.meta.json", meta.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// Report stage

struct ReportRequest {
    FigureKind kind = FigureKind::entry_paths;
    FigureSpec spec;
    std::string snapshot;  // diversity figures read the snapshot directly
    Family family = Family::v4;
};

inline void report_emit(const Workspace& ws, const std::string& run_name, const ReportRequest& req) {
    fs::path out_dir = ws.reports() / run_name;

    if (req.kind == FigureKind::diversity) {
        if (req.snapshot.empty())
            throw ValidationError("diversity figure needs a snapshot name");
        LoadedSnapshot snap = snapshot_load(ws, req.snapshot);
        auto aggregate = aggregate_by_as(snap.consensus, snap.mapper, req.family);
        auto guard_curve = diversity_curve(aggregate.stats, DiversityCurve::Kind::guard);
        auto exit_curve = diversity_curve(aggregate.stats, DiversityCurve::Kind::exit);
        write_file_atomic(out_dir / "diversity_guard.csv", emit_diversity_csv(guard_curve));
        write_file_atomic(out_dir / "diversity_exit.csv", emit_diversity_csv(exit_curve));
        return;
    }

    fs::path analysis_dir = ws.run_dir(run_name) / "analysis";
    if (!fs::exists(analysis_dir / "analysis.meta.json"))
        throw ValidationError("run '" + run_name + "' has no analysis outputs");
    nlohmann::json meta = nlohmann::json::parse(read_file(analysis_dir / "analysis.meta.json"));

    nlohmann::json run_meta = nlohmann::json::parse(read_file(ws.run_dir(run_name) / "run.meta.json"));
    AsnDatabase mapper;
    if (run_meta.contains("snapshot")) {
        LoadedSnapshot snap = snapshot_load(ws, run_meta["snapshot"].get<std::string>());
        mapper = std::move(snap.mapper);
    }
    AsNamer namer = [&mapper](std::uint32_t asn) { return mapper.name(asn); };

    // client country attribution for entry grouping; empty becomes "all"
    std::map<std::uint32_t, std::string> client_country;
    for (const auto& cj : meta.at("clients")) {
        std::string country = cj.value("country", std::string());
        client_country[cj.at("asn").get<std::uint32_t>()] = country.empty() ? "all" : country;
    }

    if (req.kind == FigureKind::entry_paths) {
        std::map<std::string, std::vector<SideTable>> by_country;
        for (const auto& [asn, country] : client_country) {
            fs::path f = analysis_dir / ("side_entry_" + std::to_string(asn) + ".json");
            if (fs::exists(f)) by_country[country].push_back(side_table_from_json(read_file(f)));
        }
        auto rows = select_entry_rows(by_country, req.spec);
        write_file_atomic(out_dir / "entry_rows.csv", emit_figure_table(rows, namer));
        write_file_atomic(out_dir / "entry_points.jsonl",
                          emit_plot_data(FigureKind::entry_paths, rows, namer));
        return;
    }

    if (req.kind == FigureKind::exit_paths) {
        std::vector<SideTable> tables;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(analysis_dir)) {
            auto name = e.path().filename().string();
            if (name.rfind("side_exit_", 0) == 0 && e.path().extension() == ".json")
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) tables.push_back(side_table_from_json(read_file(f)));
        auto rows = select_exit_rows(tables, req.spec);
        write_file_atomic(out_dir / "exit_rows.csv", emit_figure_table(rows, namer));
        write_file_atomic(out_dir / "exit_points.jsonl",
                          emit_plot_data(FigureKind::exit_paths, rows, namer));
        return;
    }

    // combined: one data point per (client, AS) with the correlation potential
    std::vector<FigureRow> rows;
    std::map<std::uint32_t, FigureRow> by_asn;
    for (const auto& [asn, country] : client_country) {
        fs::path f = analysis_dir / ("correlation_" + std::to_string(asn) + ".json");
        if (!fs::exists(f)) continue;
        for (const auto& row : correlation_from_json(read_file(f))) {
            FigureRow& fr = by_asn[row.asn];
            fr.asn = row.asn;
            if (row.role == AsRole::relay) fr.hosts_relays = true;
            fr.points.push_back({country, asn, row.p_and, row.role});
        }
    }
    for (auto& [asn, row] : by_asn) rows.push_back(std::move(row));
    std::sort(rows.begin(), rows.end(), [](const FigureRow& a, const FigureRow& b) {
        double ma = a.max_value(), mb = b.max_value();
        if (ma != mb) return ma > mb;
        return a.asn < b.asn;
    });
    write_file_atomic(out_dir / "combined_rows.csv", emit_figure_table(rows, namer));
    write_file_atomic(out_dir / "combined_points.jsonl",
                      emit_plot_data(FigureKind::combined, rows, namer));
}

// ---------------------------------------------------------------------------
// Compare stage

// Per-client delta between two analyzed runs of the same family.
inline std::map<std::uint32_t, DeltaReport> compare_analyses(const Workspace& ws,
                                                             const std::string& run_a,
                                                             const std::string& run_b) {
    fs::path dir_a = ws.run_dir(run_a) / "analysis";
    fs::path dir_b = ws.run_dir(run_b) / "analysis";
    if (!fs::exists(dir_a / "analysis.meta.json"))
        throw ValidationError("run '" + run_a + "' has no analysis outputs");
    if (!fs::exists(dir_b / "analysis.meta.json"))
        throw ValidationError("run '" + run_b + "' has no analysis outputs");
    nlohmann::json meta_a = nlohmann::json::parse(read_file(dir_a / "analysis.meta.json"));
    nlohmann::json meta_b = nlohmann::json::parse(read_file(dir_b / "analysis.meta.json"));
    if (meta_a.at("family").get<std::string>() != meta_b.at("family").get<std::string>())
        throw ValidationError("runs use different address families");

    auto clients_of = [](const nlohmann::json& meta) {
        std::set<std::uint32_t> out;
        for (const auto& cj : meta.at("clients")) out.insert(cj.at("asn").get<std::uint32_t>());
        return out;
    };
    std::set<std::uint32_t> clients = clients_of(meta_a);
    for (auto asn : clients_of(meta_b)) clients.insert(asn);

    std::map<std::uint32_t, DeltaReport> out;
    for (std::uint32_t asn : clients) {
        fs::path fa = dir_a / ("correlation_" + std::to_string(asn) + ".json");
        fs::path fb = dir_b / ("correlation_" + std::to_string(asn) + ".json");
        std::vector<CorrelationRow> rows_a, rows_b;
        if (fs::exists(fa)) rows_a = correlation_from_json(read_file(fa));
        if (fs::exists(fb)) rows_b = correlation_from_json(read_file(fb));
        out[asn] = compare_runs(rows_a, rows_b);
    }
    return out;
}

}  // namespace asrisk
