// asrisk -- command-line pipeline: snapshot, coverage, plan, run, analyze,
// report, compare. Exit codes: 0 ok, 1 validation error, 2 execution error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "asrisk/atlas_api.hpp"
#include "asrisk/pipeline.hpp"

using namespace asrisk;

namespace {

int run_cli(int argc, char** argv) {
    CLI::App app{"AS-level correlation risk measurement pipeline for Tor"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string workspace_dir = ".";
    std::string family_str = "v4";
    bool offline = false;
    app.add_option("--workspace", workspace_dir, "workspace directory")->envname("ASRISK_WORKSPACE");
    app.add_option("--family", family_str, "address family (v4|v6)")->check(CLI::IsMember({"v4", "v6"}));
    app.add_flag("--offline", offline, "fail instead of touching the network");

    // snapshot
    auto* snap_cmd = app.add_subcommand("snapshot", "import or fetch consensus/probe/ip2asn data");
    std::string snap_name, snap_consensus, snap_probes, snap_ip2asn_v4, snap_ip2asn_v6;
    std::string snap_consensus_url, snap_probes_url, snap_ip2asn_v4_url, snap_ip2asn_v6_url;
    snap_cmd->add_option("--name", snap_name, "snapshot name")->required();
    snap_cmd->add_option("--consensus", snap_consensus, "relay-details JSON file");
    snap_cmd->add_option("--probes", snap_probes, "probe JSON file");
    snap_cmd->add_option("--ip2asn-v4", snap_ip2asn_v4, "ip2asn v4 TSV file");
    snap_cmd->add_option("--ip2asn-v6", snap_ip2asn_v6, "ip2asn v6 TSV file");
    snap_cmd->add_option("--consensus-url", snap_consensus_url, "fetch relay details from this URL");
    snap_cmd->add_option("--probes-url", snap_probes_url, "fetch probe records from this URL");
    snap_cmd->add_option("--ip2asn-v4-url", snap_ip2asn_v4_url, "fetch ip2asn v4 TSV from this URL");
    snap_cmd->add_option("--ip2asn-v6-url", snap_ip2asn_v6_url, "fetch ip2asn v6 TSV from this URL");

    // coverage
    auto* cov_cmd = app.add_subcommand("coverage", "probe coverage and top uncovered ASes");
    std::string cov_snapshot;
    std::size_t cov_top = 10;
    cov_cmd->add_option("--snapshot", cov_snapshot, "snapshot name")->required();
    cov_cmd->add_option("--top", cov_top, "number of uncovered ASes to list");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "expand a scenario into traceroute definitions");
    std::string plan_scenario, plan_snapshot;
    plan_cmd->add_option("--scenario", plan_scenario, "scenario file")->required();
    plan_cmd->add_option("--snapshot", plan_snapshot, "snapshot name")->required();

    // run
    auto* run_cmd = app.add_subcommand("run", "execute a plan (replay archive or live API)");
    std::string run_plan, run_archive, run_name, run_api_base = "https://atlas.ripe.net";
    int run_parallel = 4;
    double run_rps = 10.0;
    run_cmd->add_option("--plan", run_plan, "plan label")->required();
    run_cmd->add_option("--replay", run_archive, "replay archive directory");
    run_cmd->add_option("--name", run_name, "run name (defaults to the plan label)");
    run_cmd->add_option("--api-base", run_api_base, "measurement API base URL");
    run_cmd->add_option("--parallel", run_parallel, "maximum in-flight measurements");
    run_cmd->add_option("--rps", run_rps, "request rate limit per second");

    // analyze
    auto* an_cmd = app.add_subcommand("analyze", "side tables and correlation rows for a run");
    std::string an_run, an_mode = "worst_case_max";
    double an_threshold = 0.01;
    bool an_transit_only = false;
    an_cmd->add_option("--run", an_run, "run name")->required();
    an_cmd->add_option("--mode", an_mode, "combination mode")
        ->check(CLI::IsMember({"worst_case_max", "per_destination"}));
    an_cmd->add_option("--threshold", an_threshold, "both-sides significance threshold");
    an_cmd->add_flag("--transit-only", an_transit_only, "drop endpoint/relay rows from the filter");

    // report
    auto* rep_cmd = app.add_subcommand("report", "figure tables and plot data");
    std::string rep_run, rep_figure = "combined", rep_snapshot, rep_carry;
    std::size_t rep_top_n = 15, rep_min_clients = 5, rep_min_points = 5;
    double rep_candidate = 0.20, rep_median_min = 0.01;
    std::string rep_rank_stat = "max";
    rep_cmd->add_option("--run", rep_run, "run name (analysis source)");
    rep_cmd->add_option("--figure", rep_figure, "figure kind")
        ->check(CLI::IsMember({"entry", "exit", "combined", "diversity"}));
    rep_cmd->add_option("--snapshot", rep_snapshot, "snapshot (diversity figures)");
    rep_cmd->add_option("--carry-forward", rep_carry, "file with ASes from a previous period");
    rep_cmd->add_option("--top-n", rep_top_n, "entry: most likely ASes per country");
    rep_cmd->add_option("--min-clients", rep_min_clients, "entry: keep ASes occurring for more than this many clients");
    rep_cmd->add_option("--rank-stat", rep_rank_stat, "entry ranking statistic")
        ->check(CLI::IsMember({"max", "median"}));
    rep_cmd->add_option("--candidate-threshold", rep_candidate, "exit: max p_total gate");
    rep_cmd->add_option("--median-min", rep_median_min, "exit: minimum median");
    rep_cmd->add_option("--min-points", rep_min_points, "exit: minimum data points");

    // compare
    auto* cmp_cmd = app.add_subcommand("compare", "per-AS deltas between two analyzed runs");
    std::string cmp_a, cmp_b;
    cmp_cmd->add_option("--run-a", cmp_a, "first run")->required();
    cmp_cmd->add_option("--run-b", cmp_b, "second run")->required();

    CLI11_PARSE(app, argc, argv);

    Workspace ws{workspace_dir};
    Family family = family_str == "v6" ? Family::v6 : Family::v4;

    if (snap_cmd->parsed()) {
        bool fetching = !snap_consensus_url.empty() || !snap_probes_url.empty() ||
                        !snap_ip2asn_v4_url.empty() || !snap_ip2asn_v6_url.empty();
        if (fetching) {
            if (offline)
                throw ValidationError("offline mode: snapshot URLs are not allowed");
            SnapshotUrls urls{snap_consensus_url, snap_probes_url, snap_ip2asn_v4_url,
                              snap_ip2asn_v6_url};
            snapshot_fetch(ws, snap_name, urls);
            std::cout << "snapshot '" << snap_name << "' fetched\n";
            return 0;
        }
        if (snap_consensus.empty() || snap_probes.empty() || snap_ip2asn_v4.empty())
            throw ValidationError("snapshot requires --consensus, --probes and --ip2asn-v4 files "
                                  "(or the corresponding --*-url options)");
        snapshot_import(ws, snap_name, snap_consensus, snap_probes, snap_ip2asn_v4,
                        snap_ip2asn_v6.empty() ? std::filesystem::path{} : std::filesystem::path{snap_ip2asn_v6});
        std::cout << "snapshot '" << snap_name << "' imported\n";
        return 0;
    }

    if (cov_cmd->parsed()) {
        LoadedSnapshot snap = snapshot_load(ws, cov_snapshot);
        auto out = coverage_outputs(snap, family, cov_top);
        auto print = [](const char* label, const CoverageReport& r) {
            std::cout << label << ": " << r.covered_ases << "/" << r.total_ases << " ASes, "
                      << r.covered_relays << "/" << r.total_relays << " relays, "
                      << format_prob3(r.covered_probability) << " of "
                      << format_prob3(r.total_probability) << " probability covered\n";
        };
        print("guard", out.guard);
        print("exit", out.exit);
        std::string base = "coverage_" + cov_snapshot + "_" + family_name(family);
        write_file_atomic(ws.reports() / (base + "_uncovered_guard.csv"),
                          uncovered_table_csv(out.top_uncovered_guard, snap.mapper,
                                              DiversityCurve::Kind::guard));
        write_file_atomic(ws.reports() / (base + "_uncovered_exit.csv"),
                          uncovered_table_csv(out.top_uncovered_exit, snap.mapper,
                                              DiversityCurve::Kind::exit));
        std::cout << "uncovered tables written under " << (ws.reports() / base).string() << "_*\n";
        return 0;
    }

    if (plan_cmd->parsed()) {
        auto out = plan_build(ws, plan_scenario, plan_snapshot, offline);
        std::cout << "plan '" << out.plan.scenario_label << "': " << out.plan.definitions.size()
                  << " definitions (D1 " << out.plan.count(Direction::D1) << ", D2 "
                  << out.plan.count(Direction::D2) << ", D3 " << out.plan.count(Direction::D3)
                  << ", D4 " << out.plan.count(Direction::D4) << ")\n";
        for (const auto& w : out.plan.warnings) std::cout << "warning: " << w << "\n";
        for (const auto& r : out.targets.report) std::cout << "note: " << r << "\n";
        return 0;
    }

    if (run_cmd->parsed()) {
        ExecutionLimits limits;
        limits.parallelism = run_parallel;
        limits.requests_per_second = run_rps;
        RunSummary sum;
        if (!run_archive.empty()) {
            sum = run_replay(ws, run_plan, run_archive, limits, run_name);
        } else {
            if (offline)
                throw ValidationError("offline mode: run requires --replay <archive>");
            AtlasApiConfig config;
            config.base_url = run_api_base;
            const char* key = std::getenv("ATLAS_API_KEY");
            if (!key || !*key)
                throw ValidationError("live runs need ATLAS_API_KEY in the environment");
            config.api_key = key;
            LiveBackend backend(config);
            sum = run_live(ws, run_plan, backend, limits, run_name);
        }
        std::cout << "run complete: " << sum.succeeded << "/" << sum.planned << " succeeded, "
                  << sum.timeout << " timeout, " << sum.failed << " failed\n";
        if (sum.failed > 0) std::cout << "warning: " << sum.failed << " definitions without results\n";
        if (sum.state.suspended) {
            std::cout << "run suspended: " << sum.state.suspend_reason << " (resume by re-running)\n";
            return 2;
        }
        return 0;
    }

    if (an_cmd->parsed()) {
        CombineMode mode = an_mode == "per_destination" ? CombineMode::per_destination
                                                        : CombineMode::worst_case_max;
        auto out = analyze_run(ws, an_run, mode, an_threshold, !an_transit_only);
        std::cout << "analysis: " << out.entry_tables.size() << " entry tables, "
                  << out.exit_tables.size() << " exit tables\n";
        const char* names[4] = {"D1", "D2", "D3", "D4"};
        for (int i = 0; i < 4; ++i)
            std::cout << "  " << names[i] << " " << out.coverage.directions[i].succeeded << "/"
                      << out.coverage.directions[i].planned << "\n";
        std::cout << "  entry covered probability " << format_prob3(out.coverage.entry_covered_probability)
                  << ", exit " << format_prob3(out.coverage.exit_covered_probability) << "\n";
        return 0;
    }

    if (rep_cmd->parsed()) {
        ReportRequest req;
        req.family = family;
        req.snapshot = rep_snapshot;
        if (rep_figure == "entry") req.kind = FigureKind::entry_paths;
        else if (rep_figure == "exit") req.kind = FigureKind::exit_paths;
        else if (rep_figure == "diversity") req.kind = FigureKind::diversity;
        else req.kind = FigureKind::combined;
        req.spec.entry_top_n = rep_top_n;
        req.spec.entry_min_clients = rep_min_clients;
        req.spec.rank_stat = rep_rank_stat == "median" ? FigureSpec::RankStat::median
                                                       : FigureSpec::RankStat::max;
        req.spec.exit_candidate_threshold = rep_candidate;
        req.spec.exit_median_min = rep_median_min;
        req.spec.exit_min_points = rep_min_points;
        if (!rep_carry.empty()) {
            std::string text = read_file(rep_carry);
            for (auto asn : detail::parse_asn_list(
                     [&] {  // newline-separated lists are also accepted
                         std::string joined = text;
                         for (char& c : joined)
                             if (c == '\n' || c == '\r') c = ',';
                         return joined;
                     }(),
                     "carry-forward"))
                req.spec.carry_forward.push_back(asn);
        }
        if (req.kind != FigureKind::diversity && rep_run.empty())
            throw ValidationError("report: --run is required for non-diversity figures");
        report_emit(ws, rep_run.empty() ? rep_snapshot : rep_run, req);
        std::cout << "report written under " << (ws.reports() / (rep_run.empty() ? rep_snapshot : rep_run)).string() << "\n";
        return 0;
    }

    if (cmp_cmd->parsed()) {
        auto deltas = compare_analyses(ws, cmp_a, cmp_b);
        std::filesystem::path out_dir = ws.reports() / ("compare_" + cmp_a + "_vs_" + cmp_b);
        AsNamer no_names;
        for (const auto& [asn, report] : deltas) {
            write_file_atomic(out_dir / ("delta_" + std::to_string(asn) + ".csv"),
                              delta_report_to_csv(report, no_names));
            std::size_t nonzero = 0;
            for (const auto& d : report.changed)
                if (d.delta_p_and != 0.0 || d.delta_p_guard != 0.0 || d.delta_p_exit != 0.0) ++nonzero;
            std::cout << "client AS" << asn << ": " << nonzero << " changed, "
                      << report.appeared.size() << " appeared, " << report.disappeared.size()
                      << " disappeared\n";
        }
        std::cout << "delta tables written under " << out_dir.string() << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "execution error: " << e.what() << "\n";
        return 2;
    }
}
