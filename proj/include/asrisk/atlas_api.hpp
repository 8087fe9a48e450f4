// asrisk -- live measurement-API backend: create a traceroute measurement,
// poll until it stops, fetch the raw results. Base URL is configurable so
// tests can run against a local stand-in.

#pragma once

#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "asrisk/executor.hpp"
#include "asrisk/planner.hpp"

namespace asrisk {

// Fetch one URL ("http[s]://host[:port]/path") as text; throws on failure.
inline std::string http_get_text(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ValidationError("bad URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
    httplib::Client client(base);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    client.set_follow_location(true);
    auto res = client.Get(path);
    if (!res)
        throw std::runtime_error("fetch failed for " + url + ": " + httplib::to_string(res.error()));
    if (res->status / 100 != 2)
        throw std::runtime_error("fetch failed for " + url + ": status " + std::to_string(res->status));
    return res->body;
}

struct AtlasApiConfig {
    std::string base_url = "https://atlas.ripe.net";
    std::string api_key;  // from ATLAS_API_KEY
    int poll_interval_ms = 30000;
    int max_polls = 40;
};

class LiveBackend : public Backend {
public:
    explicit LiveBackend(AtlasApiConfig config) : config_(std::move(config)) {}

    RawResult run(const MeasurementDefinition& def) override {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(30);
        client.set_read_timeout(60);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Key " + config_.api_key);

        auto body = creation_body(def);
        auto created = client.Post("/api/v2/measurements/", headers, body.dump(),
                                   "application/json");
        if (!created)
            throw BackendSuspend("measurement API unreachable");
        if (created->status == 401 || created->status == 403)
            throw BackendSuspend("measurement API rejected credentials (" +
                                 std::to_string(created->status) + ")");
        if (created->status == 429)
            throw BackendSuspend("measurement API quota exhausted");
        if (created->status / 100 != 2)
            return {false, {}, "measurement creation failed with status " +
                                   std::to_string(created->status)};

        std::int64_t msm_id = 0;
        try {
            auto j = nlohmann::json::parse(created->body);
            msm_id = j.at("measurements").at(0).get<std::int64_t>();
        } catch (const std::exception& e) {
            return {false, {}, std::string("unexpected creation response: ") + e.what()};
        }

        std::string msm_path = "/api/v2/measurements/" + std::to_string(msm_id) + "/";
        for (int poll = 0; poll < config_.max_polls; ++poll) {
            auto status = client.Get(msm_path, headers);
            if (status && status->status / 100 == 2) {
                try {
                    auto j = nlohmann::json::parse(status->body);
                    std::string name = j.at("status").at("name").get<std::string>();
                    if (name == "Stopped" || name == "Failed" || name == "No suitable probes")
                        break;
                } catch (const std::exception&) {
                    // keep polling; transient body problems are not fatal
                }
            }
            if (config_.poll_interval_ms > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(config_.poll_interval_ms));
        }

        auto results = client.Get(msm_path + "results/", headers);
        if (!results)
            throw BackendSuspend("measurement API unreachable while fetching results");
        if (results->status / 100 != 2)
            return {false, {}, "result fetch failed with status " + std::to_string(results->status)};
        return {true, results->body, {}};
    }

    // Creation body for one definition; the wire format the API expects.
    static nlohmann::ordered_json creation_body(const MeasurementDefinition& def) {
        nlohmann::ordered_json definition;
        definition["type"] = "traceroute";
        definition["af"] = def.family == Family::v4 ? 4 : 6;
        definition["protocol"] = kTracerouteProtocol;
        definition["response_timeout"] = kResponseTimeoutMs;
        definition["packets"] = kPacketsPerHop;
        definition["target"] = def.target_ip.to_string();
        definition["description"] = def.key();
        nlohmann::ordered_json probe;
        probe["type"] = "probes";
        probe["value"] = std::to_string(def.source_probe);
        probe["requested"] = 1;
        nlohmann::ordered_json body;
        body["definitions"] = nlohmann::ordered_json::array({definition});
        body["probes"] = nlohmann::ordered_json::array({probe});
        body["is_oneoff"] = true;
        return body;
    }

private:
    AtlasApiConfig config_;
};

}  // namespace asrisk

#include "asrisk/pipeline.hpp"

namespace asrisk {

struct SnapshotUrls {
    std::string consensus;
    std::string probes;
    std::string ip2asn_v4;
    std::string ip2asn_v6;
};

// Fetch the public data files and store them as a named snapshot. The
// fetched bytes go through the same validation as imported files.
inline void snapshot_fetch(const Workspace& ws, const std::string& name, const SnapshotUrls& urls) {
    if (urls.consensus.empty() || urls.probes.empty() || urls.ip2asn_v4.empty())
        throw ValidationError("snapshot fetch needs consensus, probes and ip2asn-v4 URLs");
    std::string consensus_text = http_get_text(urls.consensus);
    std::string probes_text = http_get_text(urls.probes);
    std::string ip2asn_v4_text = http_get_text(urls.ip2asn_v4);
    std::string ip2asn_v6_text = urls.ip2asn_v6.empty() ? std::string() : http_get_text(urls.ip2asn_v6);

    LoadedSnapshot snap;
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
    nlohmann::ordered_json sources = nlohmann::ordered_json::object();
    sources["consensus"] = urls.consensus;
    sources["probes"] = urls.probes;
    sources["ip2asn_v4"] = urls.ip2asn_v4;
    if (!urls.ip2asn_v6.empty()) sources["ip2asn_v6"] = urls.ip2asn_v6;
    manifest["sources"] = std::move(sources);
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    snap.name = name;
    write_snapshot_summary(ws, name, snap);
}

}  // namespace asrisk
