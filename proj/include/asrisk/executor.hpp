// asrisk -- execute a plan against the measurement API or replay an
// archive. Raw responses are persisted before parsing; runs are resumable.

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "asrisk/planner.hpp"
#include "asrisk/util.hpp"

namespace asrisk {

struct HopResponse {
    std::optional<IpAddr> from;  // nullopt = no reply ("*")
    std::optional<double> rtt_ms;
};

struct HopRecord {
    int hop_index = 0;  // 1-based, strictly increasing within a result
    std::vector<HopResponse> responses;
};

enum class ResultStatus { success, timeout, failed };

inline const char* result_status_name(ResultStatus s) {
    switch (s) {
        case ResultStatus::success: return "success";
        case ResultStatus::timeout: return "timeout";
        case ResultStatus::failed: return "failed";
    }
    return "?";
}

struct TracerouteResult {
    std::size_t definition_ref = 0;
    std::string measurement_id;
    ResultStatus status = ResultStatus::failed;
    std::vector<HopRecord> hops;
    std::string failure_reason;
    int malformed_hops = 0;

    bool has_responding_hop() const {
        for (const auto& h : hops)
            for (const auto& r : h.responses)
                if (r.from) return true;
        return false;
    }
};

// Result document: {"result": [{"hop": n, "result": [{"from":ip,"rtt":ms} | {"x":"*"}]}]},
// the public traceroute-result schema; a result may also arrive wrapped in
// a one-element array. Unknown fields ignored. Zero responding hops is a
// timeout; a missing or empty result array is a failure.
inline TracerouteResult parse_result(std::string_view raw) {
    TracerouteResult out;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
        out.status = ResultStatus::failed;
        out.failure_reason = std::string("unparseable result document: ") + e.what();
        return out;
    }
    if (doc.is_array()) {
        if (doc.empty()) {
            out.status = ResultStatus::failed;
            out.failure_reason = "empty result set";
            return out;
        }
        doc = doc.front();
    }
    if (!doc.is_object() || !doc.contains("result") || !doc["result"].is_array()) {
        out.status = ResultStatus::failed;
        out.failure_reason = "missing result array";
        return out;
    }
    if (doc.contains("msm_id") && doc["msm_id"].is_number_integer())
        out.measurement_id = std::to_string(doc["msm_id"].get<std::int64_t>());

    int last_hop = 0;
    for (const auto& hj : doc["result"]) {
        if (!hj.is_object() || !hj.contains("hop") || !hj["hop"].is_number_integer()) {
            ++out.malformed_hops;
            continue;
        }
        HopRecord hop;
        hop.hop_index = hj["hop"].get<int>();
        if (hop.hop_index <= last_hop) {
            ++out.malformed_hops;
            continue;
        }
        if (hj.contains("result") && hj["result"].is_array()) {
            for (const auto& rj : hj["result"]) {
                if (!rj.is_object()) {
                    ++out.malformed_hops;
                    continue;
                }
                HopResponse resp;
                if (rj.contains("from") && rj["from"].is_string())
                    resp.from = IpAddr::parse(rj["from"].get<std::string>());
                if (rj.contains("rtt") && rj["rtt"].is_number())
                    resp.rtt_ms = rj["rtt"].get<double>();
                // {"x": "*"} entries keep resp.from empty: the no-reply marker
                hop.responses.push_back(resp);
            }
        }
        last_hop = hop.hop_index;
        out.hops.push_back(std::move(hop));
    }
    if (out.hops.empty()) {
        out.status = ResultStatus::failed;
        out.failure_reason = "empty result array";
        return out;
    }
    out.status = out.has_responding_hop() ? ResultStatus::success : ResultStatus::timeout;
    return out;
}

// ---------------------------------------------------------------------------
// Backends

// Thrown by a backend when the run should suspend and later resume (quota,
// auth, connectivity); everything already completed stays completed.
class BackendSuspend : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RawResult {
    bool found = false;
    std::string body;        // unmodified response document
    std::string error;       // set when found == false
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual RawResult run(const MeasurementDefinition& def) = 0;
};

// Replays archived raw results keyed by (direction, source AS, target AS,
// family). Missing keys mark the definition failed, not the run.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::filesystem::path& archive_dir) : dir_(archive_dir) {
        auto manifest_path = dir_ / "manifest.json";
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(read_file(manifest_path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("archive manifest: " + std::string(e.what()), e.byte);
        }
        if (!manifest.is_object() || !manifest.contains("keys") || !manifest["keys"].is_object())
            throw ValidationError("archive manifest: missing 'keys' object");
        for (auto it = manifest["keys"].begin(); it != manifest["keys"].end(); ++it)
            index_[it.key()] = it.value().get<std::string>();
    }

    RawResult run(const MeasurementDefinition& def) override {
        auto it = index_.find(def.key());
        if (it == index_.end()) return {false, {}, "no archived result"};
        return {true, read_file(dir_ / it->second), {}};
    }

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> index_;
};

// Requests-per-second throttle with an injectable clock so it can be
// tested without sleeping.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit RateLimiter(double requests_per_second,
                         Clock clock = [] { return std::chrono::steady_clock::now(); },
                         Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : interval_ms_(requests_per_second > 0 ? 1000.0 / requests_per_second : 0.0),
          clock_(std::move(clock)),
          sleeper_(std::move(sleeper)) {}

    // Blocks until the next request slot; thread-safe.
    void acquire() {
        if (interval_ms_ <= 0.0) return;
        std::chrono::milliseconds wait{0};
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto now = clock_();
            auto interval = std::chrono::milliseconds(static_cast<long>(interval_ms_));
            if (!initialized_ || now >= next_slot_) {
                next_slot_ = now + interval;
                initialized_ = true;
                return;
            }
            wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_slot_ - now);
            next_slot_ += interval;
        }
        sleeper_(wait);
    }

private:
    double interval_ms_;
    Clock clock_;
    Sleeper sleeper_;
    std::mutex mu_;
    bool initialized_ = false;
    std::chrono::steady_clock::time_point next_slot_{};
};

struct ExecutionLimits {
    int parallelism = 4;
    double requests_per_second = 10.0;
};

// ---------------------------------------------------------------------------
// Run state

enum class DefinitionState { pending, success, timeout, failed };

inline const char* definition_state_name(DefinitionState s) {
    switch (s) {
        case DefinitionState::pending: return "pending";
        case DefinitionState::success: return "success";
        case DefinitionState::timeout: return "timeout";
        case DefinitionState::failed: return "failed";
    }
    return "?";
}

inline std::optional<DefinitionState> definition_state_from(std::string_view s) {
    if (s == "pending") return DefinitionState::pending;
    if (s == "success") return DefinitionState::success;
    if (s == "timeout") return DefinitionState::timeout;
    if (s == "failed") return DefinitionState::failed;
    return std::nullopt;
}

struct RunState {
    std::string plan_label;
    std::string plan_hash;
    std::string raw_store = "raw";
    std::vector<DefinitionState> states;
    std::vector<std::string> reasons;  // parallel to states, empty when n/a
    bool suspended = false;
    std::string suspend_reason;

    std::set<std::size_t> completed() const {
        std::set<std::size_t> out;
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] != DefinitionState::pending) out.insert(i);
        return out;
    }
    std::set<std::size_t> pending() const {
        std::set<std::size_t> out;
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] == DefinitionState::pending) out.insert(i);
        return out;
    }
    std::size_t count(DefinitionState s) const {
        return std::count(states.begin(), states.end(), s);
    }
};

inline std::string runstate_to_json(const RunState& rs) {
    nlohmann::ordered_json j;
    j["plan_label"] = rs.plan_label;
    j["plan_hash"] = rs.plan_hash;
    j["raw_store"] = rs.raw_store;
    j["suspended"] = rs.suspended;
    j["suspend_reason"] = rs.suspend_reason;
    nlohmann::ordered_json defs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rs.states.size(); ++i) {
        nlohmann::ordered_json d;
        d["index"] = i;
        d["state"] = definition_state_name(rs.states[i]);
        d["reason"] = rs.reasons[i];
        defs.push_back(std::move(d));
    }
    j["definitions"] = std::move(defs);
    return j.dump(2) + "\n";
}

inline RunState runstate_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("run state: ") + e.what(), e.byte);
    }
    RunState rs;
    rs.plan_label = j.at("plan_label").get<std::string>();
    rs.plan_hash = j.at("plan_hash").get<std::string>();
    rs.raw_store = j.at("raw_store").get<std::string>();
    rs.suspended = j.value("suspended", false);
    rs.suspend_reason = j.value("suspend_reason", std::string());
    for (const auto& d : j.at("definitions")) {
        auto st = definition_state_from(d.at("state").get<std::string>());
        if (!st) throw ParseError("run state: bad definition state");
        rs.states.push_back(*st);
        rs.reasons.push_back(d.value("reason", std::string()));
    }
    return rs;
}

// Raw store: one file per definition key plus a manifest; a finished run's
// store doubles as a replay archive for exact re-analysis.
class RawStore {
public:
    explicit RawStore(const std::filesystem::path& dir) : dir_(dir) {
        std::filesystem::create_directories(dir_);
        auto manifest = dir_ / "manifest.json";
        if (std::filesystem::exists(manifest)) {
            auto j = nlohmann::json::parse(read_file(manifest));
            for (auto it = j["keys"].begin(); it != j["keys"].end(); ++it)
                index_[it.key()] = it.value().get<std::string>();
        }
    }

    // First stored result for a key wins; later collisions are ignored.
    void put(const std::string& key, std::string_view raw_bytes) {
        std::lock_guard<std::mutex> lock(mu_);
        if (index_.count(key)) return;
        std::string filename = filename_for(key);
        write_file_atomic(dir_ / filename, raw_bytes);
        index_[key] = filename;
        flush_manifest_locked();
    }

    bool contains(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mu_);
        return index_.count(key) > 0;
    }

    std::optional<std::string> get(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        return read_file(dir_ / it->second);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    static std::string filename_for(const std::string& key) {
        std::string name = key;
        for (char& c : name)
            if (c == ':') c = '_';
        return name + ".json";
    }

    void flush_manifest_locked() {
        nlohmann::ordered_json j;
        nlohmann::ordered_json keys = nlohmann::ordered_json::object();
        for (const auto& [k, v] : index_) keys[k] = v;  // std::map: sorted
        j["keys"] = std::move(keys);
        write_file_atomic(dir_ / "manifest.json", j.dump(2) + "\n");
    }

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::string> index_;
};

// ---------------------------------------------------------------------------
// Execution

// Runs every pending definition of the plan. Parallel up to
// limits.parallelism, throttled by limits.requests_per_second; persistence
// is serialized inside RawStore/RunState. Returns the final state; on a
// BackendSuspend the state is persisted with the remaining work pending.
inline RunState execute(const Plan& plan, Backend& backend, const ExecutionLimits& limits,
                        const std::filesystem::path& run_dir, const std::string& plan_hash,
                        const std::function<void(std::size_t, const TracerouteResult&)>& on_result = {}) {
    std::filesystem::create_directories(run_dir);
    auto state_path = run_dir / "runstate.json";

    RunState rs;
    if (std::filesystem::exists(state_path)) {
        rs = runstate_from_json(read_file(state_path));
        if (rs.plan_hash != plan_hash)
            throw ValidationError("run state belongs to a different plan (hash mismatch)");
        if (rs.states.size() != plan.definitions.size())
            throw ValidationError("run state definition count does not match the plan");
    } else {
        rs.plan_label = plan.scenario_label;
        rs.plan_hash = plan_hash;
        rs.states.assign(plan.definitions.size(), DefinitionState::pending);
        rs.reasons.assign(plan.definitions.size(), {});
    }
    rs.suspended = false;
    rs.suspend_reason.clear();

    RawStore store(run_dir / rs.raw_store);
    RateLimiter limiter(limits.requests_per_second);

    std::vector<std::size_t> work;
    for (std::size_t i = 0; i < rs.states.size(); ++i)
        if (rs.states[i] == DefinitionState::pending) work.push_back(i);

    std::mutex state_mu;
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> suspend{false};
    std::string suspend_reason;

    auto worker = [&]() {
        while (!suspend.load()) {
            std::size_t slot = cursor.fetch_add(1);
            if (slot >= work.size()) return;
            std::size_t idx = work[slot];
            const MeasurementDefinition& def = plan.definitions[idx];
            limiter.acquire();
            RawResult raw;
            try {
                raw = backend.run(def);
            } catch (const BackendSuspend& e) {
                std::lock_guard<std::mutex> lock(state_mu);
                if (!suspend.exchange(true)) suspend_reason = e.what();
                return;
            }
            TracerouteResult result;
            result.definition_ref = idx;
            if (!raw.found) {
                result.status = ResultStatus::failed;
                result.failure_reason = raw.error;
            } else {
                store.put(def.key(), raw.body);  // raw before parsing
                result = parse_result(raw.body);
                result.definition_ref = idx;
            }
            {
                std::lock_guard<std::mutex> lock(state_mu);
                switch (result.status) {
                    case ResultStatus::success: rs.states[idx] = DefinitionState::success; break;
                    case ResultStatus::timeout: rs.states[idx] = DefinitionState::timeout; break;
                    case ResultStatus::failed: rs.states[idx] = DefinitionState::failed; break;
                }
                rs.reasons[idx] = result.failure_reason;
                if (on_result) on_result(idx, result);
            }
        }
    };

    int threads = std::max(1, limits.parallelism);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (suspend.load()) {
        rs.suspended = true;
        rs.suspend_reason = suspend_reason;
    }
    write_file_atomic(state_path, runstate_to_json(rs));
    return rs;
}

// Parsed results of all completed definitions, read back from the raw store.
inline std::vector<TracerouteResult> load_results(const Plan& plan,
                                                  const std::filesystem::path& run_dir,
                                                  const RunState& rs) {
    RawStore store(run_dir / rs.raw_store);
    std::vector<TracerouteResult> out;
    out.reserve(plan.definitions.size());
    for (std::size_t i = 0; i < plan.definitions.size(); ++i) {
        TracerouteResult r;
        r.definition_ref = i;
        if (rs.states[i] == DefinitionState::failed || rs.states[i] == DefinitionState::pending) {
            r.status = ResultStatus::failed;
            r.failure_reason = rs.reasons[i];
            out.push_back(std::move(r));
            continue;
        }
        auto raw = store.get(plan.definitions[i].key());
        if (!raw) {
            r.status = ResultStatus::failed;
            r.failure_reason = "raw result missing from store";
            out.push_back(std::move(r));
            continue;
        }
        r = parse_result(*raw);
        r.definition_ref = i;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace asrisk
