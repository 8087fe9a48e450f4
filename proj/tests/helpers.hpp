// Shared test scaffolding: unique temp directories and tiny builders.

#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "asrisk/ip_addr.hpp"
#include "asrisk/probes.hpp"

namespace testutil {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path = fs::temp_directory_path() /
               ("asrisk_test_" + std::to_string(rd()) + "_" + std::to_string(counter.fetch_add(1)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline asrisk::ProbeRecord make_probe(std::int64_t id, std::uint32_t asn, const char* addr,
                                      const char* country = "") {
    asrisk::ProbeRecord p;
    p.probe_id = id;
    p.asn_v4 = asn;
    p.address_v4 = asrisk::IpAddr::parse(addr);
    p.status = asrisk::ProbeStatus::connected;
    p.country_code = country;
    return p;
}

}  // namespace testutil
