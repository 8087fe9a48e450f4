// asrisk -- shared small helpers: errors, summation, rounding, file I/O, hashing.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace asrisk {

// Input could not be decoded at all.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what, std::size_t byte_offset = 0)
        : std::runtime_error(what), byte_offset(byte_offset) {}
    std::size_t byte_offset;
};

// Input decoded but violates a documented constraint.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke a function contract (mixed families, mismatched endpoints, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Kahan compensated summation; the aggregation conservation checks need
// better than naive double accumulation over thousands of terms.
class KahanSum {
public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// Round half away from zero at three decimals.
inline double round3(double x) {
    return std::round(x * 1000.0) / 1000.0;
}

// Render a probability with three decimals ("0.015"). Rounds half away
// from zero exactly once, on the scaled integer, so display never depends
// on printf's tie-breaking.
inline std::string format_prob3(double x) {
    long long scaled = std::llround(std::fabs(x) * 1000.0);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", x < 0 ? "-" : "",
                  scaled / 1000, scaled % 1000);
    return buf;
}

// Bytes/second -> Gbit/s with two decimals, the unit used in tables.
inline std::string format_gbits(std::uint64_t bytes_per_s) {
    double gbit = static_cast<double>(bytes_per_s) * 8.0 / 1e9;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", gbit);
    return buf;
}

// FNV-1a 64-bit, used for input provenance fingerprints.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// All persistent outputs go through write-temp-then-rename.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
    namespace fs = std::filesystem;
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out)
            throw std::runtime_error("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace asrisk
