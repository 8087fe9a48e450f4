// asrisk -- IP address value type covering both families.

#pragma once

#include <arpa/inet.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

namespace asrisk {

enum class Family { v4, v6 };

inline const char* family_name(Family f) { return f == Family::v4 ? "v4" : "v6"; }

inline std::optional<Family> family_from_string(std::string_view s) {
    if (s == "v4" || s == "4") return Family::v4;
    if (s == "v6" || s == "6") return Family::v6;
    return std::nullopt;
}

// Immutable address; v4 uses the first 4 bytes. Ordering is
// byte-lexicographic and only meaningful within one family.
class IpAddr {
public:
    static std::optional<IpAddr> parse(std::string_view text) {
        std::string s(text);
        IpAddr a;
        if (inet_pton(AF_INET, s.c_str(), a.bytes_.data()) == 1) {
            a.family_ = Family::v4;
            return a;
        }
        if (inet_pton(AF_INET6, s.c_str(), a.bytes_.data()) == 1) {
            a.family_ = Family::v6;
            return a;
        }
        return std::nullopt;
    }

    static IpAddr from_v4(std::uint32_t host_order) {
        IpAddr a;
        a.family_ = Family::v4;
        std::uint32_t net = htonl(host_order);
        std::memcpy(a.bytes_.data(), &net, 4);
        return a;
    }

    static IpAddr from_v6(const std::array<std::uint8_t, 16>& bytes) {
        IpAddr a;
        a.family_ = Family::v6;
        a.bytes_ = bytes;
        return a;
    }

    Family family() const { return family_; }

    std::uint32_t v4_value() const {
        std::uint32_t net;
        std::memcpy(&net, bytes_.data(), 4);
        return ntohl(net);
    }

    const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }

    std::string to_string() const {
        char buf[INET6_ADDRSTRLEN] = {};
        if (family_ == Family::v4)
            inet_ntop(AF_INET, bytes_.data(), buf, sizeof(buf));
        else
            inet_ntop(AF_INET6, bytes_.data(), buf, sizeof(buf));
        return buf;
    }

    friend bool operator==(const IpAddr& a, const IpAddr& b) {
        if (a.family_ != b.family_) return false;
        return std::memcmp(a.bytes_.data(), b.bytes_.data(), a.width()) == 0;
    }

    friend std::strong_ordering operator<=>(const IpAddr& a, const IpAddr& b) {
        if (a.family_ != b.family_)
            return a.family_ == Family::v4 ? std::strong_ordering::less
                                           : std::strong_ordering::greater;
        int c = std::memcmp(a.bytes_.data(), b.bytes_.data(), a.width());
        if (c < 0) return std::strong_ordering::less;
        if (c > 0) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

private:
    std::size_t width() const { return family_ == Family::v4 ? 4 : 16; }

    Family family_ = Family::v4;
    std::array<std::uint8_t, 16> bytes_{};
};

}  // namespace asrisk
