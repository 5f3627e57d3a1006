#pragma once

#include <charconv>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "flowlens/error.hpp"

namespace flowlens {

// IPv4 address in host byte order.
class Ipv4Addr {
 public:
  constexpr Ipv4Addr() = default;
  constexpr explicit Ipv4Addr(std::uint32_t v) : value_(v) {}
  constexpr Ipv4Addr(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  constexpr std::uint32_t value() const { return value_; }

  static Ipv4Addr parse(std::string_view s) {
    std::uint32_t v = 0;
    const char* p = s.data();
    const char* end = s.data() + s.size();
    for (int i = 0; i < 4; ++i) {
      unsigned octet = 0;
      auto [next, ec] = std::from_chars(p, end, octet);
      if (ec != std::errc{} || octet > 255 || next == p) {
        throw ParseError("bad IPv4 address '" + std::string(s) + "'");
      }
      v = (v << 8) | octet;
      p = next;
      if (i < 3) {
        if (p == end || *p != '.') throw ParseError("bad IPv4 address '" + std::string(s) + "'");
        ++p;
      }
    }
    if (p != end) throw ParseError("bad IPv4 address '" + std::string(s) + "'");
    return Ipv4Addr(v);
  }

  std::string to_string() const {
    return std::to_string(value_ >> 24) + '.' + std::to_string((value_ >> 16) & 0xff) + '.' +
           std::to_string((value_ >> 8) & 0xff) + '.' + std::to_string(value_ & 0xff);
  }

  friend constexpr auto operator<=>(Ipv4Addr, Ipv4Addr) = default;

 private:
  std::uint32_t value_ = 0;
};

struct Cidr {
  Ipv4Addr network;
  int prefix_len = 32;

  constexpr std::uint32_t mask() const {
    return prefix_len == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix_len);
  }

  constexpr bool contains(Ipv4Addr a) const {
    return (a.value() & mask()) == (network.value() & mask());
  }

  // Accepts "a.b.c.d/len" or a bare address (/32).
  static Cidr parse(std::string_view s) {
    Cidr c;
    auto slash = s.find('/');
    c.network = Ipv4Addr::parse(s.substr(0, slash));
    if (slash != std::string_view::npos) {
      auto len = s.substr(slash + 1);
      auto [p, ec] = std::from_chars(len.data(), len.data() + len.size(), c.prefix_len);
      if (ec != std::errc{} || p != len.data() + len.size() || c.prefix_len < 0 || c.prefix_len > 32) {
        throw ParseError("bad CIDR prefix '" + std::string(s) + "'");
      }
    }
    return c;
  }

  std::string to_string() const { return network.to_string() + '/' + std::to_string(prefix_len); }

  friend constexpr bool operator==(const Cidr&, const Cidr&) = default;
};

// Raw IP protocol number with the categories the analysis cares about.
enum class ProtoKind { Tcp, Udp, Icmp, Other };

struct IpProto {
  std::uint8_t number = 0;

  static constexpr std::uint8_t kIcmp = 1;
  static constexpr std::uint8_t kTcp = 6;
  static constexpr std::uint8_t kUdp = 17;

  constexpr ProtoKind kind() const {
    switch (number) {
      case kTcp: return ProtoKind::Tcp;
      case kUdp: return ProtoKind::Udp;
      case kIcmp: return ProtoKind::Icmp;
      default: return ProtoKind::Other;
    }
  }
  constexpr bool has_ports() const { return number == kTcp || number == kUdp; }

  friend constexpr auto operator<=>(IpProto, IpProto) = default;
};

inline constexpr IpProto kTcp{IpProto::kTcp};
inline constexpr IpProto kUdp{IpProto::kUdp};
inline constexpr IpProto kIcmp{IpProto::kIcmp};

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace flowlens

template <>
struct std::hash<flowlens::Ipv4Addr> {
  std::size_t operator()(flowlens::Ipv4Addr a) const noexcept { return std::hash<std::uint32_t>{}(a.value()); }
};
