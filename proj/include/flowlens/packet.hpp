#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowlens/net.hpp"

namespace flowlens {

// TCP option kinds as they appear on the wire.
namespace tcpopt {
inline constexpr std::uint8_t kEol = 0;
inline constexpr std::uint8_t kNop = 1;
inline constexpr std::uint8_t kMss = 2;
inline constexpr std::uint8_t kWindowScale = 3;
inline constexpr std::uint8_t kSackPermitted = 4;
inline constexpr std::uint8_t kSack = 5;
inline constexpr std::uint8_t kTimestamp = 8;

inline std::string name(std::uint8_t kind) {
  switch (kind) {
    case kEol: return "EOL";
    case kNop: return "NOP";
    case kMss: return "MSS";
    case kWindowScale: return "WS";
    case kSackPermitted: return "SACK";
    case kSack: return "SACKB";
    case kTimestamp: return "TS";
    default: return "K" + std::to_string(kind);
  }
}

inline std::uint8_t parse_name(std::string_view s) {
  if (s == "EOL") return kEol;
  if (s == "NOP") return kNop;
  if (s == "MSS") return kMss;
  if (s == "WS") return kWindowScale;
  if (s == "SACK") return kSackPermitted;
  if (s == "SACKB") return kSack;
  if (s == "TS") return kTimestamp;
  if (s.size() > 1 && s.front() == 'K') {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size() && v <= 255) return static_cast<std::uint8_t>(v);
  }
  throw ParseError("unknown TCP option name '" + std::string(s) + "'");
}

// Wire length of an option as the generator emits it.
inline std::size_t wire_length(std::uint8_t kind) {
  switch (kind) {
    case kEol:
    case kNop: return 1;
    case kMss: return 4;
    case kWindowScale: return 3;
    case kSackPermitted: return 2;
    case kTimestamp: return 10;
    default: return 2;
  }
}
}  // namespace tcpopt

using OptionLayout = std::vector<std::uint8_t>;

inline std::string layout_to_string(const OptionLayout& layout) {
  std::string s;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i) s += ',';
    s += tcpopt::name(layout[i]);
  }
  return s;
}

inline OptionLayout parse_layout(std::string_view s) {
  OptionLayout out;
  s = trim(s);
  if (s.empty()) return out;
  for (auto part : split(s, ',')) out.push_back(tcpopt::parse_name(trim(part)));
  return out;
}

// Characteristics of a TCP SYN (SYN set, ACK clear) used for passive OS fingerprinting.
struct SynSignature {
  std::uint16_t window_size = 0;
  std::uint8_t observed_ttl = 0;
  bool df_flag = false;
  std::optional<std::uint16_t> mss;
  OptionLayout options_layout;
  // Option parsing stopped at a malformed option; layout is truncated there.
  bool options_malformed = false;

  friend bool operator==(const SynSignature&, const SynSignature&) = default;
};

// One captured IPv4 packet after decoding.
struct PacketRecord {
  std::int64_t ts_us = 0;  // microseconds since the first packet of the trace
  Ipv4Addr src_ip;
  Ipv4Addr dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  IpProto protocol;
  std::uint8_t ttl = 0;
  std::uint16_t ip_len = 20;
  // Non-first IP fragment: no transport header, excluded from flow keying.
  bool non_first_fragment = false;
  std::optional<SynSignature> syn_sig;

  double timestamp() const { return static_cast<double>(ts_us) * 1e-6; }

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

}  // namespace flowlens
