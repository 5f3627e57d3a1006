#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/packet.hpp"
#include "flowlens/pcap.hpp"

namespace flowlens {

struct DirectionFilter {
  enum class Mode { All, SrcInPrefixSet, DstInPrefixSet };

  Mode mode = Mode::All;
  std::vector<Cidr> prefixes;

  static DirectionFilter all() { return {}; }
  static DirectionFilter src_in(std::vector<Cidr> p) { return make(Mode::SrcInPrefixSet, std::move(p)); }
  static DirectionFilter dst_in(std::vector<Cidr> p) { return make(Mode::DstInPrefixSet, std::move(p)); }

  // Parses the `--keep` value: "src:<CIDR>[,<CIDR>...]", "dst:<CIDR>[,...]" or "all".
  static DirectionFilter parse(std::string_view s) {
    s = trim(s);
    if (s == "all" || s.empty()) return all();
    auto colon = s.find(':');
    if (colon == std::string_view::npos) throw ParseError("--keep expects src:<CIDRs> or dst:<CIDRs>");
    auto dir = s.substr(0, colon);
    std::vector<Cidr> prefixes;
    for (auto part : split(s.substr(colon + 1), ',')) prefixes.push_back(Cidr::parse(trim(part)));
    if (dir == "src") return src_in(std::move(prefixes));
    if (dir == "dst") return dst_in(std::move(prefixes));
    throw ParseError("--keep direction must be 'src' or 'dst', got '" + std::string(dir) + "'");
  }

  bool accepts(const PacketRecord& r) const {
    switch (mode) {
      case Mode::All: return true;
      case Mode::SrcInPrefixSet: return any_contains(r.src_ip);
      case Mode::DstInPrefixSet: return any_contains(r.dst_ip);
    }
    return false;
  }

  std::string to_string() const {
    if (mode == Mode::All) return "all";
    std::string s = mode == Mode::SrcInPrefixSet ? "src:" : "dst:";
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      if (i) s += ',';
      s += prefixes[i].to_string();
    }
    return s;
  }

 private:
  static DirectionFilter make(Mode m, std::vector<Cidr> p) {
    if (p.empty()) throw ParseError("direction filter needs at least one prefix");
    DirectionFilter f;
    f.mode = m;
    f.prefixes = std::move(p);
    return f;
  }

  bool any_contains(Ipv4Addr a) const {
    return std::any_of(prefixes.begin(), prefixes.end(), [a](const Cidr& c) { return c.contains(a); });
  }
};

struct ReadSummary {
  std::uint64_t frames = 0;      // every record in the file
  std::uint64_t ipv4 = 0;        // decoded IPv4 packets
  std::uint64_t kept = 0;        // IPv4 packets passing the filter
  std::uint64_t filtered = 0;    // IPv4 packets failing the filter
  std::uint64_t skipped = 0;     // non-IPv4 or malformed frames
  std::uint64_t ipv6 = 0;        // subset of skipped
  std::uint64_t malformed = 0;   // subset of skipped
  bool truncated = false;
  std::int64_t origin_us = 0;    // absolute time of the first IPv4 packet
};

struct Trace {
  std::vector<PacketRecord> packets;  // kept packets, timestamp order, trace-relative time
  std::vector<PacketRecord> rejected; // IPv4 packets that failed the filter
  ReadSummary summary;
};

// Reads a classic pcap file. Timestamps are made relative to the first IPv4
// packet (before filtering) and records are stably sorted by time.
inline Trace read_trace(const std::string& path, const DirectionFilter& filter = {}) {
  pcap::Reader reader(path);
  Trace t;
  std::vector<PacketRecord> all;
  while (auto frame = reader.next()) {
    ++t.summary.frames;
    auto d = pcap::decode_frame(reader.link_type(), *frame);
    switch (d.kind) {
      case pcap::FrameKind::Ipv4:
        all.push_back(std::move(d.record));
        break;
      case pcap::FrameKind::Ipv6:
        ++t.summary.ipv6;
        ++t.summary.skipped;
        break;
      case pcap::FrameKind::Malformed:
        ++t.summary.malformed;
        ++t.summary.skipped;
        break;
      case pcap::FrameKind::NonIp:
        ++t.summary.skipped;
        break;
    }
  }
  t.summary.truncated = reader.truncated();
  t.summary.ipv4 = all.size();
  std::stable_sort(all.begin(), all.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.ts_us < b.ts_us; });
  if (!all.empty()) t.summary.origin_us = all.front().ts_us;
  for (auto& r : all) {
    r.ts_us -= t.summary.origin_us;
    if (filter.accepts(r)) {
      t.packets.push_back(std::move(r));
    } else {
      t.rejected.push_back(std::move(r));
    }
  }
  t.summary.kept = t.packets.size();
  t.summary.filtered = t.rejected.size();
  return t;
}

}  // namespace flowlens
