#pragma once

// Hop-count estimation from observed TTLs.
//
// A host's initial TTL is taken from a passive OS fingerprint of its SYNs when
// one matches, otherwise from the nearest standard initial value at or above
// the observed TTL. Hops to the monitor are initial minus observed TTL. A
// flow's path length is the sum of its source's and its destination's hops to
// the monitor; the destination's value comes from traffic it sends in the
// reverse direction, which assumes both directions take the same route.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/flow_block.hpp"
#include "flowlens/format.hpp"
#include "flowlens/log.hpp"
#include "flowlens/packet.hpp"

namespace flowlens {

inline constexpr std::array<int, 4> kStandardInitialTtls{32, 64, 128, 255};
inline constexpr int kMaxPlausibleHops = 64;

inline bool is_standard_initial_ttl(int ttl) {
  return std::find(kStandardInitialTtls.begin(), kStandardInitialTtls.end(), ttl) != kStandardInitialTtls.end();
}

// Smallest standard initial TTL that is >= the observed value.
inline int infer_initial_ttl(int observed_ttl) {
  if (observed_ttl < 1 || observed_ttl > 255) {
    throw DomainError("observed TTL " + std::to_string(observed_ttl) + " cannot come from a live packet");
  }
  for (int t : kStandardInitialTtls) {
    if (t >= observed_ttl) return t;
  }
  return 255;
}

// Link MTUs accepted by the "mtu" MSS matcher (MSS = MTU - 40).
inline constexpr std::array<int, 13> kCommonMtus{576, 1006, 1280, 1400, 1450, 1454, 1480, 1492, 1500, 4352, 4470, 9000, 16384};

struct MssMatcher {
  enum class Kind { Any, Exact, MtuDerived };
  Kind kind = Kind::Any;
  std::uint16_t value = 0;

  bool matches(const std::optional<std::uint16_t>& mss) const {
    switch (kind) {
      case Kind::Any: return true;
      case Kind::Exact: return mss && *mss == value;
      case Kind::MtuDerived:
        return mss && std::find(kCommonMtus.begin(), kCommonMtus.end(), int{*mss} + 40) != kCommonMtus.end();
    }
    return false;
  }

  friend bool operator==(const MssMatcher&, const MssMatcher&) = default;
};

struct FingerprintEntry {
  std::optional<std::uint16_t> window_size;  // nullopt = wildcard
  int initial_ttl = 64;
  std::optional<bool> df_flag;
  std::optional<OptionLayout> options_layout;
  MssMatcher mss;
  std::string os_label;

  bool fields_match(const SynSignature& sig) const {
    if (window_size && *window_size != sig.window_size) return false;
    if (df_flag && *df_flag != sig.df_flag) return false;
    if (options_layout && *options_layout != sig.options_layout) return false;
    return mss.matches(sig.mss);
  }

  bool has_matcher() const {
    return window_size || df_flag || options_layout || mss.kind != MssMatcher::Kind::Any;
  }

  std::string to_line() const {
    std::string s = window_size ? std::to_string(*window_size) : "*";
    s += '|' + std::to_string(initial_ttl) + '|';
    s += df_flag ? (*df_flag ? "1" : "0") : "*";
    s += '|';
    s += options_layout ? (options_layout->empty() ? std::string("-") : layout_to_string(*options_layout)) : "*";
    s += '|';
    switch (mss.kind) {
      case MssMatcher::Kind::Any: s += '*'; break;
      case MssMatcher::Kind::Exact: s += std::to_string(mss.value); break;
      case MssMatcher::Kind::MtuDerived: s += "mtu"; break;
    }
    return s + '|' + os_label;
  }

  friend bool operator==(const FingerprintEntry&, const FingerprintEntry&) = default;
};

namespace detail {
inline unsigned parse_uint(std::string_view s, unsigned max, std::string_view what, std::size_t line) {
  unsigned v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || v > max) {
    throw ParseError("line " + std::to_string(line) + ": bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}
}  // namespace detail

// Ordered signature table; the first matching entry wins.
//
// Text format, one entry per line:
//   window|initial_ttl|df|options|mss|os_label
// `*` is a wildcard, `#` starts a comment. options is a comma-separated list
// of option names in wire order (MSS,SACK,TS,NOP,WS,EOL,SACKB,K<n>), `-` for
// a SYN without options. mss is a number, `*`, or `mtu`.
struct FingerprintDb {
  std::vector<FingerprintEntry> entries;

  static FingerprintDb parse(std::string_view text) {
    FingerprintDb db;
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
      ++line_no;
      auto hash = raw.find('#');
      auto line = trim(raw.substr(0, hash));
      if (line.empty()) continue;
      auto f = split(line, '|');
      if (f.size() != 6) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 6 '|'-separated fields, got " +
                         std::to_string(f.size()));
      }
      for (auto& x : f) x = trim(x);
      FingerprintEntry e;
      if (f[0] != "*") e.window_size = static_cast<std::uint16_t>(detail::parse_uint(f[0], 65535, "window", line_no));
      e.initial_ttl = static_cast<int>(detail::parse_uint(f[1], 255, "initial_ttl", line_no));
      if (!is_standard_initial_ttl(e.initial_ttl)) {
        throw ParseError("line " + std::to_string(line_no) + ": initial_ttl must be one of 32, 64, 128, 255");
      }
      if (f[2] == "1") e.df_flag = true;
      else if (f[2] == "0") e.df_flag = false;
      else if (f[2] != "*") throw ParseError("line " + std::to_string(line_no) + ": df must be 0, 1 or *");
      if (f[3] == "-") {
        e.options_layout = OptionLayout{};
      } else if (f[3] != "*") {
        try {
          e.options_layout = parse_layout(f[3]);
        } catch (const ParseError& err) {
          throw ParseError("line " + std::to_string(line_no) + ": " + err.what());
        }
      }
      if (f[4] == "mtu") {
        e.mss.kind = MssMatcher::Kind::MtuDerived;
      } else if (f[4] != "*") {
        e.mss.kind = MssMatcher::Kind::Exact;
        e.mss.value = static_cast<std::uint16_t>(detail::parse_uint(f[4], 65535, "mss", line_no));
      }
      e.os_label = std::string(f[5]);
      if (e.os_label.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty os_label");
      if (!e.has_matcher()) {
        throw ParseError("line " + std::to_string(line_no) + ": entry has no non-wildcard matcher");
      }
      db.entries.push_back(std::move(e));
    }
    if (db.entries.empty()) throw ParseError("fingerprint database has no entries");
    return db;
  }

  static FingerprintDb load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fingerprint database '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  const FingerprintEntry* find_label(std::string_view label) const {
    for (const auto& e : entries) {
      if (e.os_label == label) return &e;
    }
    return nullptr;
  }
};

// Approximate SYN characteristics of common stacks around 2001, compiled for
// this project. Also shipped as data/fingerprints.db.
inline constexpr std::string_view kDefaultFingerprintDb = R"(# window|initial_ttl|df|options|mss|os_label
5840|64|1|MSS,SACK,TS,NOP,WS|mtu|Linux-2.4
32120|64|1|MSS,SACK,TS,NOP,WS|mtu|Linux-2.2
512|64|0|MSS|*|Linux-2.0
16384|64|1|MSS,NOP,WS,NOP,NOP,TS|mtu|FreeBSD-4
57344|64|1|MSS,NOP,WS,NOP,NOP,TS|mtu|FreeBSD-4.4
16384|64|0|MSS,NOP,NOP,SACK,NOP,WS,NOP,NOP,TS|mtu|OpenBSD-2.9
32768|64|1|MSS,NOP,WS,NOP,NOP,TS|mtu|MacOSX-10.1
16384|128|1|MSS,NOP,NOP,SACK|mtu|Windows-2000
64240|128|1|MSS,NOP,NOP,SACK|mtu|Windows-XP
8192|128|1|MSS,NOP,NOP,SACK|mtu|Windows-98
8192|128|1|MSS|mtu|Windows-95
64512|128|1|MSS,NOP,NOP,SACK|mtu|Windows-NT4
24820|255|1|NOP,NOP,TS,MSS,NOP,WS,NOP,NOP,SACK|*|Solaris-8
8760|255|1|MSS|*|Solaris-2.6
32768|255|0|MSS|*|MacOS-9
4128|255|0|MSS|*|Cisco-IOS
61440|64|0|MSS,NOP,WS|*|IRIX-6.5
32768|64|0|MSS,NOP,WS|*|HP-UX-11
16384|64|0|MSS|*|AIX-4.3
)";

inline FingerprintDb default_fingerprint_db() { return FingerprintDb::parse(kDefaultFingerprintDb); }

// First entry whose non-wildcard fields equal the signature and whose initial
// TTL could have produced the observed TTL.
inline const FingerprintEntry* match_fingerprint(const SynSignature& sig, const FingerprintDb& db) {
  for (const auto& e : db.entries) {
    if (e.initial_ttl >= sig.observed_ttl && e.fields_match(sig)) return &e;
  }
  return nullptr;
}

enum class TtlMethod { FingerprintMatch, NearestStandardTtl };

inline const char* to_string(TtlMethod m) {
  return m == TtlMethod::FingerprintMatch ? "fingerprint" : "nearest_standard";
}

struct HostTtlEstimate {
  Ipv4Addr ip;
  int initial_ttl = 0;
  int observed_ttl = 0;  // modal TTL of the host's packets
  int hops_to_monitor = 0;
  TtlMethod method = TtlMethod::NearestStandardTtl;
  std::optional<std::string> os_label;
  bool conflicting = false;  // packets disagreed on the hop count; modal kept
};

struct HostEstimates {
  std::map<Ipv4Addr, HostTtlEstimate> hosts;
  std::uint64_t hosts_seen = 0;
  std::uint64_t by_fingerprint = 0;
  std::uint64_t by_fallback = 0;
  std::uint64_t rejected = 0;  // implausible hop count (< 0 or > 64)
  std::uint64_t conflicting = 0;

  const HostTtlEstimate* find(Ipv4Addr ip) const {
    auto it = hosts.find(ip);
    return it == hosts.end() ? nullptr : &it->second;
  }
  double fingerprint_fraction() const { return frac(by_fingerprint); }
  double fallback_fraction() const { return frac(by_fallback); }

 private:
  double frac(std::uint64_t k) const {
    return hosts_seen ? static_cast<double>(k) / static_cast<double>(hosts_seen) : 0.0;
  }
};

// One estimate per source IP seen in `packets`.
inline HostEstimates estimate_hosts(std::span<const PacketRecord> packets, const FingerprintDb& db) {
  struct Acc {
    std::array<std::uint32_t, 256> ttl{};
    std::vector<std::pair<const FingerprintEntry*, std::uint32_t>> matches;  // first-seen order
  };
  std::unordered_map<Ipv4Addr, Acc> acc;
  for (const auto& p : packets) {
    Acc& a = acc[p.src_ip];
    ++a.ttl[p.ttl];
    if (!p.syn_sig) continue;
    if (const auto* e = match_fingerprint(*p.syn_sig, db)) {
      auto it = std::find_if(a.matches.begin(), a.matches.end(), [e](const auto& m) { return m.first == e; });
      if (it == a.matches.end()) a.matches.emplace_back(e, 1);
      else ++it->second;
    }
  }

  HostEstimates out;
  out.hosts_seen = acc.size();
  for (const auto& [ip, a] : acc) {
    HostTtlEstimate h;
    h.ip = ip;
    h.observed_ttl = modal_ttl(a.ttl);
    if (!a.matches.empty()) {
      const auto* best = &a.matches.front();
      for (const auto& m : a.matches) {
        if (m.second > best->second) best = &m;
      }
      h.initial_ttl = best->first->initial_ttl;
      h.os_label = best->first->os_label;
      h.method = TtlMethod::FingerprintMatch;
    } else {
      if (h.observed_ttl == 0) {
        ++out.rejected;
        continue;
      }
      h.initial_ttl = infer_initial_ttl(h.observed_ttl);
      h.method = TtlMethod::NearestStandardTtl;
    }
    h.hops_to_monitor = h.initial_ttl - h.observed_ttl;
    if (h.hops_to_monitor < 0 || h.hops_to_monitor > kMaxPlausibleHops) {
      ++out.rejected;
      continue;
    }
    for (int t = 0; t < 256; ++t) {
      if (!a.ttl[t] || t == h.observed_ttl) continue;
      const int initial = h.method == TtlMethod::FingerprintMatch ? h.initial_ttl : (t ? infer_initial_ttl(t) : 0);
      if (initial - t != h.hops_to_monitor) {
        h.conflicting = true;
        break;
      }
    }
    if (h.conflicting) ++out.conflicting;
    (h.method == TtlMethod::FingerprintMatch ? out.by_fingerprint : out.by_fallback)++;
    out.hosts.emplace(ip, std::move(h));
  }
  if (out.conflicting) {
    log::warn(std::to_string(out.conflicting) + " host(s) showed conflicting hop counts; modal value kept");
  }
  return out;
}

struct HopEstimate {
  FlowKey key;
  int src_hops = 0;
  int dst_hops = 0;
  int path_hops = 0;
};

// Path length between a flow's endpoints: the source's hops from forward
// traffic plus the destination's hops from reverse traffic.
inline std::optional<HopEstimate> path_hops(const FlowKey& flow, const HostEstimates& fwd, const HostEstimates& rev) {
  const auto* s = fwd.find(flow.src_ip);
  const auto* d = rev.find(flow.dst_ip);
  if (!s || !d) return std::nullopt;
  return HopEstimate{flow, s->hops_to_monitor, d->hops_to_monitor, s->hops_to_monitor + d->hops_to_monitor};
}

using PathEstimates = std::unordered_map<FlowKey, HopEstimate, FlowKeyHash>;

inline PathEstimates estimate_paths(std::span<const BlockFlowRecord> records, const HostEstimates& fwd,
                                    const HostEstimates& rev) {
  PathEstimates out;
  for (const auto& r : records) {
    if (out.count(r.key)) continue;
    if (auto h = path_hops(r.key, fwd, rev)) out.emplace(r.key, *h);
  }
  return out;
}

struct HopHistogram {
  std::map<int, std::uint64_t> counts;
  std::uint64_t total = 0;
  std::optional<double> mean;
};

// One entry per block flow record with a path estimate.
inline HopHistogram hop_histogram(std::span<const BlockFlowRecord> records, const PathEstimates& estimates,
                                  bool greedy_only) {
  HopHistogram h;
  std::uint64_t weighted = 0;
  for (const auto& r : records) {
    if (greedy_only && !r.is_greedy) continue;
    auto it = estimates.find(r.key);
    if (it == estimates.end()) continue;
    ++h.counts[it->second.path_hops];
    ++h.total;
    weighted += static_cast<std::uint64_t>(it->second.path_hops);
  }
  if (h.total) {
    h.mean = static_cast<double>(weighted) / static_cast<double>(h.total);
  } else {
    log::warn(std::string("no estimable ") + (greedy_only ? "greedy " : "") + "flows for the hop histogram");
  }
  return h;
}

inline void write_histogram_csv(std::ostream& os, const HopHistogram& h) {
  os << "hops,count\n";
  for (const auto& [hops, n] : h.counts) os << hops << ',' << n << '\n';
}

}  // namespace flowlens
