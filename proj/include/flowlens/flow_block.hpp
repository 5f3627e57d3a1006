#pragma once

// Per-time-block flows: the trace is cut into blocks of length tau and, within
// each block, packets sharing a 5-tuple form one flow instance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/packet.hpp"

namespace flowlens {

// Unidirectional 5-tuple; no direction canonicalization.
struct FlowKey {
  Ipv4Addr src_ip;
  Ipv4Addr dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  IpProto protocol;

  static FlowKey of(const PacketRecord& r) { return {r.src_ip, r.dst_ip, r.src_port, r.dst_port, r.protocol}; }

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.src_ip.value()} << 32) | k.dst_ip.value();
    h ^= (std::uint64_t{k.src_port} << 24 | std::uint64_t{k.dst_port} << 8 | k.protocol.number) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};

struct BlockingConfig {
  double tau = 0.1;  // seconds
  std::uint64_t min_packets = 2;
  std::uint64_t greedy_threshold = 20;

  // Block length in whole microseconds (timestamp resolution).
  std::int64_t tau_us() const { return std::llround(tau * 1e6); }

  void validate() const {
    if (!(tau > 0) || tau_us() < 1) throw DomainError("tau must be positive (>= 1 us)");
    if (min_packets < 2) throw DomainError("min_packets must be >= 2");
    if (greedy_threshold < min_packets) throw DomainError("greedy_threshold must be >= min_packets");
  }
};

struct BlockFlowRecord {
  std::int64_t block_index = 0;
  FlowKey key;
  std::uint64_t n_packets = 0;
  std::uint64_t n_bytes = 0;
  bool is_greedy = false;
  std::uint8_t rep_ttl = 0;

  friend bool operator==(const BlockFlowRecord&, const BlockFlowRecord&) = default;
};

// Modal value of a 256-bin histogram, ties toward the larger value.
inline std::uint8_t modal_ttl(const std::array<std::uint32_t, 256>& counts) {
  int best = 0;
  for (int t = 1; t < 256; ++t) {
    if (counts[t] >= counts[best]) best = t;
  }
  return static_cast<std::uint8_t>(best);
}

// Groups packets by (block, key). Output is ordered by block, then by the
// first packet of each flow within the block. Non-first fragments are skipped.
inline std::vector<BlockFlowRecord> aggregate(std::span<const PacketRecord> packets, const BlockingConfig& cfg) {
  cfg.validate();
  const std::int64_t tau_us = cfg.tau_us();

  struct Cell {
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
    std::array<std::uint32_t, 256> ttl{};
  };
  std::vector<BlockFlowRecord> out;
  std::unordered_map<FlowKey, std::size_t, FlowKeyHash> index;
  std::vector<std::pair<FlowKey, Cell>> cells;

  auto flush = [&](std::int64_t block) {
    for (auto& [key, cell] : cells) {
      if (cell.packets < cfg.min_packets) continue;
      out.push_back({block, key, cell.packets, cell.bytes, cell.packets > cfg.greedy_threshold, modal_ttl(cell.ttl)});
    }
    cells.clear();
    index.clear();
  };

  std::int64_t current = -1;
  for (const auto& p : packets) {
    if (p.non_first_fragment) continue;
    const std::int64_t block = p.ts_us / tau_us;
    if (block < current) throw DomainError("aggregate: packets are not in timestamp order");
    if (block != current) {
      flush(current);
      current = block;
    }
    const FlowKey key = FlowKey::of(p);
    auto [it, inserted] = index.try_emplace(key, cells.size());
    if (inserted) cells.emplace_back(key, Cell{});
    Cell& c = cells[it->second].second;
    ++c.packets;
    c.bytes += p.ip_len;
    ++c.ttl[p.ttl];
  }
  flush(current);
  return out;
}

inline std::vector<BlockFlowRecord> greedy_subset(std::span<const BlockFlowRecord> records) {
  std::vector<BlockFlowRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const BlockFlowRecord& r) { return r.is_greedy; });
  return out;
}

// Rate a flow sitting exactly at the greedy threshold would need, in bit/s.
inline double greedy_throughput_equivalent(const BlockingConfig& cfg, double avg_packet_bytes) {
  if (!(avg_packet_bytes > 0)) throw DomainError("average packet size must be positive");
  return static_cast<double>(cfg.greedy_threshold) * avg_packet_bytes * 8.0 / cfg.tau;
}

inline void write_flows_csv(std::ostream& os, std::span<const BlockFlowRecord> records) {
  os << "block_index,src_ip,dst_ip,src_port,dst_port,proto,n_packets,n_bytes,is_greedy,rep_ttl\n";
  for (const auto& r : records) {
    os << r.block_index << ',' << r.key.src_ip.to_string() << ',' << r.key.dst_ip.to_string() << ','
       << r.key.src_port << ',' << r.key.dst_port << ',' << unsigned{r.key.protocol.number} << ',' << r.n_packets
       << ',' << r.n_bytes << ',' << (r.is_greedy ? 1 : 0) << ',' << unsigned{r.rep_ttl} << '\n';
  }
}

}  // namespace flowlens
