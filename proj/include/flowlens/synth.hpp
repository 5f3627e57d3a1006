#pragma once

// Synthetic trace generator with exact ground truth.
//
// A scenario plans per-block flows (sizes from a discrete bounded Pareto),
// assigns them to hosts with known initial TTLs and hop counts, gives each an
// application category, and lays the packets out on a microsecond grid. The
// resulting pcap realizes the plan exactly, so the analysis pipeline can be
// checked against it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "flowlens/app.hpp"
#include "flowlens/error.hpp"
#include "flowlens/flow_block.hpp"
#include "flowlens/hop.hpp"
#include "flowlens/packet.hpp"
#include "flowlens/pcap.hpp"

namespace flowlens::synth {

// mt19937_64 with hand-rolled mappings so output bytes do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) { return lo + below(hi - lo + 1); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 eng_;
};

// Discrete bounded Pareto on [2, cap]: N = ceil(X) with X bounded Pareto on
// [1, cap], so P(N > x) = (x^-a - cap^-a) / (1 - cap^-a) at every integer x.
inline std::uint64_t sample_flow_size(Rng& rng, double alpha, std::uint64_t cap) {
  const double h = std::pow(static_cast<double>(cap), -alpha);
  const double u = rng.uniform();
  const double x = std::pow(1.0 - u * (1.0 - h), -1.0 / alpha);
  const auto n = static_cast<std::uint64_t>(std::ceil(x));
  return std::clamp<std::uint64_t>(n, 2, cap);
}

inline std::vector<std::uint64_t> sample_flow_sizes(double alpha, std::uint64_t cap, std::size_t count,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint64_t> out(count);
  for (auto& v : out) v = sample_flow_size(rng, alpha, cap);
  return out;
}

// Integer counts proportional to `fractions` summing to `total`
// (largest remainder, ties toward the lower index).
inline std::array<std::uint64_t, 4> apportion(const std::array<double, 4>& fractions, std::uint64_t total) {
  double sum = 0;
  for (double f : fractions) sum += std::max(f, 0.0);
  std::array<std::uint64_t, 4> out{};
  if (total == 0 || sum <= 0) return out;
  std::array<double, 4> rem{};
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = std::max(fractions[i], 0.0) / sum * static_cast<double>(total);
    out[i] = static_cast<std::uint64_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(out[i]);
    assigned += out[i];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    ++out[best];
    rem[best] = -1;
    ++assigned;
  }
  return out;
}

struct HostPlan {
  enum class Role { Src, Dst };
  enum class Pool { Any, Greedy, Regular };

  Ipv4Addr ip;
  int initial_ttl = 64;
  int hops_to_monitor = 0;
  std::optional<std::string> os_fingerprint;  // label in the fingerprint DB
  Role role = Role::Src;
  Pool pool = Pool::Any;

  int observed_ttl() const { return initial_ttl - hops_to_monitor; }
};

struct PlannedFlow {
  std::int64_t block = 0;
  Ipv4Addr src;
  Ipv4Addr dst;
  AppCategory category = AppCategory::Http;
  std::uint64_t n_packets = 2;
};

struct ScenarioSpec {
  double duration = 1.0;  // seconds
  double tau = 0.1;
  std::uint64_t flows_per_block_min = 1;
  std::uint64_t flows_per_block_max = 4;
  double flow_size_alpha = 1.5;
  std::uint64_t flow_size_cap = 1000;
  std::uint64_t greedy_threshold = 20;
  std::uint16_t packet_bytes = 700;
  std::vector<HostPlan> hosts;
  std::array<double, 4> app_mix{1, 0, 0, 0};  // indexed by AppCategory
  std::optional<std::array<double, 4>> greedy_app_mix;
  bool bidirectional = true;
  std::uint64_t reverse_packets = 1;  // per forward flow, when bidirectional
  std::uint64_t seed = 1;
  std::int64_t min_spacing_us = 1;
  std::optional<Cidr> forward_prefix;
  pcap::LinkType link = pcap::LinkType::Ethernet;
  std::vector<PlannedFlow> flows;  // explicit plan; replaces random flows when non-empty

  std::int64_t tau_us() const { return std::llround(tau * 1e6); }
  std::int64_t n_blocks() const {
    const auto d = std::llround(duration * 1e6);
    return d <= 0 ? 0 : (d + tau_us() - 1) / tau_us();
  }

  const HostPlan* host(Ipv4Addr ip) const {
    for (const auto& h : hosts) {
      if (h.ip == ip) return &h;
    }
    return nullptr;
  }

  void validate() const;
  static ScenarioSpec parse(std::string_view text);
  static ScenarioSpec load(const std::string& path);
};

inline void check_mix(const std::array<double, 4>& mix, const char* what) {
  double s = 0;
  for (double f : mix) {
    if (f < 0 || f > 1) throw DomainError(std::string(what) + " fractions must be in [0,1]");
    s += f;
  }
  if (std::abs(s - 1.0) > 1e-9) throw DomainError(std::string(what) + " fractions must sum to 1");
}

inline void ScenarioSpec::validate() const {
  if (!(duration >= 0)) throw DomainError("duration must be >= 0");
  if (!(tau > 0) || tau_us() < 1) throw DomainError("tau must be positive");
  if (flows_per_block_min > flows_per_block_max) throw DomainError("flows_per_block min > max");
  if (!(flow_size_alpha > 0)) throw DomainError("flow_size_alpha must be positive");
  if (flow_size_cap < 2) throw DomainError("flow_size_cap must be >= 2");
  if (greedy_threshold < 2) throw DomainError("greedy_threshold must be >= 2");
  if (packet_bytes < 40) throw DomainError("packet_bytes must be >= 40");
  if (min_spacing_us < 1) throw DomainError("min_spacing_us must be >= 1");
  check_mix(app_mix, "app_mix");
  if (greedy_app_mix) check_mix(*greedy_app_mix, "greedy_app_mix");
  std::set<Ipv4Addr> seen;
  for (const auto& h : hosts) {
    if (!seen.insert(h.ip).second) throw DomainError("duplicate host " + h.ip.to_string());
    if (h.initial_ttl < 1 || h.initial_ttl > 255) throw DomainError("initial_ttl out of range for " + h.ip.to_string());
    if (h.hops_to_monitor < 0 || h.hops_to_monitor >= h.initial_ttl) {
      throw DomainError("hops_to_monitor must be in [0, initial_ttl) for " + h.ip.to_string());
    }
    if (forward_prefix) {
      const bool inside = forward_prefix->contains(h.ip);
      if ((h.role == HostPlan::Role::Src) != inside) {
        throw DomainError("host " + h.ip.to_string() + " is on the wrong side of forward_prefix");
      }
    }
  }
  for (const auto& f : flows) {
    const auto* s = host(f.src);
    const auto* d = host(f.dst);
    if (!s || !d) throw DomainError("explicit flow references an unknown host");
    if (s->role != HostPlan::Role::Src || d->role != HostPlan::Role::Dst) {
      throw DomainError("explicit flow must go from a src host to a dst host");
    }
    if (f.n_packets < 2) throw DomainError("explicit flow needs at least 2 packets");
    if (f.block < 0 || f.block >= n_blocks()) throw DomainError("explicit flow block outside the scenario duration");
  }
}

struct TruthFlow {
  std::int64_t block = 0;
  FlowKey key;
  std::uint64_t n_packets = 0;
  std::uint64_t n_bytes = 0;
  bool greedy = false;
  AppCategory category = AppCategory::Http;
  int src_hops = 0;
  int dst_hops = 0;
  int path_hops = 0;
  bool fingerprint_covered = false;  // both endpoints emitted a matchable SYN
};

struct TruthHost {
  Ipv4Addr ip;
  int initial_ttl = 0;
  int hops_to_monitor = 0;
  std::optional<std::string> os_fingerprint;
  bool src_role = true;
  bool emitted_syn = false;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  double tau = 0.1;
  std::int64_t n_blocks = 0;
  std::uint64_t greedy_threshold = 20;
  std::optional<Cidr> forward_prefix;
  std::vector<TruthFlow> flows;
  std::vector<std::uint64_t> flow_sizes;  // per-block forward flow packet counts, plan order
  std::vector<TruthHost> hosts;
  std::uint64_t total_packets = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t forward_packets = 0;
  std::uint64_t forward_bytes = 0;

  const TruthHost* host(Ipv4Addr ip) const {
    for (const auto& h : hosts) {
      if (h.ip == ip) return &h;
    }
    return nullptr;
  }
};

struct Scenario {
  std::vector<PacketRecord> packets;  // time-ordered, trace-relative
  GroundTruth truth;
};

namespace detail {

inline SynSignature syn_for(const FingerprintEntry& e, std::uint8_t ttl) {
  SynSignature sig;
  sig.window_size = e.window_size.value_or(8192);
  sig.observed_ttl = ttl;
  sig.df_flag = e.df_flag.value_or(true);
  sig.options_layout = e.options_layout.value_or(OptionLayout{tcpopt::kMss});
  if (std::find(sig.options_layout.begin(), sig.options_layout.end(), tcpopt::kMss) != sig.options_layout.end()) {
    sig.mss = e.mss.kind == MssMatcher::Kind::Exact ? e.mss.value : std::uint16_t{1460};
  }
  return sig;
}

inline std::uint16_t syn_ip_len(const SynSignature& sig) {
  std::size_t opt = 0;
  for (auto k : sig.options_layout) opt += tcpopt::wire_length(k);
  opt = (opt + 3) / 4 * 4;
  return static_cast<std::uint16_t>(40 + opt);
}

inline constexpr std::array<std::uint16_t, 8> kOtherTcpPorts{20, 21, 22, 25, 110, 119, 6346, 6699};
inline constexpr std::array<std::uint16_t, 6> kUdpPorts{53, 123, 161, 6970, 7070, 27015};
inline constexpr std::array<std::uint8_t, 8> kOtherProtocols{1, 47, 50, 51, 41, 4, 132, 89};

}  // namespace detail

// Plans and lays out a scenario. Throws DomainError for an infeasible spec
// before producing anything.
inline Scenario generate(const ScenarioSpec& spec, const FingerprintDb& db = default_fingerprint_db()) {
  spec.validate();
  Rng rng(spec.seed);
  const std::int64_t tau_us = spec.tau_us();
  const std::int64_t n_blocks = spec.n_blocks();

  // Fingerprint signatures must be matched back to the host's own initial TTL.
  std::map<Ipv4Addr, SynSignature> syn_of;
  for (const auto& h : spec.hosts) {
    if (!h.os_fingerprint) continue;
    const auto* e = db.find_label(*h.os_fingerprint);
    if (!e) throw DomainError("unknown fingerprint label '" + *h.os_fingerprint + "'");
    if (e->initial_ttl != h.initial_ttl) {
      throw DomainError("host " + h.ip.to_string() + ": initial_ttl differs from fingerprint " + e->os_label);
    }
    auto sig = detail::syn_for(*e, static_cast<std::uint8_t>(h.observed_ttl()));
    const auto* m = match_fingerprint(sig, db);
    if (!m || m->initial_ttl != h.initial_ttl) {
      throw DomainError("fingerprint '" + e->os_label + "' is shadowed by an earlier database entry");
    }
    syn_of.emplace(h.ip, sig);
  }

  // 1. Flow sizes per block.
  std::vector<PlannedFlow> plan = spec.flows;
  if (plan.empty()) {
    for (std::int64_t b = 0; b < n_blocks; ++b) {
      auto k = rng.between(spec.flows_per_block_min, spec.flows_per_block_max);
      if (b == 0 && k == 0 && spec.flows_per_block_max > 0) k = 1;
      for (std::uint64_t i = 0; i < k; ++i) {
        PlannedFlow f;
        f.block = b;
        f.n_packets = sample_flow_size(rng, spec.flow_size_alpha, spec.flow_size_cap);
        plan.push_back(f);
      }
    }
  }
  if (!plan.empty()) {
    auto first = std::min_element(plan.begin(), plan.end(),
                                  [](const PlannedFlow& a, const PlannedFlow& b) { return a.block < b.block; });
    if (first->block != 0) throw DomainError("the first planned flow must lie in block 0");
  }

  // 2. Categories by quota, then hosts round-robin within pools. Explicit
  // plans carry their own.
  if (spec.flows.empty()) {
    std::vector<std::size_t> greedy_idx, regular_idx;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      (plan[i].n_packets > spec.greedy_threshold ? greedy_idx : regular_idx).push_back(i);
    }
    auto assign = [&](const std::vector<std::size_t>& idx, const std::array<std::uint64_t, 4>& quota) {
      std::vector<AppCategory> cats;
      for (std::size_t c = 0; c < 4; ++c) cats.insert(cats.end(), quota[c], kAppCategories[c]);
      rng.shuffle(cats);
      for (std::size_t i = 0; i < idx.size(); ++i) plan[idx[i]].category = cats[i];
    };
    if (spec.greedy_app_mix) {
      const auto gq = apportion(*spec.greedy_app_mix, greedy_idx.size());
      const auto all = apportion(spec.app_mix, plan.size());
      std::array<double, 4> rest{};
      for (std::size_t c = 0; c < 4; ++c) {
        rest[c] = std::max(0.0, static_cast<double>(all[c]) - static_cast<double>(gq[c]));
      }
      assign(greedy_idx, gq);
      assign(regular_idx, apportion(rest, regular_idx.size()));
    } else {
      std::vector<std::size_t> every(plan.size());
      for (std::size_t i = 0; i < every.size(); ++i) every[i] = i;
      assign(every, apportion(spec.app_mix, plan.size()));
    }

    std::vector<const HostPlan*> greedy_src, regular_src, dsts;
    for (const auto& h : spec.hosts) {
      if (h.role == HostPlan::Role::Dst) {
        dsts.push_back(&h);
        continue;
      }
      if (h.pool != HostPlan::Pool::Regular) greedy_src.push_back(&h);
      if (h.pool != HostPlan::Pool::Greedy) regular_src.push_back(&h);
    }
    if ((!greedy_idx.empty() && greedy_src.empty()) || (!regular_idx.empty() && regular_src.empty()) ||
        (!plan.empty() && dsts.empty())) {
      throw DomainError("host plan lacks src/dst hosts for the planned flows");
    }
    std::size_t gi = 0, ri = 0, di = 0;
    for (auto& f : plan) {
      const bool greedy = f.n_packets > spec.greedy_threshold;
      f.src = greedy ? greedy_src[gi++ % greedy_src.size()]->ip : regular_src[ri++ % regular_src.size()]->ip;
      f.dst = dsts[di++ % dsts.size()]->ip;
    }
  }

  // 3. Ports and protocol, unique keys per block.
  struct Flow {
    PlannedFlow plan;
    FlowKey key;
    const HostPlan* src = nullptr;
    const HostPlan* dst = nullptr;
  };
  std::vector<Flow> flows;
  flows.reserve(plan.size());
  std::map<std::int64_t, std::unordered_set<FlowKey, FlowKeyHash>> used;
  std::size_t other_rr = 0;
  for (const auto& p : plan) {
    Flow f;
    f.plan = p;
    f.src = spec.host(p.src);
    f.dst = spec.host(p.dst);
    auto& keys = used[p.block];
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      FlowKey k{p.src, p.dst, 0, 0, kTcp};
      const auto ephemeral = static_cast<std::uint16_t>(rng.between(1024, 65535));
      switch (p.category) {
        case AppCategory::Http:
          k.src_port = 80;
          k.dst_port = ephemeral;
          break;
        case AppCategory::OtherTcp:
          k.src_port = detail::kOtherTcpPorts[rng.below(detail::kOtherTcpPorts.size())];
          k.dst_port = ephemeral;
          break;
        case AppCategory::Udp:
          k.protocol = kUdp;
          k.src_port = detail::kUdpPorts[rng.below(detail::kUdpPorts.size())];
          k.dst_port = ephemeral;
          break;
        case AppCategory::Other:
          k.protocol = IpProto{detail::kOtherProtocols[other_rr++ % detail::kOtherProtocols.size()]};
          break;
      }
      placed = keys.insert(k).second;
      if (placed) f.key = k;
    }
    if (!placed) throw DomainError("could not find a unique 5-tuple in block " + std::to_string(p.block));
    flows.push_back(f);
  }

  // 4. Timing: every packet of a block gets a distinct slot on the spacing grid.
  struct Pkt {
    std::size_t flow;
    bool reverse;
  };
  std::map<std::int64_t, std::vector<Pkt>> by_block;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    auto& v = by_block[flows[i].plan.block];
    v.insert(v.end(), flows[i].plan.n_packets, Pkt{i, false});
    if (spec.bidirectional) v.insert(v.end(), spec.reverse_packets, Pkt{i, true});
  }
  const auto slots = static_cast<std::uint64_t>(tau_us / spec.min_spacing_us);
  for (const auto& [b, pkts] : by_block) {
    if (pkts.size() > slots) {
      throw DomainError("block " + std::to_string(b) + " needs " + std::to_string(pkts.size()) +
                        " packets but only " + std::to_string(slots) + " fit at the minimum spacing");
    }
  }

  Scenario out;
  GroundTruth& gt = out.truth;
  gt.seed = spec.seed;
  gt.tau = spec.tau;
  gt.n_blocks = n_blocks;
  gt.greedy_threshold = spec.greedy_threshold;
  gt.forward_prefix = spec.forward_prefix;
  std::map<Ipv4Addr, bool> emitted_syn;
  std::vector<std::uint64_t> fwd_bytes(flows.size(), 0);

  for (auto& [b, pkts] : by_block) {
    rng.shuffle(pkts);
    // Floyd's sampling of distinct slots; block 0 always starts at t = 0.
    std::set<std::uint64_t> chosen;
    if (b == 0) chosen.insert(0);
    for (std::uint64_t j = slots - (pkts.size() - chosen.size()); chosen.size() < pkts.size(); ++j) {
      const auto t = rng.below(j + 1);
      if (!chosen.insert(t).second) chosen.insert(j);
    }
    std::map<std::pair<std::size_t, bool>, std::uint64_t> seq;
    auto slot = chosen.begin();
    for (const auto& pk : pkts) {
      const Flow& f = flows[pk.flow];
      const HostPlan* sender = pk.reverse ? f.dst : f.src;
      PacketRecord r;
      r.ts_us = b * tau_us + static_cast<std::int64_t>(*slot++) * spec.min_spacing_us;
      r.src_ip = sender->ip;
      r.dst_ip = pk.reverse ? f.src->ip : f.dst->ip;
      r.src_port = pk.reverse ? f.key.dst_port : f.key.src_port;
      r.dst_port = pk.reverse ? f.key.src_port : f.key.dst_port;
      r.protocol = f.key.protocol;
      r.ttl = static_cast<std::uint8_t>(sender->observed_ttl());
      r.ip_len = pk.reverse ? 40 : spec.packet_bytes;
      const bool first = seq[{pk.flow, pk.reverse}]++ == 0;
      if (first && r.protocol == kTcp) {
        if (auto it = syn_of.find(sender->ip); it != syn_of.end()) {
          r.syn_sig = it->second;
          r.ip_len = detail::syn_ip_len(it->second);
          emitted_syn[sender->ip] = true;
        }
      }
      if (!pk.reverse) fwd_bytes[pk.flow] += r.ip_len;
      out.packets.push_back(std::move(r));
    }
  }
  for (const auto& h : spec.hosts) {
    gt.hosts.push_back({h.ip, h.initial_ttl, h.hops_to_monitor, h.os_fingerprint, h.role == HostPlan::Role::Src,
                        emitted_syn.count(h.ip) > 0});
  }
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto& f = flows[i];
    TruthFlow t;
    t.block = f.plan.block;
    t.key = f.key;
    t.n_packets = f.plan.n_packets;
    t.n_bytes = fwd_bytes[i];
    t.greedy = f.plan.n_packets > spec.greedy_threshold;
    t.category = f.plan.category;
    t.src_hops = f.src->hops_to_monitor;
    t.dst_hops = f.dst->hops_to_monitor;
    t.path_hops = t.src_hops + t.dst_hops;
    t.fingerprint_covered = emitted_syn.count(f.src->ip) && spec.bidirectional && emitted_syn.count(f.dst->ip);
    gt.flows.push_back(t);
    gt.flow_sizes.push_back(f.plan.n_packets);
  }
  auto forward = [&](const PacketRecord& p) {
    return spec.forward_prefix ? spec.forward_prefix->contains(p.src_ip)
                               : spec.host(p.src_ip)->role == HostPlan::Role::Src;
  };
  // Truth flows in the order aggregate() reports them.
  std::map<std::pair<std::int64_t, FlowKey>, std::int64_t> first_ts;
  for (const auto& p : out.packets) {
    if (!forward(p)) continue;
    first_ts.try_emplace({p.ts_us / tau_us, FlowKey::of(p)}, p.ts_us);
  }
  std::stable_sort(gt.flows.begin(), gt.flows.end(), [&](const TruthFlow& a, const TruthFlow& b) {
    if (a.block != b.block) return a.block < b.block;
    return first_ts[{a.block, a.key}] < first_ts[{b.block, b.key}];
  });
  for (const auto& p : out.packets) {
    ++gt.total_packets;
    gt.total_bytes += p.ip_len;
    if (forward(p)) {
      ++gt.forward_packets;
      gt.forward_bytes += p.ip_len;
    }
  }
  return out;
}

inline void write_pcap(std::ostream& os, const Scenario& s, pcap::LinkType link = pcap::LinkType::Ethernet) {
  pcap::Writer w(os, link);
  for (const auto& p : s.packets) w.write(p);
}

}  // namespace flowlens::synth
