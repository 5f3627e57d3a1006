#pragma once

// Classic libpcap file reading and writing, plus IPv4 frame decode/encode.
// Handles both byte orders, microsecond and nanosecond magics, and the
// Ethernet, raw-IP, Linux-SLL and BSD-loopback link types.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/log.hpp"
#include "flowlens/packet.hpp"

namespace flowlens::pcap {

inline constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicNano = 0xa1b23c4d;
inline constexpr std::uint32_t kMagicPcapng = 0x0a0d0d0a;

enum class LinkType : std::uint32_t {
  Null = 0,
  Ethernet = 1,
  RawBsd = 12,
  RawOpenBsd = 14,
  Raw = 101,
  LinuxSll = 113,
  Ipv4 = 228,
};

inline std::uint16_t load_be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
inline std::uint32_t load_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}
inline void store_be16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}
inline void store_be32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

struct RawFrame {
  std::int64_t ts_us = 0;  // absolute capture time
  std::uint32_t orig_len = 0;
  std::vector<std::uint8_t> data;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open capture '" + path + "'");
    std::array<std::uint8_t, 24> hdr{};
    in_.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
    if (in_.gcount() != static_cast<std::streamsize>(hdr.size())) {
      throw IoError("'" + path + "' is too short to be a pcap file");
    }
    std::uint32_t magic;
    std::memcpy(&magic, hdr.data(), 4);
    if (magic == kMagicPcapng) {
      throw IoError("'" + path + "' is pcapng; convert it to classic pcap first (e.g. editcap -F pcap)");
    }
    if (magic == kMagicMicro || magic == kMagicNano) {
      swapped_ = false;
    } else if (byteswap32(magic) == kMagicMicro || byteswap32(magic) == kMagicNano) {
      swapped_ = true;
      magic = byteswap32(magic);
    } else {
      throw IoError("'" + path + "' is not a pcap file (bad magic)");
    }
    nanos_ = magic == kMagicNano;
    link_ = static_cast<LinkType>(field32(hdr.data() + 20));
    switch (link_) {
      case LinkType::Null:
      case LinkType::Ethernet:
      case LinkType::RawBsd:
      case LinkType::RawOpenBsd:
      case LinkType::Raw:
      case LinkType::LinuxSll:
      case LinkType::Ipv4:
        break;
      default:
        throw IoError("'" + path + "' uses unsupported link type " +
                      std::to_string(static_cast<std::uint32_t>(link_)));
    }
  }

  LinkType link_type() const { return link_; }
  bool swapped() const { return swapped_; }
  bool truncated() const { return truncated_; }

  // Returns the next frame, or nullopt at end of file. A partial trailing
  // record ends the stream with a warning.
  std::optional<RawFrame> next() {
    std::array<std::uint8_t, 16> rh{};
    in_.read(reinterpret_cast<char*>(rh.data()), rh.size());
    auto got = in_.gcount();
    if (got == 0) return std::nullopt;
    if (got != static_cast<std::streamsize>(rh.size())) return end_truncated();
    RawFrame f;
    const std::int64_t sec = field32(rh.data());
    const std::int64_t frac = field32(rh.data() + 4);
    f.ts_us = sec * 1'000'000 + (nanos_ ? frac / 1000 : frac);
    const std::uint32_t caplen = field32(rh.data() + 8);
    f.orig_len = field32(rh.data() + 12);
    if (caplen > kMaxCaplen) return end_truncated();
    f.data.resize(caplen);
    in_.read(reinterpret_cast<char*>(f.data.data()), caplen);
    if (in_.gcount() != static_cast<std::streamsize>(caplen)) return end_truncated();
    return f;
  }

 private:
  static constexpr std::uint32_t kMaxCaplen = 262144;

  std::uint32_t field32(const std::uint8_t* p) const {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return swapped_ ? byteswap32(v) : v;
  }

  std::optional<RawFrame> end_truncated() {
    truncated_ = true;
    log::warn("truncated final record in '" + path_ + "'; stopping");
    return std::nullopt;
  }

  std::string path_;
  std::ifstream in_;
  bool swapped_ = false;
  bool nanos_ = false;
  bool truncated_ = false;
  LinkType link_ = LinkType::Ethernet;
};

// Raw TCP header fields needed to derive a SYN signature.
struct TcpFields {
  std::uint8_t flags = 0;
  std::uint16_t window = 0;
  std::span<const std::uint8_t> options;
  std::uint8_t ttl = 0;
  bool df = false;
};

inline constexpr std::uint8_t kTcpSyn = 0x02;
inline constexpr std::uint8_t kTcpAck = 0x10;

// Signature of a connection-opening SYN; none for SYN+ACK or non-SYN segments.
inline std::optional<SynSignature> extract_syn_signature(const TcpFields& tcp) {
  if (!(tcp.flags & kTcpSyn) || (tcp.flags & kTcpAck)) return std::nullopt;
  SynSignature sig;
  sig.window_size = tcp.window;
  sig.observed_ttl = tcp.ttl;
  sig.df_flag = tcp.df;
  auto opts = tcp.options;
  std::size_t i = 0;
  while (i < opts.size()) {
    const std::uint8_t kind = opts[i];
    if (kind == tcpopt::kEol) {
      sig.options_layout.push_back(kind);
      break;
    }
    if (kind == tcpopt::kNop) {
      sig.options_layout.push_back(kind);
      ++i;
      continue;
    }
    if (i + 1 >= opts.size() || opts[i + 1] < 2 || i + opts[i + 1] > opts.size()) {
      sig.options_malformed = true;
      break;
    }
    const std::uint8_t len = opts[i + 1];
    if (kind == tcpopt::kMss) {
      if (len != 4) {
        sig.options_malformed = true;
        break;
      }
      sig.mss = load_be16(opts.data() + i + 2);
    }
    sig.options_layout.push_back(kind);
    i += len;
  }
  return sig;
}

enum class FrameKind { Ipv4, Ipv6, NonIp, Malformed };

struct Decoded {
  FrameKind kind = FrameKind::NonIp;
  PacketRecord record;  // valid when kind == Ipv4; ts_us is absolute
};

inline Decoded decode_ipv4(std::span<const std::uint8_t> ip, std::int64_t ts_us) {
  Decoded d;
  if (ip.empty()) return d;
  const int version = ip[0] >> 4;
  if (version == 6) {
    d.kind = FrameKind::Ipv6;
    return d;
  }
  if (version != 4) return d;
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
  if (ihl < 20 || ip.size() < ihl) {
    d.kind = FrameKind::Malformed;
    return d;
  }
  PacketRecord& r = d.record;
  r.ts_us = ts_us;
  r.ip_len = load_be16(ip.data() + 2);
  if (r.ip_len < 20) {
    d.kind = FrameKind::Malformed;
    return d;
  }
  const std::uint16_t frag = load_be16(ip.data() + 6);
  const bool df = frag & 0x4000;
  r.non_first_fragment = (frag & 0x1fff) != 0;
  r.ttl = ip[8];
  r.protocol = IpProto{ip[9]};
  r.src_ip = Ipv4Addr(load_be32(ip.data() + 12));
  r.dst_ip = Ipv4Addr(load_be32(ip.data() + 16));
  d.kind = FrameKind::Ipv4;
  if (r.non_first_fragment) return d;

  auto l4 = ip.subspan(ihl);
  if (r.protocol.has_ports() && l4.size() >= 4) {
    r.src_port = load_be16(l4.data());
    r.dst_port = load_be16(l4.data() + 2);
  }
  if (r.protocol == kTcp && l4.size() >= 20) {
    const std::size_t doff = static_cast<std::size_t>(l4[12] >> 4) * 4;
    TcpFields tcp;
    tcp.flags = l4[13];
    tcp.window = load_be16(l4.data() + 14);
    tcp.ttl = r.ttl;
    tcp.df = df;
    bool clipped = false;
    if (doff > 20) {
      const std::size_t avail = std::min(doff, l4.size());
      tcp.options = l4.subspan(20, avail - 20);
      clipped = avail < doff;
    }
    r.syn_sig = extract_syn_signature(tcp);
    if (r.syn_sig && clipped && !r.syn_sig->options_malformed) r.syn_sig->options_malformed = true;
  }
  return d;
}

inline Decoded decode_frame(LinkType link, const RawFrame& f) {
  std::span<const std::uint8_t> b(f.data);
  auto ipv4_or_other = [&](std::uint16_t ethertype, std::size_t off) {
    if (ethertype == 0x0800) return decode_ipv4(b.subspan(std::min(off, b.size())), f.ts_us);
    Decoded d;
    d.kind = ethertype == 0x86dd ? FrameKind::Ipv6 : FrameKind::NonIp;
    return d;
  };
  switch (link) {
    case LinkType::Ethernet: {
      if (b.size() < 14) return Decoded{FrameKind::Malformed, {}};
      std::size_t off = 12;
      std::uint16_t et = load_be16(b.data() + off);
      while ((et == 0x8100 || et == 0x88a8) && b.size() >= off + 6) {
        off += 4;
        et = load_be16(b.data() + off);
      }
      return ipv4_or_other(et, off + 2);
    }
    case LinkType::LinuxSll:
      if (b.size() < 16) return Decoded{FrameKind::Malformed, {}};
      return ipv4_or_other(load_be16(b.data() + 14), 16);
    case LinkType::Null: {
      if (b.size() < 4) return Decoded{FrameKind::Malformed, {}};
      std::uint32_t family;
      std::memcpy(&family, b.data(), 4);
      if (family == 2 || byteswap32(family) == 2) return decode_ipv4(b.subspan(4), f.ts_us);
      Decoded d;
      d.kind = FrameKind::NonIp;
      return d;
    }
    default:
      return decode_ipv4(b, f.ts_us);
  }
}

// Builds the IPv4 datagram headers for a record. Payload bytes beyond the
// headers are not materialized: the capture stores headers only and the IP
// total length carries the real size.
inline std::vector<std::uint8_t> encode_ipv4(const PacketRecord& r, std::uint16_t ip_id = 0) {
  std::vector<std::uint8_t> l4;
  if (!r.non_first_fragment) {
    if (r.protocol == kTcp) {
      OptionLayout layout;
      std::uint16_t window = 65535;
      std::uint8_t flags = kTcpAck;
      std::optional<std::uint16_t> mss;
      if (r.syn_sig) {
        layout = r.syn_sig->options_layout;
        window = r.syn_sig->window_size;
        flags = kTcpSyn;
        mss = r.syn_sig->mss;
      }
      std::vector<std::uint8_t> opts;
      for (auto kind : layout) {
        switch (kind) {
          case tcpopt::kEol:
          case tcpopt::kNop:
            opts.push_back(kind);
            break;
          case tcpopt::kMss:
            opts.insert(opts.end(), {kind, 4, static_cast<std::uint8_t>(mss.value_or(1460) >> 8),
                                     static_cast<std::uint8_t>(mss.value_or(1460))});
            break;
          case tcpopt::kWindowScale:
            opts.insert(opts.end(), {kind, 3, 0});
            break;
          case tcpopt::kTimestamp:
            opts.insert(opts.end(), {kind, 10, 0, 0, 0, 1, 0, 0, 0, 0});
            break;
          default:
            opts.insert(opts.end(), {kind, 2});
            break;
        }
      }
      while (opts.size() % 4) opts.push_back(tcpopt::kEol);
      l4.assign(20 + opts.size(), 0);
      store_be16(l4.data(), r.src_port);
      store_be16(l4.data() + 2, r.dst_port);
      store_be32(l4.data() + 4, 1);
      l4[12] = static_cast<std::uint8_t>(((20 + opts.size()) / 4) << 4);
      l4[13] = flags;
      store_be16(l4.data() + 14, window);
      std::copy(opts.begin(), opts.end(), l4.begin() + 20);
    } else if (r.protocol == kUdp) {
      l4.assign(8, 0);
      store_be16(l4.data(), r.src_port);
      store_be16(l4.data() + 2, r.dst_port);
      store_be16(l4.data() + 4, static_cast<std::uint16_t>(r.ip_len >= 28 ? r.ip_len - 20 : 8));
    } else if (r.protocol == kIcmp) {
      l4.assign(8, 0);
      l4[0] = 8;  // echo request
    }
  }
  std::vector<std::uint8_t> out(20 + l4.size(), 0);
  out[0] = 0x45;
  store_be16(out.data() + 2, r.ip_len);
  store_be16(out.data() + 4, ip_id);
  std::uint16_t frag = 0;
  const bool df = r.syn_sig ? r.syn_sig->df_flag : !r.non_first_fragment;
  if (df) frag |= 0x4000;
  if (r.non_first_fragment) frag |= 185;  // offset in 8-byte units
  store_be16(out.data() + 6, frag);
  out[8] = r.ttl;
  out[9] = r.protocol.number;
  store_be32(out.data() + 12, r.src_ip.value());
  store_be32(out.data() + 16, r.dst_ip.value());
  std::uint32_t sum = 0;
  for (int i = 0; i < 20; i += 2) sum += load_be16(out.data() + i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  store_be16(out.data() + 10, static_cast<std::uint16_t>(~sum));
  std::copy(l4.begin(), l4.end(), out.begin() + 20);
  return out;
}

class Writer {
 public:
  // base_us is added to every record timestamp (records carry trace-relative time).
  Writer(std::ostream& out, LinkType link = LinkType::Ethernet, std::int64_t base_us = 1'000'000'000'000'000)
      : out_(out), link_(link), base_us_(base_us) {
    if (link != LinkType::Ethernet && link != LinkType::Raw) {
      throw Error("writer supports Ethernet and raw-IP link types only");
    }
    std::array<std::uint8_t, 24> hdr{};
    put32(hdr.data(), kMagicMicro);
    hdr[4] = 2;  // version 2.4, little-endian fields
    hdr[6] = 4;
    put32(hdr.data() + 16, 65535);
    put32(hdr.data() + 20, static_cast<std::uint32_t>(link));
    out_.write(reinterpret_cast<const char*>(hdr.data()), hdr.size());
  }

  void write(const PacketRecord& r) {
    auto ip = encode_ipv4(r, static_cast<std::uint16_t>(count_));
    std::vector<std::uint8_t> frame;
    std::uint32_t link_hdr = 0;
    if (link_ == LinkType::Ethernet) {
      link_hdr = 14;
      frame.assign(14, 0);
      frame[0] = 0x02;
      frame[6] = 0x02;
      frame[11] = 0x01;
      store_be16(frame.data() + 12, 0x0800);
    }
    const std::size_t ip_caplen = std::min<std::size_t>(ip.size(), std::max<std::size_t>(r.ip_len, 20));
    frame.insert(frame.end(), ip.begin(), ip.begin() + static_cast<std::ptrdiff_t>(ip_caplen));
    const std::int64_t ts = base_us_ + r.ts_us;
    std::array<std::uint8_t, 16> rh{};
    put32(rh.data(), static_cast<std::uint32_t>(ts / 1'000'000));
    put32(rh.data() + 4, static_cast<std::uint32_t>(ts % 1'000'000));
    put32(rh.data() + 8, static_cast<std::uint32_t>(frame.size()));
    put32(rh.data() + 12, link_hdr + std::max<std::uint32_t>(r.ip_len, static_cast<std::uint32_t>(ip_caplen)));
    out_.write(reinterpret_cast<const char*>(rh.data()), rh.size());
    out_.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    ++count_;
  }

  std::size_t count() const { return count_; }

 private:
  static void put32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

  std::ostream& out_;
  LinkType link_;
  std::int64_t base_us_;
  std::size_t count_ = 0;
};

}  // namespace flowlens::pcap
