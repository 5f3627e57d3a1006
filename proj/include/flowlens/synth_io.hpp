#pragma once

// Scenario config files and ground-truth JSON.
//
// Config format: `key = value` lines, then optional `[hosts]` and `[flows]`
// tables with whitespace-separated columns. `#` starts a comment.
//
//   duration = 10
//   tau = 0.1
//   flows_per_block = 5..20
//   app_mix = http:0.54, other_tcp:0.38, udp:0.07, other:0.01
//   forward_prefix = 10.0.0.0/8
//
//   [hosts]
//   # ip        initial_ttl hops os        role pool
//   10.0.0.1    64          13   Linux-2.4 src  greedy
//   192.0.2.5   128         5    -         dst
//
//   [flows]
//   # block src       dst        category n_packets
//   0       10.0.0.1  192.0.2.5  http     25

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "flowlens/synth.hpp"

namespace flowlens::synth {

namespace detail {

inline std::vector<std::string_view> columns(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view key) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError("bad value '" + std::string(s) + "' for " + std::string(key));
  }
  return v;
}

inline bool parse_bool(std::string_view s, std::string_view key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ParseError("bad boolean '" + std::string(s) + "' for " + std::string(key));
}

inline std::array<double, 4> parse_mix(std::string_view s, std::string_view key) {
  std::array<double, 4> mix{};
  for (auto part : split(s, ',')) {
    part = trim(part);
    auto colon = part.find(':');
    if (colon == std::string_view::npos) throw ParseError("expected category:fraction in " + std::string(key));
    mix[static_cast<std::size_t>(parse_app_category(trim(part.substr(0, colon))))] =
        parse_number<double>(trim(part.substr(colon + 1)), key);
  }
  return mix;
}

}  // namespace detail

inline ScenarioSpec ScenarioSpec::parse(std::string_view text) {
  ScenarioSpec spec;
  enum class Section { Main, Hosts, Flows } section = Section::Main;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
    try {
      if (line == "[hosts]") {
        section = Section::Hosts;
        continue;
      }
      if (line == "[flows]") {
        section = Section::Flows;
        continue;
      }
      if (section == Section::Hosts) {
        auto c = detail::columns(line);
        if (c.size() < 5 || c.size() > 6) throw ParseError("host rows need: ip initial_ttl hops os role [pool]");
        HostPlan h;
        h.ip = Ipv4Addr::parse(c[0]);
        h.initial_ttl = detail::parse_number<int>(c[1], "initial_ttl");
        h.hops_to_monitor = detail::parse_number<int>(c[2], "hops");
        if (c[3] != "-") h.os_fingerprint = std::string(c[3]);
        if (c[4] == "src") h.role = HostPlan::Role::Src;
        else if (c[4] == "dst") h.role = HostPlan::Role::Dst;
        else throw ParseError("role must be src or dst");
        if (c.size() == 6) {
          if (c[5] == "any") h.pool = HostPlan::Pool::Any;
          else if (c[5] == "greedy") h.pool = HostPlan::Pool::Greedy;
          else if (c[5] == "regular") h.pool = HostPlan::Pool::Regular;
          else throw ParseError("pool must be any, greedy or regular");
        }
        spec.hosts.push_back(std::move(h));
        continue;
      }
      if (section == Section::Flows) {
        auto c = detail::columns(line);
        if (c.size() != 5) throw ParseError("flow rows need: block src dst category n_packets");
        PlannedFlow f;
        f.block = detail::parse_number<std::int64_t>(c[0], "block");
        f.src = Ipv4Addr::parse(c[1]);
        f.dst = Ipv4Addr::parse(c[2]);
        f.category = parse_app_category(c[3]);
        f.n_packets = detail::parse_number<std::uint64_t>(c[4], "n_packets");
        spec.flows.push_back(f);
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ParseError("expected key = value");
      auto key = trim(line.substr(0, eq));
      auto val = trim(line.substr(eq + 1));
      if (key == "duration") spec.duration = detail::parse_number<double>(val, key);
      else if (key == "tau") spec.tau = detail::parse_number<double>(val, key);
      else if (key == "flows_per_block") {
        auto dots = val.find("..");
        if (dots == std::string_view::npos) {
          spec.flows_per_block_min = spec.flows_per_block_max = detail::parse_number<std::uint64_t>(val, key);
        } else {
          spec.flows_per_block_min = detail::parse_number<std::uint64_t>(trim(val.substr(0, dots)), key);
          spec.flows_per_block_max = detail::parse_number<std::uint64_t>(trim(val.substr(dots + 2)), key);
        }
      } else if (key == "flow_size_alpha") spec.flow_size_alpha = detail::parse_number<double>(val, key);
      else if (key == "flow_size_cap") spec.flow_size_cap = detail::parse_number<std::uint64_t>(val, key);
      else if (key == "greedy_threshold") spec.greedy_threshold = detail::parse_number<std::uint64_t>(val, key);
      else if (key == "packet_bytes") spec.packet_bytes = detail::parse_number<std::uint16_t>(val, key);
      else if (key == "app_mix") spec.app_mix = detail::parse_mix(val, key);
      else if (key == "greedy_app_mix") spec.greedy_app_mix = detail::parse_mix(val, key);
      else if (key == "bidirectional") spec.bidirectional = detail::parse_bool(val, key);
      else if (key == "reverse_packets") spec.reverse_packets = detail::parse_number<std::uint64_t>(val, key);
      else if (key == "seed") spec.seed = detail::parse_number<std::uint64_t>(val, key);
      else if (key == "min_spacing_us") spec.min_spacing_us = detail::parse_number<std::int64_t>(val, key);
      else if (key == "forward_prefix") spec.forward_prefix = Cidr::parse(val);
      else if (key == "link") {
        if (val == "ethernet") spec.link = pcap::LinkType::Ethernet;
        else if (val == "raw") spec.link = pcap::LinkType::Raw;
        else throw ParseError("link must be ethernet or raw");
      } else {
        throw ParseError("unknown key '" + std::string(key) + "'");
      }
    } catch (const ParseError& e) {
      throw ParseError(where() + e.what());
    }
  }
  return spec;
}

inline ScenarioSpec ScenarioSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

inline nlohmann::ordered_json to_json(const GroundTruth& gt) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = gt.seed;
  j["tau"] = gt.tau;
  j["n_blocks"] = gt.n_blocks;
  j["greedy_threshold"] = gt.greedy_threshold;
  j["forward_prefix"] = gt.forward_prefix ? ordered_json(gt.forward_prefix->to_string()) : ordered_json(nullptr);
  j["total_packets"] = gt.total_packets;
  j["total_bytes"] = gt.total_bytes;
  j["forward_packets"] = gt.forward_packets;
  j["forward_bytes"] = gt.forward_bytes;
  auto& hosts = j["hosts"] = ordered_json::array();
  for (const auto& h : gt.hosts) {
    hosts.push_back({{"ip", h.ip.to_string()},
                     {"role", h.src_role ? "src" : "dst"},
                     {"initial_ttl", h.initial_ttl},
                     {"hops_to_monitor", h.hops_to_monitor},
                     {"os", h.os_fingerprint ? ordered_json(*h.os_fingerprint) : ordered_json(nullptr)},
                     {"emitted_syn", h.emitted_syn}});
  }
  auto& flows = j["flows"] = ordered_json::array();
  for (const auto& f : gt.flows) {
    flows.push_back({{"block", f.block},
                     {"src_ip", f.key.src_ip.to_string()},
                     {"dst_ip", f.key.dst_ip.to_string()},
                     {"src_port", f.key.src_port},
                     {"dst_port", f.key.dst_port},
                     {"proto", f.key.protocol.number},
                     {"n_packets", f.n_packets},
                     {"n_bytes", f.n_bytes},
                     {"greedy", f.greedy},
                     {"category", to_string(f.category)},
                     {"src_hops", f.src_hops},
                     {"dst_hops", f.dst_hops},
                     {"path_hops", f.path_hops},
                     {"fingerprint_covered", f.fingerprint_covered}});
  }
  j["flow_sizes"] = gt.flow_sizes;
  return j;
}

inline GroundTruth truth_from_json(const nlohmann::ordered_json& j) {
  GroundTruth gt;
  gt.seed = j.at("seed").get<std::uint64_t>();
  gt.tau = j.at("tau").get<double>();
  gt.n_blocks = j.at("n_blocks").get<std::int64_t>();
  gt.greedy_threshold = j.at("greedy_threshold").get<std::uint64_t>();
  if (!j.at("forward_prefix").is_null()) gt.forward_prefix = Cidr::parse(j["forward_prefix"].get<std::string>());
  gt.total_packets = j.at("total_packets").get<std::uint64_t>();
  gt.total_bytes = j.at("total_bytes").get<std::uint64_t>();
  gt.forward_packets = j.at("forward_packets").get<std::uint64_t>();
  gt.forward_bytes = j.at("forward_bytes").get<std::uint64_t>();
  for (const auto& h : j.at("hosts")) {
    TruthHost t;
    t.ip = Ipv4Addr::parse(h.at("ip").get<std::string>());
    t.src_role = h.at("role").get<std::string>() == "src";
    t.initial_ttl = h.at("initial_ttl").get<int>();
    t.hops_to_monitor = h.at("hops_to_monitor").get<int>();
    if (!h.at("os").is_null()) t.os_fingerprint = h["os"].get<std::string>();
    t.emitted_syn = h.at("emitted_syn").get<bool>();
    gt.hosts.push_back(std::move(t));
  }
  for (const auto& f : j.at("flows")) {
    TruthFlow t;
    t.block = f.at("block").get<std::int64_t>();
    t.key.src_ip = Ipv4Addr::parse(f.at("src_ip").get<std::string>());
    t.key.dst_ip = Ipv4Addr::parse(f.at("dst_ip").get<std::string>());
    t.key.src_port = f.at("src_port").get<std::uint16_t>();
    t.key.dst_port = f.at("dst_port").get<std::uint16_t>();
    t.key.protocol = IpProto{f.at("proto").get<std::uint8_t>()};
    t.n_packets = f.at("n_packets").get<std::uint64_t>();
    t.n_bytes = f.at("n_bytes").get<std::uint64_t>();
    t.greedy = f.at("greedy").get<bool>();
    t.category = parse_app_category(f.at("category").get<std::string>());
    t.src_hops = f.at("src_hops").get<int>();
    t.dst_hops = f.at("dst_hops").get<int>();
    t.path_hops = f.at("path_hops").get<int>();
    t.fingerprint_covered = f.at("fingerprint_covered").get<bool>();
    gt.flows.push_back(t);
  }
  gt.flow_sizes = j.at("flow_sizes").get<std::vector<std::uint64_t>>();
  return gt;
}

// Writes `<pcap_path>` and the ground truth next to it as `<stem>.truth.json`.
inline std::string truth_path_for(const std::string& pcap_path) {
  auto dot = pcap_path.rfind('.');
  auto slash = pcap_path.rfind('/');
  std::string stem = (dot != std::string::npos && (slash == std::string::npos || dot > slash))
                         ? pcap_path.substr(0, dot)
                         : pcap_path;
  return stem + ".truth.json";
}

inline void write_scenario(const Scenario& s, const std::string& pcap_path, pcap::LinkType link) {
  {
    std::ofstream out(pcap_path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + pcap_path + "'");
    write_pcap(out, s, link);
  }
  const auto truth = truth_path_for(pcap_path);
  std::ofstream out(truth);
  if (!out) throw IoError("cannot write '" + truth + "'");
  out << to_json(s.truth).dump(1) << '\n';
}

}  // namespace flowlens::synth
