#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/flow_block.hpp"

namespace flowlens {

enum class AppCategory { Http, OtherTcp, Udp, Other };

inline constexpr std::array<AppCategory, 4> kAppCategories{AppCategory::Http, AppCategory::OtherTcp, AppCategory::Udp,
                                                          AppCategory::Other};

inline constexpr std::string_view to_string(AppCategory c) {
  switch (c) {
    case AppCategory::Http: return "http";
    case AppCategory::OtherTcp: return "other_tcp";
    case AppCategory::Udp: return "udp";
    case AppCategory::Other: return "other";
  }
  return "other";
}

inline AppCategory parse_app_category(std::string_view s) {
  for (auto c : kAppCategories) {
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown application category '" + std::string(s) + "'");
}

struct PortClassifier {
  std::vector<std::uint16_t> http_ports{80};

  // Port match on either side: the traces are one-way, so the server port
  // can be the source or the destination.
  AppCategory classify(const FlowKey& key) const {
    switch (key.protocol.kind()) {
      case ProtoKind::Tcp: {
        auto is_http = [&](std::uint16_t p) {
          return std::find(http_ports.begin(), http_ports.end(), p) != http_ports.end();
        };
        return is_http(key.src_port) || is_http(key.dst_port) ? AppCategory::Http : AppCategory::OtherTcp;
      }
      case ProtoKind::Udp: return AppCategory::Udp;
      default: return AppCategory::Other;
    }
  }
};

inline AppCategory classify(const FlowKey& key) { return PortClassifier{}.classify(key); }

struct AppBreakdown {
  std::array<double, 4> proportions{};
  std::array<std::uint64_t, 4> counts{};
  std::uint64_t n_flows = 0;

  double operator[](AppCategory c) const { return proportions[static_cast<std::size_t>(c)]; }
};

// Category shares over per-block flow records (optionally greedy ones only).
inline AppBreakdown breakdown(std::span<const BlockFlowRecord> records, bool greedy_only,
                              const PortClassifier& classifier = {}) {
  AppBreakdown b;
  for (const auto& r : records) {
    if (greedy_only && !r.is_greedy) continue;
    ++b.counts[static_cast<std::size_t>(classifier.classify(r.key))];
    ++b.n_flows;
  }
  if (b.n_flows == 0) throw DomainError("no flows to classify");
  for (std::size_t i = 0; i < b.counts.size(); ++i) {
    b.proportions[i] = static_cast<double>(b.counts[i]) / static_cast<double>(b.n_flows);
  }
  return b;
}

}  // namespace flowlens
