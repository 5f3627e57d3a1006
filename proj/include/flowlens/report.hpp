#pragma once

// End-to-end analysis of one trace and its report files.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowlens/app.hpp"
#include "flowlens/flow_block.hpp"
#include "flowlens/format.hpp"
#include "flowlens/hop.hpp"
#include "flowlens/ingest.hpp"
#include "flowlens/tail.hpp"
#include "flowlens/variability.hpp"

namespace flowlens {

struct AnalysisOptions {
  BlockingConfig blocking;
  double interval = 0.1;  // throughput series resolution, seconds
  TraceGate gate;
  DirectionFilter filter;
  PortClassifier classifier;
  std::optional<double> x_min;  // tail-fit cutoff; defaults to the greedy threshold
  double avg_packet_bytes = 700;
  std::string fingerprints = "builtin";  // label echoed in the report
  bool force = false;

  double tail_x_min() const { return x_min.value_or(static_cast<double>(blocking.greedy_threshold)); }
};

struct AnalysisResult {
  std::string trace_id;
  ReadSummary ingest;
  ThroughputSeries series;
  bool kept = false;
  bool downstream = false;  // flow/tail/hop/app sections computed

  std::vector<BlockFlowRecord> records;
  std::uint64_t n_greedy = 0;
  LlcdCurve curve;
  std::optional<TailFit> fit;
  std::string fit_error;

  HostEstimates fwd_hosts;
  HostEstimates rev_hosts;
  PathEstimates paths;
  HopHistogram hops_all;
  HopHistogram hops_greedy;
  std::optional<AppBreakdown> apps_all;
  std::optional<AppBreakdown> apps_greedy;

  double coverage_fraction() const {
    return records.empty() ? 0.0 : static_cast<double>(hops_all.total) / static_cast<double>(records.size());
  }
};

// Flows, throughput and apps come from the forward (kept) packets. Host TTL
// estimates for destinations come from the packets the filter rejected (the
// reverse direction), or from the same packets when no filter is set.
inline AnalysisResult analyze(const Trace& trace, const FingerprintDb& db, const AnalysisOptions& opt,
                              std::string trace_id) {
  opt.blocking.validate();
  AnalysisResult r;
  r.trace_id = std::move(trace_id);
  r.ingest = trace.summary;
  r.series = throughput_series(trace.packets, opt.interval);
  r.kept = gate_trace(r.series, opt.gate);
  if (!r.kept && !opt.force) return r;
  r.downstream = true;

  r.records = aggregate(trace.packets, opt.blocking);
  for (const auto& rec : r.records) r.n_greedy += rec.is_greedy;

  if (!r.records.empty()) {
    std::vector<std::uint64_t> sizes;
    sizes.reserve(r.records.size());
    for (const auto& rec : r.records) sizes.push_back(rec.n_packets);
    r.curve = llcd(sizes);
    try {
      r.fit = fit_tail(r.curve, opt.tail_x_min());
    } catch (const DomainError& e) {
      r.fit_error = e.what();
    }
  } else {
    r.fit_error = "no flows";
  }

  r.fwd_hosts = estimate_hosts(trace.packets, db);
  r.rev_hosts = opt.filter.mode == DirectionFilter::Mode::All ? r.fwd_hosts : estimate_hosts(trace.rejected, db);
  r.paths = estimate_paths(r.records, r.fwd_hosts, r.rev_hosts);
  r.hops_all = hop_histogram(r.records, r.paths, false);
  r.hops_greedy = hop_histogram(r.records, r.paths, true);

  if (!r.records.empty()) r.apps_all = breakdown(r.records, false, opt.classifier);
  if (r.n_greedy) r.apps_greedy = breakdown(r.records, true, opt.classifier);
  return r;
}

inline AnalysisResult analyze_file(const std::string& path, const FingerprintDb& db, const AnalysisOptions& opt) {
  auto trace = read_trace(path, opt.filter);
  return analyze(trace, db, opt, std::filesystem::path(path).filename().string());
}

namespace detail {
inline nlohmann::ordered_json opt_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}
}  // namespace detail

inline constexpr const char* kTimestampField = "generated_at";

inline nlohmann::ordered_json parameters_json(const AnalysisOptions& opt) {
  nlohmann::ordered_json p;
  p["tau"] = opt.blocking.tau;
  p["min_packets"] = opt.blocking.min_packets;
  p["greedy_threshold"] = opt.blocking.greedy_threshold;
  p["interval"] = opt.interval;
  p["skew_min"] = opt.gate.min_skewness;
  p["keep"] = opt.filter.to_string();
  p["http_ports"] = opt.classifier.http_ports;
  p["fingerprints"] = opt.fingerprints;
  p["x_min"] = opt.tail_x_min();
  p["avg_packet_bytes"] = opt.avg_packet_bytes;
  p["force"] = opt.force;
  return p;
}

inline nlohmann::ordered_json report_json(const AnalysisResult& r, const AnalysisOptions& opt,
                                          bool with_timestamp = true) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["trace_id"] = r.trace_id;
  if (with_timestamp) j[kTimestampField] = detail::utc_now();
  j["parameters"] = parameters_json(opt);
  j["ingest"] = {{"frames", r.ingest.frames},       {"ipv4", r.ingest.ipv4},
                 {"kept", r.ingest.kept},           {"filtered", r.ingest.filtered},
                 {"skipped", r.ingest.skipped},     {"ipv6", r.ingest.ipv6},
                 {"malformed", r.ingest.malformed}, {"truncated", r.ingest.truncated}};
  j["gate"] = {{"mean_bps", r.series.mean_bps},
               {"skewness", detail::opt_number(r.series.skewness)},
               {"min_skewness", opt.gate.min_skewness},
               {"kept", r.kept},
               {"n_intervals", r.series.values.size()},
               {"total_bytes", r.series.total_bytes()}};
  if (!r.downstream) return j;

  std::int64_t n_blocks = r.records.empty() ? 0 : r.records.back().block_index + 1;
  j["flows"] = {{"n_records", r.records.size()},
                {"n_greedy", r.n_greedy},
                {"n_blocks", n_blocks},
                {"greedy_throughput_equivalent_bps", greedy_throughput_equivalent(opt.blocking, opt.avg_packet_bytes)}};
  if (r.fit) {
    j["llcd_fit"] = {{"alpha", r.fit->alpha},
                     {"x_min", r.fit->x_min},
                     {"r_squared", r.fit->r_squared},
                     {"n_tail", r.fit->n_tail},
                     {"n_points", r.fit->n_points},
                     {"n_samples", r.curve.n_samples}};
  } else {
    j["llcd_fit"] = {{"error", r.fit_error}, {"x_min", opt.tail_x_min()}, {"n_samples", r.curve.n_samples}};
  }
  j["hop_summary"] = {
      {"mean_all", detail::opt_number(r.hops_all.mean)},
      {"mean_greedy", detail::opt_number(r.hops_greedy.mean)},
      {"coverage_fraction", r.coverage_fraction()},
      {"n_estimated_all", r.hops_all.total},
      {"n_estimated_greedy", r.hops_greedy.total},
      {"host_coverage",
       {{"forward", {{"hosts", r.fwd_hosts.hosts_seen},
                     {"fingerprint_fraction", r.fwd_hosts.fingerprint_fraction()},
                     {"fallback_fraction", r.fwd_hosts.fallback_fraction()},
                     {"rejected", r.fwd_hosts.rejected},
                     {"conflicting", r.fwd_hosts.conflicting}}},
        {"reverse", {{"hosts", r.rev_hosts.hosts_seen},
                     {"fingerprint_fraction", r.rev_hosts.fingerprint_fraction()},
                     {"fallback_fraction", r.rev_hosts.fallback_fraction()},
                     {"rejected", r.rev_hosts.rejected},
                     {"conflicting", r.rev_hosts.conflicting}}}}},
      {"assumptions", {"symmetric_routing"}}};
  ordered_json table = ordered_json::object();
  for (auto c : kAppCategories) {
    table[std::string(to_string(c))] = {
        {"all", r.apps_all ? ordered_json((*r.apps_all)[c]) : ordered_json(nullptr)},
        {"greedy", r.apps_greedy ? ordered_json((*r.apps_greedy)[c]) : ordered_json(nullptr)}};
  }
  j["app_table"] = table;
  return j;
}

// One JSON line per trace: {trace, mean_bps, skewness, kept}.
inline std::string summary_line(const AnalysisResult& r) {
  nlohmann::ordered_json j{{"trace", r.trace_id},
                           {"mean_bps", r.series.mean_bps},
                           {"skewness", detail::opt_number(r.series.skewness)},
                           {"kept", r.kept}};
  return j.dump();
}

inline void write_throughput_csv(std::ostream& os, const ThroughputSeries& s) {
  os << "interval_index,bytes,bps\n";
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    os << i << ',' << s.bytes[i] << ',' << format_double(s.values[i]) << '\n';
  }
}

namespace detail {
template <typename Fn>
void write_file(const std::filesystem::path& p, Fn&& fn) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  fn(out);
}
}  // namespace detail

// report.json plus CSV sidecars; a gated-out trace gets report.json and
// throughput.csv only.
inline void write_outputs(const AnalysisResult& r, const AnalysisOptions& opt, const std::filesystem::path& dir,
                          bool with_timestamp = true) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "report.json", [&](std::ostream& os) { os << report_json(r, opt, with_timestamp).dump(2) << '\n'; });
  detail::write_file(dir / "throughput.csv", [&](std::ostream& os) { write_throughput_csv(os, r.series); });
  if (!r.downstream) return;
  detail::write_file(dir / "flows.csv", [&](std::ostream& os) { write_flows_csv(os, r.records); });
  detail::write_file(dir / "llcd.csv", [&](std::ostream& os) { write_llcd_csv(os, r.curve); });
  detail::write_file(dir / "hops_all.csv", [&](std::ostream& os) { write_histogram_csv(os, r.hops_all); });
  detail::write_file(dir / "hops_greedy.csv", [&](std::ostream& os) { write_histogram_csv(os, r.hops_greedy); });
}

}  // namespace flowlens
