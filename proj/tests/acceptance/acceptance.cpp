// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "../oracles.hpp"
#include "../test_util.hpp"
#include "flowlens/cli.hpp"

#ifndef FLOWLENS_SOURCE_DIR
#define FLOWLENS_SOURCE_DIR "."
#endif

using namespace flowlens;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failure messages for one criterion; keeps the first few.
struct Check {
  std::vector<std::string> failures;
  std::size_t count = 0;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++count;
    if (failures.size() < 5) failures.push_back(what);
  }
  bool ok() const { return count == 0; }
};

int g_failed = 0;

void report(const char* id, const char* title, const Check& c, const std::string& detail) {
  std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << id << "  " << title << ": " << detail << '\n';
  for (const auto& f : c.failures) std::cout << "        - " << f << '\n';
  if (c.count > c.failures.size()) std::cout << "        - ... " << (c.count - c.failures.size()) << " more\n";
  if (!c.ok()) ++g_failed;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

int quiet_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::vector<std::string> a{"-q"};
  a.insert(a.end(), args.begin(), args.end());
  return cli::run(a, out, err);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

// ---------------------------------------------------------------------------
// 1. Closed loop

synth::ScenarioSpec random_spec(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](auto lo, auto hi) { return std::uniform_int_distribution<long long>(lo, hi)(rng); };
  synth::ScenarioSpec s;
  s.seed = seed;
  s.duration = 0.5 + 0.1 * static_cast<double>(pick(0, 25));
  s.flows_per_block_min = static_cast<std::uint64_t>(pick(0, 3));
  s.flows_per_block_max = s.flows_per_block_min + static_cast<std::uint64_t>(pick(1, 10));
  s.flow_size_alpha = 0.6 + 0.1 * static_cast<double>(pick(0, 14));
  s.flow_size_cap = static_cast<std::uint64_t>(pick(25, 400));
  s.packet_bytes = static_cast<std::uint16_t>(pick(40, 1500));
  s.reverse_packets = static_cast<std::uint64_t>(pick(1, 3));
  s.link = pick(0, 1) ? pcap::LinkType::Ethernet : pcap::LinkType::Raw;
  double a = static_cast<double>(pick(1, 10)), b = static_cast<double>(pick(0, 10)), c = static_cast<double>(pick(0, 5)),
         d = static_cast<double>(pick(0, 2));
  const double sum = a + b + c + d;
  s.app_mix = {a / sum, b / sum, c / sum, d / sum};
  // Floating fractions may miss 1 by an ulp; fold the residue into http.
  s.app_mix[0] = 1.0 - s.app_mix[1] - s.app_mix[2] - s.app_mix[3];
  s.forward_prefix = Cidr::parse("10.0.0.0/8");

  const auto db = default_fingerprint_db();
  auto add_host = [&](Ipv4Addr ip, synth::HostPlan::Role role) {
    synth::HostPlan h;
    h.ip = ip;
    h.role = role;
    if (pick(0, 3) != 0) {
      const auto& e = db.entries[static_cast<std::size_t>(pick(0, static_cast<long long>(db.entries.size()) - 1))];
      h.os_fingerprint = e.os_label;
      h.initial_ttl = e.initial_ttl;
    } else {
      h.initial_ttl = std::array{32, 64, 128, 255}[static_cast<std::size_t>(pick(0, 3))];
    }
    h.hops_to_monitor = static_cast<int>(pick(0, std::min(30, h.initial_ttl - 1)));
    s.hosts.push_back(h);
  };
  const auto n_src = pick(1, 8), n_dst = pick(1, 6);
  for (long long i = 0; i < n_src; ++i) add_host(Ipv4Addr(10, 0, 0, static_cast<std::uint8_t>(i + 1)), synth::HostPlan::Role::Src);
  for (long long i = 0; i < n_dst; ++i) add_host(Ipv4Addr(192, 0, 2, static_cast<std::uint8_t>(i + 1)), synth::HostPlan::Role::Dst);
  return s;
}

void criterion_closed_loop() {
  const auto t0 = Clock::now();
  Check c;
  testutil::TempDir dir;
  const auto db = default_fingerprint_db();
  constexpr int kScenarios = 24;
  std::size_t flows = 0, covered = 0;
  log::set_quiet(true);
  for (int i = 0; i < kScenarios; ++i) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(i);
    const auto spec = random_spec(seed);
    const auto sc = synth::generate(spec, db);
    const auto path = dir.file("loop" + std::to_string(i) + ".pcap");
    synth::write_scenario(sc, path, spec.link);

    AnalysisOptions opt;
    opt.filter = DirectionFilter::parse("src:10.0.0.0/8");
    opt.force = true;
    const auto r = analyze_file(path, db, opt);
    const auto& truth = sc.truth.flows;
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    c.expect(r.records.size() == truth.size(), tag + std::to_string(r.records.size()) + " records vs " +
                                                   std::to_string(truth.size()) + " planted");
    for (std::size_t k = 0; k < std::min(truth.size(), r.records.size()); ++k) {
      const auto& got = r.records[k];
      const auto& want = truth[k];
      const std::string ftag = tag + "flow " + std::to_string(k) + ": ";
      c.expect(got.block_index == want.block && got.key == want.key, ftag + "key/block mismatch");
      c.expect(got.n_packets == want.n_packets, ftag + "n_packets " + std::to_string(got.n_packets) + " vs " +
                                                    std::to_string(want.n_packets));
      c.expect(got.is_greedy == want.greedy && got.is_greedy == (want.n_packets > 20), ftag + "greedy flag");
      c.expect(opt.classifier.classify(got.key) == want.category, ftag + "app category");
      ++flows;
      if (!want.fingerprint_covered) continue;
      ++covered;
      auto it = r.paths.find(got.key);
      c.expect(it != r.paths.end(), ftag + "no hop estimate for a fingerprint-covered flow");
      if (it != r.paths.end()) {
        c.expect(it->second.src_hops == want.src_hops && it->second.dst_hops == want.dst_hops,
                 ftag + "hops " + std::to_string(it->second.src_hops) + "+" + std::to_string(it->second.dst_hops) +
                     " vs " + std::to_string(want.src_hops) + "+" + std::to_string(want.dst_hops));
      }
    }
  }
  log::set_quiet(false);
  const double secs = seconds_since(t0);
  c.expect(covered > 0, "no fingerprint-covered flows were exercised");
  c.expect(secs < 60.0, "runtime " + fmt(secs) + " s exceeds 60 s");
  report("C1", "closed-loop oracle", c,
         std::to_string(kScenarios) + " scenarios, " + std::to_string(flows) + " flows (" + std::to_string(covered) +
             " fingerprint-covered) in " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 2. Tail fit

void criterion_tail_fit() {
  Check c;
  std::string detail;
  for (double alpha : {1.0, 1.5, 2.0}) {
    const auto sizes = synth::sample_flow_sizes(alpha, 1'000'000, 100'000, 4242);
    const auto fit = fit_tail(llcd(sizes), 2);
    c.expect(std::abs(fit.alpha - alpha) <= 0.1, "alpha " + fmt(alpha) + " fitted as " + fmt(fit.alpha));
    detail += "a=" + fmt(alpha) + "->" + fmt(fit.alpha) + " ";

    LlcdCurve exact;
    exact.n_samples = 1'000'000;
    for (int x = 2; x <= 500; ++x) exact.points.push_back({double(x), std::pow(double(x), -alpha)});
    const auto ef = fit_tail(exact, 2);
    c.expect(std::abs(ef.alpha - alpha) <= 1e-6, "noiseless alpha " + fmt(alpha) + " fitted as " + fmt(ef.alpha));
  }
  report("C2", "tail-fit recovery", c, detail + "(1e5 samples, x_min 2); noiseless curves within 1e-6");
}

// ---------------------------------------------------------------------------
// 3. Skewness and gate

void criterion_skewness() {
  Check c;
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(3 + rng() % 5000);
    switch (trial % 4) {
      case 0: for (auto& v : x) v = std::lognormal_distribution<double>(0, 1.5)(rng); break;
      case 1: for (auto& v : x) v = std::normal_distribution<double>(1e7, 3e6)(rng); break;
      case 2: for (auto& v : x) v = std::uniform_real_distribution<double>(-5, 5)(rng); break;
      default: for (auto& v : x) v = static_cast<double>(rng() % 4) * 8e5; break;
    }
    bool all_same = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    if (all_same) continue;
    const double ref = oracle::skewness_three_pass(x);
    const double err = std::abs(skewness(x) - ref) / std::max(1.0, std::abs(ref));
    worst = std::max(worst, err);
    c.expect(err <= 1e-12, "trial " + std::to_string(trial) + ": relative error " + fmt(err));
  }

  std::mt19937_64 r2(77);
  std::vector<double> xe(100'000), xn(100'000);
  for (auto& v : xe) v = std::exponential_distribution<double>(1.0)(r2);
  for (auto& v : xn) v = std::normal_distribution<double>(0.0, 1.0)(r2);
  const double ge = skewness(xe), gn = skewness(xn);
  c.expect(std::abs(ge - 2.0) <= 0.1, "exponential g1 = " + fmt(ge));
  c.expect(std::abs(gn) < 0.05, "normal g1 = " + fmt(gn));

  // Gate decisions on packet traces against the oracle skewness of the
  // independently bucketed series.
  log::set_quiet(true);
  std::size_t kept = 0, gated = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PacketRecord> pkts;
    const int n_int = 20 + static_cast<int>(r2() % 80);
    const double shape = 0.3 + 0.1 * static_cast<double>(r2() % 30);
    std::vector<double> bytes(static_cast<std::size_t>(n_int), 0.0);
    for (int i = 0; i < n_int; ++i) {
      const int n = 1 + static_cast<int>(std::pow(std::uniform_real_distribution<double>(0.0, 1.0)(r2), shape) * 20);
      for (int k = 0; k < n; ++k) {
        pkts.push_back(testutil::tcp(i * 100'000 + k * 10, "10.0.0.1", "192.0.2.1", 80, 1, 64, 500));
        bytes[static_cast<std::size_t>(i)] += 500;
      }
    }
    const auto series = throughput_series(pkts, 0.1);
    const bool decision = gate_trace(series, TraceGate{0.4});
    bool flat = std::all_of(bytes.begin(), bytes.end(), [&](double v) { return v == bytes[0]; });
    std::vector<double> bps(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bps[i] = bytes[i] * 8 / 0.1;
    const bool expected = !flat && oracle::skewness_three_pass(bps) >= 0.4;
    c.expect(decision == expected, "gate trial " + std::to_string(trial) + " decided " + std::to_string(decision));
    (decision ? kept : gated)++;
  }
  log::set_quiet(false);
  ThroughputSeries s;
  for (auto [g, want] : {std::pair{0.41, true}, std::pair{0.39, false}, std::pair{0.4, true}}) {
    s.skewness = g;
    c.expect(gate_trace(s, TraceGate{0.4}) == want, "gate at g1 = " + fmt(g));
  }
  report("C3", "skewness and gate", c,
         "max rel. error vs three-pass " + fmt(worst) + "; exp g1 " + fmt(ge) + ", normal g1 " + fmt(gn) +
             "; gate kept " + std::to_string(kept) + "/" + std::to_string(kept + gated) + " as the oracle predicts");
}

// ---------------------------------------------------------------------------
// 4. Reference-mix scenario through the command line

void criterion_reference_mix() {
  Check c;
  testutil::TempDir dir;
  const std::string cfg = FLOWLENS_SOURCE_DIR "/scenarios/reference_mix.conf";
  const auto pcap = dir.file("reference_mix.pcap");
  const auto out = dir.file("out");
  const int g = quiet_cli({"generate", "--config", cfg, "--out", pcap});
  c.expect(g == 0, "generate exited " + std::to_string(g));
  const int a = g == 0 ? quiet_cli({"analyze", pcap, "--keep", "src:10.0.0.0/8", "--out", out}) : -1;
  c.expect(a == 0, "analyze exited " + std::to_string(a));
  if (!c.ok()) {
    report("C4", "reference-mix reproduction", c, "pipeline did not run");
    return;
  }
  const auto rep = read_json(out + "/report.json");
  const auto& t = rep["app_table"];
  const std::array<std::pair<const char*, double>, 4> mix{{{"http", 0.54}, {"other_tcp", 0.38}, {"udp", 0.07}, {"other", 0.01}}};
  std::string detail = "all-flows mix";
  for (const auto& [name, want] : mix) {
    const double got = t[name]["all"].get<double>();
    c.expect(std::abs(got - want) <= 0.01, std::string(name) + " share " + fmt(got) + " vs " + fmt(want));
    detail += " " + fmt(100 * got);
  }
  const double http_greedy = t["http"]["greedy"].get<double>();
  c.expect(std::abs(http_greedy - 0.70) <= 0.01, "greedy http share " + fmt(http_greedy));
  const double mean_all = rep["hop_summary"]["mean_all"].get<double>();
  const double mean_greedy = rep["hop_summary"]["mean_greedy"].get<double>();
  c.expect(std::abs(mean_all - 19.85) <= 0.5, "all-flows mean hops " + fmt(mean_all));
  c.expect(std::abs(mean_greedy - 17.92) <= 0.5, "greedy mean hops " + fmt(mean_greedy));
  report("C4", "reference-mix reproduction", c,
         detail + " %; greedy http " + fmt(100 * http_greedy) + " %; mean hops all " + fmt(mean_all) + ", greedy " +
             fmt(mean_greedy));
}

// ---------------------------------------------------------------------------
// 5. Rate equivalence

void criterion_rate() {
  Check c;
  const double v = greedy_throughput_equivalent(BlockingConfig{0.1, 2, 20}, 700);
  c.expect(std::abs(v - 1.12e6) <= 1e-6, "got " + fmt(v));
  report("C5", "greedy throughput equivalent", c, "20 pkts x 700 B x 8 / 0.1 s = " + format_double(v) + " bit/s");
}

// ---------------------------------------------------------------------------
// 6. Invariants on randomized small inputs

std::vector<PacketRecord> small_trace(std::mt19937_64& rng) {
  std::vector<PacketRecord> out(1 + rng() % 1000);
  std::uniform_int_distribution<std::int64_t> ts(0, static_cast<std::int64_t>(200'000 + rng() % 3'000'000));
  for (auto& r : out) {
    r.ts_us = ts(rng);
    r.src_ip = Ipv4Addr(10, 0, 0, static_cast<std::uint8_t>(rng() % 5));
    r.dst_ip = Ipv4Addr(192, 0, 2, static_cast<std::uint8_t>(rng() % 3));
    r.src_port = static_cast<std::uint16_t>(rng() % 3);
    r.dst_port = 80;
    r.protocol = rng() % 4 ? kTcp : kUdp;
    r.ttl = static_cast<std::uint8_t>(40 + rng() % 20);
    r.ip_len = static_cast<std::uint16_t>(20 + rng() % 1481);
    r.non_first_fragment = rng() % 50 == 0;
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ts_us < b.ts_us; });
  return out;
}

void criterion_invariants() {
  const auto t0 = Clock::now();
  Check c;
  std::mt19937_64 rng(606);
  log::set_quiet(true);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pkts = small_trace(rng);
    std::uint64_t total = 0;
    for (const auto& p : pkts) total += p.ip_len;
    const double interval = 0.01 * static_cast<double>(1 + rng() % 30);
    const auto s = throughput_series(pkts, interval);
    std::uint64_t from_bps = 0;
    for (double v : s.values) from_bps += static_cast<std::uint64_t>(std::llround(v * interval / 8));
    c.expect(s.total_bytes() == total && from_bps == total, "conservation trial " + std::to_string(trial));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto pkts = small_trace(rng);
    const BlockingConfig cfg{0.05 * static_cast<double>(1 + rng() % 4), 2, 20};
    const auto recs = aggregate(pkts, cfg);
    const auto cells = oracle::group_by_block(pkts, cfg.tau_us());
    // Every keyed packet lies in exactly one cell; records are exactly the
    // cells with at least min_packets, with identical contents.
    std::uint64_t in_cells = 0, keyed = 0, in_records = 0;
    std::size_t big_cells = 0;
    for (const auto& p : pkts) keyed += !p.non_first_fragment;
    for (const auto& [k, cell] : cells) {
      in_cells += cell.packets;
      big_cells += cell.packets >= cfg.min_packets;
    }
    bool match = recs.size() == big_cells;
    for (const auto& r : recs) {
      in_records += r.n_packets;
      auto it = cells.find({r.block_index, r.key.src_ip.value(), r.key.dst_ip.value(), r.key.src_port, r.key.dst_port,
                            r.key.protocol.number});
      match = match && it != cells.end() && it->second.packets == r.n_packets && it->second.bytes == r.n_bytes;
    }
    c.expect(in_cells == keyed && match && in_records <= keyed, "partition trial " + std::to_string(trial));
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint64_t> x(1 + rng() % 1000);
    for (auto& v : x) v = 1 + rng() % (1 + rng() % 200);
    const auto curve = llcd(x);
    const auto ref = oracle::llcd_double_loop(x);
    bool same = curve.points.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i) {
      same = curve.points[i].x == ref[i].first && std::abs(curve.points[i].p - ref[i].second) <= 1e-15;
    }
    c.expect(same, "llcd trial " + std::to_string(trial));
  }
  log::set_quiet(false);
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "runtime " + fmt(secs) + " s exceeds 10 s");
  report("C6", "conservation and partition invariants", c, "3 x 100 randomized inputs in " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 7. Determinism

std::string without_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  const std::string field = std::string("\"") + kTimestampField + "\"";
  while (std::getline(in, line)) {
    if (line.find(field) == std::string::npos) out += line + '\n';
  }
  return out;
}

void criterion_determinism() {
  Check c;
  testutil::TempDir dir;
  const auto pcap = dir.file("small.pcap");
  c.expect(quiet_cli({"generate", "--config", FLOWLENS_SOURCE_DIR "/scenarios/small.conf", "--out", pcap}) == 0,
           "generate failed");
  for (const char* run : {"a", "b"}) {
    const int rc = quiet_cli({"analyze", pcap, "--out", dir.file(run), "--force"});
    c.expect(rc == 0, std::string("analyze run ") + run + " exited " + std::to_string(rc));
  }
  const auto ra = testutil::slurp(dir.file("a/report.json"));
  const auto rb = testutil::slurp(dir.file("b/report.json"));
  c.expect(!ra.empty() && ra.find(kTimestampField) != std::string::npos, "report lacks the timestamp field");
  c.expect(without_timestamp(ra) == without_timestamp(rb), "report.json differs");
  for (const char* f : {"throughput.csv", "flows.csv", "llcd.csv", "hops_all.csv", "hops_greedy.csv"}) {
    c.expect(testutil::slurp(dir.file(std::string("a/") + f)) == testutil::slurp(dir.file(std::string("b/") + f)),
             std::string(f) + " differs");
  }
  report("C7", "determinism", c, "two analyze runs: report.json identical apart from generated_at, CSVs identical");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion_closed_loop, criterion_tail_fit,   criterion_skewness,
                                                    criterion_reference_mix, criterion_rate,       criterion_invariants,
                                                    criterion_determinism};
  for (const auto& fn : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      std::cout << "FAIL  criterion aborted: " << e.what() << '\n';
      ++g_failed;
    }
  }
  std::cout << (g_failed ? std::to_string(g_failed) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return g_failed ? 1 : 0;
}
