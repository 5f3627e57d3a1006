#pragma once

// `flowlens` command line: analyze, generate, fingerprint-db check.

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowlens/report.hpp"
#include "flowlens/synth_io.hpp"

namespace flowlens::cli {

// sysexits-style codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGated = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataErr = 65;
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitSoftware = 70;

inline constexpr const char* kFingerprintEnv = "FLOWLENS_FP_DB";

inline std::vector<std::uint16_t> parse_ports(const std::string& s) {
  std::vector<std::uint16_t> out;
  for (auto part : split(s, ',')) {
    part = trim(part);
    unsigned v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || p != part.data() + part.size() || v > 65535) {
      throw ParseError("bad port '" + std::string(part) + "' in --http-ports");
    }
    out.push_back(static_cast<std::uint16_t>(v));
  }
  return out;
}

struct AnalyzeArgs {
  std::vector<std::string> inputs;
  double tau = 0.1;
  std::uint64_t greedy_threshold = 20;
  std::uint64_t min_packets = 2;
  double interval = 0.1;
  double skew_min = 0.4;
  std::string keep = "all";
  std::string http_ports = "80";
  std::string fingerprints;
  std::optional<double> x_min;
  double avg_packet_bytes = 700;
  std::string out = ".";
  bool force = false;
  bool no_timestamp = false;
};

inline int run_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  AnalysisOptions opt;
  FingerprintDb db;
  try {
    opt.blocking = {a.tau, a.min_packets, a.greedy_threshold};
    opt.blocking.validate();
    if (!(a.interval > 0)) throw DomainError("--interval must be positive");
    opt.interval = a.interval;
    opt.gate.min_skewness = a.skew_min;
    opt.filter = DirectionFilter::parse(a.keep);
    opt.classifier.http_ports = parse_ports(a.http_ports);
    opt.x_min = a.x_min;
    opt.avg_packet_bytes = a.avg_packet_bytes;
    if (!(a.avg_packet_bytes > 0)) throw DomainError("--avg-packet-bytes must be positive");
    opt.force = a.force;
  } catch (const Error& e) {
    err << "flowlens analyze: " << e.what() << '\n';
    return kExitUsage;
  }
  std::string fp_path = a.fingerprints;
  if (fp_path.empty()) {
    if (const char* env = std::getenv(kFingerprintEnv); env && *env) fp_path = env;
  }
  try {
    db = fp_path.empty() ? default_fingerprint_db() : FingerprintDb::load(fp_path);
    opt.fingerprints = fp_path.empty() ? "builtin" : fp_path;
  } catch (const IoError& e) {
    err << "flowlens analyze: " << e.what() << '\n';
    return kExitNoInput;
  } catch (const ParseError& e) {
    err << "flowlens analyze: fingerprint database: " << e.what() << '\n';
    return kExitDataErr;
  }

  // Output directory per input: <out> for one trace, <out>/<stem> for several.
  std::vector<std::filesystem::path> dirs;
  std::set<std::string> used;
  for (const auto& in : a.inputs) {
    if (a.inputs.size() == 1) {
      dirs.emplace_back(a.out);
      continue;
    }
    std::string stem = std::filesystem::path(in).stem().string();
    std::string name = stem;
    for (int i = 2; !used.insert(name).second; ++i) name = stem + "-" + std::to_string(i);
    dirs.push_back(std::filesystem::path(a.out) / name);
  }

  struct Outcome {
    int code = kExitOk;
    std::string summary;
    std::string error;
  };
  std::vector<std::future<Outcome>> jobs;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      Outcome o;
      try {
        auto r = analyze_file(a.inputs[i], db, opt);
        write_outputs(r, opt, dirs[i], !a.no_timestamp);
        o.summary = summary_line(r);
        if (!r.kept && !opt.force) o.code = kExitGated;
      } catch (const IoError& e) {
        o.code = kExitNoInput;
        o.error = e.what();
      } catch (const std::exception& e) {
        o.code = kExitSoftware;
        o.error = e.what();
      }
      return o;
    }));
  }
  int code = kExitOk;
  for (auto& j : jobs) {
    auto o = j.get();
    if (!o.summary.empty()) out << o.summary << '\n';
    if (!o.error.empty()) err << "flowlens analyze: " << o.error << '\n';
    if (o.code == kExitNoInput || o.code == kExitSoftware) code = std::max(code, o.code);
    else if (o.code == kExitGated && code == kExitOk) code = kExitGated;
  }
  return code;
}

inline int run_generate(const std::string& config, const std::string& out_path, std::optional<std::uint64_t> seed,
                        std::ostream& out, std::ostream& err) {
  synth::ScenarioSpec spec;
  try {
    spec = synth::ScenarioSpec::load(config);
    if (seed) spec.seed = *seed;
  } catch (const IoError& e) {
    err << "flowlens generate: " << e.what() << '\n';
    return kExitNoInput;
  } catch (const ParseError& e) {
    err << "flowlens generate: " << config << ": " << e.what() << '\n';
    return kExitDataErr;
  }
  try {
    auto scenario = synth::generate(spec);
    synth::write_scenario(scenario, out_path, spec.link);
    out << "wrote " << scenario.packets.size() << " packets, " << scenario.truth.flows.size() << " flows to "
        << out_path << " (truth: " << synth::truth_path_for(out_path) << ")\n";
  } catch (const DomainError& e) {
    err << "flowlens generate: infeasible scenario: " << e.what() << '\n';
    return kExitDataErr;
  } catch (const IoError& e) {
    err << "flowlens generate: " << e.what() << '\n';
    return kExitSoftware;
  }
  return kExitOk;
}

inline int run_fp_check(const std::string& path, std::ostream& out, std::ostream& err) {
  try {
    auto db = FingerprintDb::load(path);
    out << path << ": " << db.entries.size() << " entries OK\n";
    return kExitOk;
  } catch (const IoError& e) {
    err << "flowlens fingerprint-db check: " << e.what() << '\n';
    return kExitNoInput;
  } catch (const ParseError& e) {
    err << "flowlens fingerprint-db check: " << path << ": " << e.what() << '\n';
    return kExitDataErr;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"flowlens: per-time-block flow statistics of packet traces"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Analyze one or more pcap traces");
  analyze->add_option("inputs", aa.inputs, "pcap files")->required();
  analyze->add_option("--tau", aa.tau, "Time block length in seconds")->capture_default_str();
  analyze->add_option("--greedy-threshold", aa.greedy_threshold, "Greedy if N_p exceeds this")->capture_default_str();
  analyze->add_option("--min-packets", aa.min_packets, "Minimum packets per block flow")->capture_default_str();
  analyze->add_option("--interval", aa.interval, "Throughput series interval in seconds")->capture_default_str();
  analyze->add_option("--skew-min", aa.skew_min, "Keep traces with skewness >= this")->capture_default_str();
  analyze->add_option("--keep", aa.keep, "Direction filter: src:<CIDR>[,...] | dst:<CIDR>[,...] | all")
      ->capture_default_str();
  analyze->add_option("--http-ports", aa.http_ports, "Comma-separated TCP ports counted as HTTP")
      ->capture_default_str();
  analyze->add_option("--fingerprints", aa.fingerprints, "Fingerprint DB (default: $FLOWLENS_FP_DB or builtin)");
  analyze->add_option("--x-min", aa.x_min, "Tail-fit cutoff (default: greedy threshold)");
  analyze->add_option("--avg-packet-bytes", aa.avg_packet_bytes, "Packet size for the greedy rate equivalent")
      ->capture_default_str();
  analyze->add_option("--out", aa.out, "Output directory")->capture_default_str();
  analyze->add_flag("--force", aa.force, "Emit the full report even for gated-out traces");
  analyze->add_flag("--no-timestamp", aa.no_timestamp, "Omit generated_at from report.json");

  std::string config, gen_out = "scenario.pcap";
  std::optional<std::uint64_t> seed;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic trace with ground truth");
  generate->add_option("--config", config, "Scenario file")->required();
  generate->add_option("--out", gen_out, "Output pcap path")->capture_default_str();
  generate->add_option("--seed", seed, "Override the scenario seed");

  std::string db_path;
  auto* fpdb = app.add_subcommand("fingerprint-db", "Fingerprint database tools");
  fpdb->require_subcommand(1);
  auto* check = fpdb->add_subcommand("check", "Validate a fingerprint database file");
  check->add_option("path", db_path, "Database file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  log::set_quiet(quiet);

  if (*analyze) return run_analyze(aa, out, err);
  if (*generate) return run_generate(config, gen_out, seed, out, err);
  if (*check) return run_fp_check(db_path, out, err);
  return kExitUsage;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"flowlens"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace flowlens::cli
