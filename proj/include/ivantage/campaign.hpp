#pragma once

// Campaign orchestration behind the command line tool: configuration,
// subcommands, persistence and summaries.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivantage/demo.hpp"
#include "ivantage/discovery.hpp"
#include "ivantage/io.hpp"
#include "ivantage/isav.hpp"
#include "ivantage/ratelimit.hpp"
#include "ivantage/reach.hpp"
#include "ivantage/transport.hpp"

namespace ivantage {

namespace fs = std::filesystem;

struct CampaignInputs {
  std::string scenario;       // SimConfig JSON, sim backend
  std::string prefixes;       // discovery prefix list
  std::string pairs;          // data pairs (defaults to the discovery output)
  std::string as_map;
  std::string hitlist;        // "<prefix> <address>" extra echo targets
  std::string rl_targets;     // "<probe_dst> <origin> <kind>"
  std::string reach_targets;
  std::string proxy_rvps;     // data pair records
  std::string coordinates;
  std::string reach_truth;
  std::string isav_truth;     // "<prefix> deployed|vulnerable|unmeasurable"
  std::string rl_truth;       // "<origin> <class>"
};

struct CampaignConfig {
  std::string backend = "sim";
  std::uint64_t seed = 1;
  std::string out_dir = "results";
  CampaignInputs inputs;
  MeasurementParams isav;
  MeasurementParams rl{50, 100, 0.6, 3, 1000};
  MeasurementParams reach{50, 100, 0.7, 6, 1000};
  std::vector<double> reach_lambdas{0.5, 0.6, 0.7, 0.8, 0.9};
  RateCap cap;
  DiscoveryCaps discovery_caps;
  DiscoveryOptions discovery;
  ReachOptions reach_opts;
  BurstPolicy burst;
  RawTransportOptions raw;

  void validate_params() const {
    if (backend != "sim" && backend != "raw") throw ConfigError("backend must be 'sim' or 'raw'");
    isav.validate();
    rl.validate();
    reach.validate();
    discovery_caps.validate();
    for (double l : reach_lambdas) {
      if (!(l > 0.0 && l < 1.0)) throw ConfigError("reach lambdas must lie in (0,1)");
    }
    if (backend == "raw") {
      if (raw.interface.empty()) throw ConfigError("raw backend requires raw.interface");
      if (raw.allow_spoofing && !raw.spoofing_acknowledged) {
        throw ConfigError("raw backend with spoofing requires raw.spoofing_acknowledged");
      }
    }
  }

  // Files the given command reads must exist.
  void validate_for(const std::string& command) const {
    validate_params();
    auto need = [&](const std::string& path, const char* what) {
      if (path.empty()) throw ConfigError(std::string("missing input: ") + what);
      if (!fs::exists(path)) throw ConfigError(std::string("input file not found for ") + what + ": " + path);
    };
    auto maybe = [&](const std::string& path, const char* what) {
      if (!path.empty()) need(path, what);
    };
    if (backend == "sim") need(inputs.scenario, "scenario");
    if (command == "discover") need(inputs.prefixes, "prefixes");
    if (command == "isav") {
      need(pairs_path(), "pairs");
      need(inputs.as_map, "as_map");
      maybe(inputs.hitlist, "hitlist");
      maybe(inputs.isav_truth, "isav_truth");
    }
    if (command == "reach") {
      need(inputs.reach_targets, "reach_targets");
      need(inputs.proxy_rvps, "proxy_rvps");
      maybe(inputs.coordinates, "coordinates");
      maybe(inputs.reach_truth, "reach_truth");
    }
    if (command == "rl-classify") {
      need(inputs.rl_targets, "rl_targets");
      maybe(inputs.rl_truth, "rl_truth");
    }
  }

  std::string pairs_path() const { return inputs.pairs.empty() ? (fs::path(out_dir) / "pairs.jsonl").string() : inputs.pairs; }
};

namespace detail {

inline MeasurementParams params_from_json(const json& j, MeasurementParams p) {
  p.n_probe = j.value("n_probe", p.n_probe);
  p.m_noise = j.value("m_noise", p.m_noise);
  p.lambda = j.value("lambda", p.lambda);
  p.repeats = j.value("repeats", p.repeats);
  p.receive_window_ms = j.value("receive_window_ms", p.receive_window_ms);
  return p;
}

inline json params_to_json(const MeasurementParams& p) {
  return {{"n_probe", p.n_probe},
          {"m_noise", p.m_noise},
          {"lambda", p.lambda},
          {"repeats", p.repeats},
          {"receive_window_ms", p.receive_window_ms}};
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

}  // namespace detail

// Relative paths are resolved against the configuration file's directory.
inline CampaignConfig campaign_from_json(const json& j, const fs::path& base_dir) {
  CampaignConfig c;
  try {
    c.backend = j.value("backend", c.backend);
    c.seed = j.value("seed", c.seed);
    c.out_dir = detail::resolve(base_dir, j.value("out_dir", c.out_dir));
    if (j.contains("inputs")) {
      const auto& in = j.at("inputs");
      auto get = [&](const char* k) { return detail::resolve(base_dir, in.value(k, std::string())); };
      c.inputs.scenario = get("scenario");
      c.inputs.prefixes = get("prefixes");
      c.inputs.pairs = get("pairs");
      c.inputs.as_map = get("as_map");
      c.inputs.hitlist = get("hitlist");
      c.inputs.rl_targets = get("rl_targets");
      c.inputs.reach_targets = get("reach_targets");
      c.inputs.proxy_rvps = get("proxy_rvps");
      c.inputs.coordinates = get("coordinates");
      c.inputs.reach_truth = get("reach_truth");
      c.inputs.isav_truth = get("isav_truth");
      c.inputs.rl_truth = get("rl_truth");
    }
    if (j.contains("isav")) c.isav = detail::params_from_json(j.at("isav"), c.isav);
    if (j.contains("rl")) c.rl = detail::params_from_json(j.at("rl"), c.rl);
    if (j.contains("reach")) {
      const auto& r = j.at("reach");
      c.reach = detail::params_from_json(r, c.reach);
      c.reach_lambdas = r.value("lambdas", c.reach_lambdas);
      c.reach_opts.reuse_interval_ms = r.value("reuse_interval_ms", c.reach_opts.reuse_interval_ms);
      c.reach_opts.baseline_every = r.value("baseline_every", c.reach_opts.baseline_every);
      c.reach_opts.settle_ms = r.value("settle_ms", c.reach_opts.settle_ms);
    }
    if (j.contains("rate_cap")) {
      const auto& r = j.at("rate_cap");
      c.cap.max_pps = r.value("max_pps", c.cap.max_pps);
      c.cap.burst = r.value("burst", c.cap.burst);
      c.cap.prefix_len = r.value("prefix_len", c.cap.prefix_len);
    }
    if (j.contains("discovery")) {
      const auto& d = j.at("discovery");
      c.discovery_caps.pair_cap = d.value("pair_cap", c.discovery_caps.pair_cap);
      c.discovery_caps.probe_cap = d.value("probe_cap", c.discovery_caps.probe_cap);
      c.discovery.pacing_pps = d.value("pacing_pps", c.discovery.pacing_pps);
    }
    if (j.contains("raw")) {
      const auto& r = j.at("raw");
      c.raw.interface = r.value("interface", std::string());
      if (r.contains("local_address")) c.raw.local_address = Ipv6Address::parse(r.at("local_address").get<std::string>());
      c.raw.allow_spoofing = r.value("allow_spoofing", false);
      c.raw.spoofing_acknowledged = r.value("spoofing_acknowledged", false);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad campaign config: ") + e.what());
  }
  c.validate_params();
  return c;
}

inline CampaignConfig load_campaign(const std::string& path) {
  const json j = read_json(path);
  return campaign_from_json(j, fs::absolute(path).parent_path());
}

inline std::unique_ptr<Transport> make_transport(const CampaignConfig& c) {
  if (c.backend == "raw") {
    RawTransportOptions o = c.raw;
    o.cap = c.cap;
    return std::make_unique<RawTransport>(o);
  }
  return std::make_unique<SimTransport>(sim_config_from_json(read_json(c.inputs.scenario)), c.cap);
}

// ---------------------------------------------------------------------------
// Run manifest: completed keys per command, one JSON object per line. A
// record is written before its key, so a key in the manifest always has its
// record on disk.
// ---------------------------------------------------------------------------

class RunManifest {
 public:
  RunManifest(fs::path out_dir, std::string command) : path_(out_dir / "manifest.jsonl"), command_(std::move(command)) {
    if (!fs::exists(path_)) return;
    std::ifstream in(path_);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      try {
        const json j = json::parse(line);
        if (j.value("command", std::string()) == command_) done_.insert(j.value("key", std::string()));
      } catch (const json::parse_error&) {
        // torn last line of an interrupted run
      }
    }
  }

  bool done(const std::string& key) const { return done_.count(key) > 0; }
  std::size_t size() const { return done_.size(); }

  void mark(const std::string& key) {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << json{{"command", command_}, {"key", key}}.dump() << '\n';
    done_.insert(key);
  }

 private:
  fs::path path_;
  std::string command_;
  std::set<std::string> done_;
};

// Existing records of a resumed run, keeping only those whose key is complete.
inline std::vector<json> completed_records(const fs::path& file, const RunManifest& m, const char* key_field) {
  std::vector<json> out;
  if (!fs::exists(file)) return out;
  std::ifstream in(file);
  for (std::string line; std::getline(in, line);) {
    try {
      json j = json::parse(line);
      if (m.done(j.value(key_field, std::string()))) out.push_back(std::move(j));
    } catch (const json::parse_error&) {
    }
  }
  return out;
}

inline void rewrite_records(const fs::path& file, const std::vector<json>& records) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  for (const auto& r : records) out << r.dump() << '\n';
}

inline void append_record(const fs::path& file, const json& record) {
  std::ofstream out(file, std::ios::app | std::ios::binary);
  out << record.dump() << '\n';
}

inline std::string pct(std::size_t part, std::size_t whole) {
  return whole == 0 ? "0.00" : fmt(100.0 * static_cast<double>(part) / static_cast<double>(whole), 2);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct DemoSizes {
  int isav_moderate = 200;
  int isav_echo_only = 8;
  int isav_unlimited = 4;
  int reach_targets = 1000;
  int reach_cut = 149;
};

// Writes the demo scenario, its engine inputs, the planted truth and a
// campaign.json tying them together into `dir`.
inline void cmd_simulate(const fs::path& dir, std::uint64_t seed, const DemoSizes& sizes = {}, std::ostream& log = std::cout) {
  fs::create_directories(dir);
  SimConfig cfg = demo::base_config(seed);
  auto isav = demo::add_isav_population(
      cfg, {sizes.isav_moderate, sizes.isav_echo_only, sizes.isav_unlimited, 0.0, 0.0, 0x2400}, hash_keys({seed, 1}));
  auto rl = demo::add_rl_population(cfg, {}, hash_keys({seed, 2}));
  auto disc = demo::add_discovery_demo(cfg);
  demo::ReachPopulationSpec rs;
  rs.targets = sizes.reach_targets;
  rs.cut = sizes.reach_cut;
  auto reach = demo::add_reach_population(cfg, rs, hash_keys({seed, 3}));

  write_file((dir / "scenario.json").string(), sim_config_to_json(cfg).dump(1) + "\n");

  std::ostringstream prefixes, as_map, hitlist, isav_truth;
  prefixes << "# discovery prefixes\n";
  for (const auto& [p, pair] : isav.pairs) {
    prefixes << p.to_string() << '\n';
    as_map << p.to_string() << ' ' << isav.as_map[p] << '\n';
    for (const auto& h : isav.hitlist[p]) hitlist << p.to_string() << ' ' << h.to_string() << '\n';
    const bool echo_observable = !isav.unmeasurable.count(p);
    isav_truth << p.to_string() << ' '
               << (!echo_observable ? "unmeasurable" : isav.deployed[p] ? "deployed" : "vulnerable") << '\n';
  }
  prefixes << disc.rich.to_string() << '\n' << disc.silent.to_string() << '\n';
  as_map << disc.rich.to_string() << " 64999\n" << disc.silent.to_string() << " 64999\n";
  isav_truth << disc.rich.to_string() << " vulnerable\n";
  write_file((dir / "prefixes.txt").string(), prefixes.str());
  write_file((dir / "as_map.txt").string(), as_map.str());
  write_file((dir / "hitlist.txt").string(), hitlist.str());
  write_file((dir / "isav_truth.txt").string(), isav_truth.str());

  std::ostringstream rl_targets, rl_truth;
  for (std::size_t i = 0; i < rl.targets.size(); ++i) {
    const auto& t = rl.targets[i];
    rl_targets << t.probe_dst.to_string() << ' ' << t.origin.to_string() << ' ' << to_string(t.kind) << '\n';
    rl_truth << t.origin.to_string() << ' ' << to_string(rl.expected[i]) << '\n';
  }
  write_file((dir / "rl_targets.txt").string(), rl_targets.str());
  write_file((dir / "rl_truth.txt").string(), rl_truth.str());

  std::ostringstream targets, rvps, coords, truth;
  for (const auto& t : reach.targets) {
    targets << t.to_string() << '\n';
    truth << t.to_string() << ' ' << (reach.unconnected[t] ? 1 : 0) << '\n';
  }
  for (const auto& r : reach.rvps) rvps << pair_record(Prefix(r.periphery, 48), r).dump() << '\n';
  coords << "# address_or_prefix\tlat\tlon\n";
  for (const auto& [p, g] : reach.coordinates.entries()) {
    coords << p.to_string() << '\t' << fmt(g.lat, 4) << '\t' << fmt(g.lon, 4) << '\n';
  }
  write_file((dir / "reach_targets.txt").string(), targets.str());
  write_file((dir / "proxy_rvps.jsonl").string(), rvps.str());
  write_file((dir / "coordinates.tsv").string(), coords.str());
  write_file((dir / "reach_truth.txt").string(), truth.str());

  json campaign = {{"backend", "sim"},
                   {"seed", seed},
                   {"out_dir", "results"},
                   {"inputs",
                    {{"scenario", "scenario.json"},
                     {"prefixes", "prefixes.txt"},
                     {"as_map", "as_map.txt"},
                     {"hitlist", "hitlist.txt"},
                     {"isav_truth", "isav_truth.txt"},
                     {"rl_targets", "rl_targets.txt"},
                     {"rl_truth", "rl_truth.txt"},
                     {"reach_targets", "reach_targets.txt"},
                     {"proxy_rvps", "proxy_rvps.jsonl"},
                     {"coordinates", "coordinates.tsv"},
                     {"reach_truth", "reach_truth.txt"}}},
                   {"isav", detail::params_to_json(MeasurementParams{})},
                   {"rl", detail::params_to_json(MeasurementParams{50, 100, 0.6, 3, 1000})},
                   {"reach", detail::params_to_json(MeasurementParams{50, 100, 0.7, 6, 1000})},
                   {"discovery", {{"pair_cap", 50}, {"probe_cap", 10000}, {"pacing_pps", 100.0}}},
                   {"rate_cap", {{"max_pps", 200.0}, {"burst", 1000.0}, {"prefix_len", 48}}}};
  campaign["reach"]["lambdas"] = {0.5, 0.6, 0.7, 0.8, 0.9};
  campaign["reach"]["reuse_interval_ms"] = 300000;
  write_file((dir / "campaign.json").string(), campaign.dump(2) + "\n");
  log << "wrote demo scenario to " << dir.string() << " (" << cfg.routers.size() << " routers, " << cfg.hosts.size()
      << " hosts)\n";
}

// ---------------------------------------------------------------------------
// discover
// ---------------------------------------------------------------------------

inline void cmd_discover(const CampaignConfig& c, std::ostream& log = std::cout) {
  c.validate_for("discover");
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  RunManifest manifest(out, "discover");
  const fs::path pairs_file = out / "pairs.jsonl";
  auto kept = completed_records(pairs_file, manifest, "prefix");
  rewrite_records(pairs_file, kept);

  std::vector<Prefix> todo;
  for (const auto& p : read_prefixes(c.inputs.prefixes)) {
    if (!manifest.done(p.to_string())) todo.push_back(p);
  }
  std::size_t found = 0;
  if (!todo.empty()) {
    auto transport = make_transport(c);
    auto result = run_discovery(todo, c.discovery_caps, *transport, c.seed, c.discovery);
    for (const auto& st : result.prefixes) {
      if (!st.done) continue;
      for (const auto& pair : st.pairs_found) append_record(pairs_file, pair_record(st.prefix, pair));
      found += st.pairs_found.size();
      manifest.mark(st.prefix.to_string());
    }
    std::ostringstream tsv;
    tsv << "prefix\tsent\tpairs\tdone\n";
    for (const auto& st : result.prefixes) {
      tsv << st.prefix.to_string() << '\t' << st.sent << '\t' << st.pairs_found.size() << '\t' << (st.done ? 1 : 0) << '\n';
    }
    write_file((out / "discovery_summary.tsv").string(), tsv.str());
    if (result.partial) throw TransportError("discovery aborted: " + result.error);
  }
  log << "discover: " << todo.size() << " prefixes scanned, " << found << " pairs\n";
}

// ---------------------------------------------------------------------------
// isav
// ---------------------------------------------------------------------------

inline std::map<Prefix, std::vector<DataPair>> read_pairs(const std::string& path) {
  std::map<Prefix, std::vector<DataPair>> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      auto [prefix, pair] = pair_from_record(json::parse(line));
      out[prefix].push_back(pair);
    } catch (const json::exception& e) {
      throw InputError(path + ": " + e.what());
    }
  }
  return out;
}

inline std::map<Prefix, std::vector<Ipv6Address>> read_hitlist(const std::string& path) {
  std::map<Prefix, std::vector<Ipv6Address>> out;
  if (path.empty()) return out;
  for (const auto& row : read_table(path)) {
    if (row.size() < 2) throw InputError(path + ": expected '<prefix> <address>'");
    out[Prefix::parse(row[0])].push_back(Ipv6Address::parse(row[1]));
  }
  return out;
}

// One data pair per prefix: the first pair of each distinct periphery is a
// candidate; with several, a one-shot rcv1 picks a moderately limited one.
inline std::map<Prefix, DataPair> choose_rvps(const std::map<Prefix, std::vector<DataPair>>& pairs, Transport& transport,
                                              const MeasurementParams& params, BurstPacer& pacer) {
  std::map<Prefix, DataPair> out;
  for (const auto& [prefix, list] : pairs) {
    std::vector<DataPair> cands;
    std::set<Ipv6Address> seen;
    for (const auto& p : list) {
      if (seen.insert(p.periphery).second) cands.push_back(p);
    }
    if (cands.empty()) continue;
    if (cands.size() == 1) {
      out[prefix] = cands.front();
      continue;
    }
    std::vector<std::pair<DataPair, double>> scored;
    for (const auto& p : cands) {
      auto s = measure_rcv(transport, p.target, p.error_kind, params.n_probe, std::nullopt, p.periphery,
                           params.receive_window_ms, &pacer);
      scored.emplace_back(p, s.rcv);
    }
    if (auto pick = select_rvp(scored, params.n_probe)) out[prefix] = *pick;
  }
  return out;
}

inline std::map<Prefix, std::string> read_isav_truth(const std::string& path) {
  std::map<Prefix, std::string> out;
  for (const auto& row : read_table(path)) {
    if (row.size() < 2) throw InputError(path + ": expected '<prefix> <state>'");
    out[Prefix::parse(row[0])] = row[1];
  }
  return out;
}

inline void cmd_isav(const CampaignConfig& c, std::ostream& log = std::cout) {
  c.validate_for("isav");
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  RunManifest manifest(out, "isav");
  const fs::path verdict_file = out / "isav_verdicts.jsonl";
  auto kept = completed_records(verdict_file, manifest, "prefix");
  rewrite_records(verdict_file, kept);

  const auto as_map = read_as_map(c.inputs.as_map);
  auto all_pairs = read_pairs(c.pairs_path());
  std::map<Prefix, std::vector<DataPair>> todo;
  for (auto& [p, list] : all_pairs) {
    if (!manifest.done(p.to_string())) todo[p] = std::move(list);
  }
  if (!todo.empty()) {
    auto transport = make_transport(c);
    BurstPacer pacer(c.burst);
    auto chosen = choose_rvps(todo, *transport, c.isav, pacer);
    const Ipv6Address local = transport->local_address();
    auto campaign = run_isav_campaign(chosen, c.isav, *transport, local, c.seed, c.burst);
    run_supplemental_echo(campaign, read_hitlist(c.inputs.hitlist), c.isav, *transport, local, c.seed, c.burst);
    for (const auto& [p, r] : campaign.results) {
      append_record(verdict_file, isav_record(r));
      manifest.mark(p.to_string());
    }
  }

  // summaries from the complete record file
  std::map<Prefix, IsavOutcome> verdicts;
  std::map<Prefix, double> consistency;
  {
    std::ifstream in(verdict_file);
    for (std::string line; std::getline(in, line);) {
      const json j = json::parse(line);
      const Prefix p = Prefix::parse(j.at("prefix").get<std::string>());
      const std::string v = j.at("verdict").get<std::string>();
      verdicts[p] = v == "deployed" ? IsavOutcome::Deployed : v == "vulnerable" ? IsavOutcome::Vulnerable : IsavOutcome::Uncertain;
      consistency[p] = j.value("mode_consistency", 1.0);
    }
  }
  std::map<Prefix, AsId> known_as;
  for (const auto& [p, v] : verdicts) {
    auto it = as_map.find(p);
    if (it == as_map.end()) throw InputError("no AS mapping for " + p.to_string());
    known_as[p] = it->second;
  }
  const auto ases = aggregate_as(verdicts, known_as);
  const auto s = summarize(verdicts, ases);

  std::ostringstream tsv;
  tsv << "category\tprefixes\tprefix_pct\tases\tas_pct\n";
  tsv << "vulnerable\t" << s.prefix_vulnerable << '\t' << pct(s.prefix_vulnerable, s.prefix_total()) << '\t'
      << s.as_vulnerable << '\t' << pct(s.as_vulnerable, s.as_total()) << '\n';
  tsv << "deployed\t" << s.prefix_deployed << '\t' << pct(s.prefix_deployed, s.prefix_total()) << '\t' << s.as_deployed
      << '\t' << pct(s.as_deployed, s.as_total()) << '\n';
  tsv << "uncertain\t" << s.prefix_uncertain << '\t' << pct(s.prefix_uncertain, s.prefix_total()) << "\t-\t-\n";
  tsv << "inconsistent\t-\t-\t" << s.as_inconsistent << '\t' << pct(s.as_inconsistent, s.as_total()) << '\n';
  tsv << "total\t" << s.prefix_total() << "\t100.00\t" << s.as_total() << "\t100.00\n";
  write_file((out / "isav_summary.tsv").string(), tsv.str());

  std::ostringstream as_lines;
  for (const auto& [as, v] : ases) {
    as_lines << json{{"as", as}, {"verdict", std::string(to_string(v.outcome))}, {"decided_prefixes", v.members.size()}}.dump()
             << '\n';
  }
  write_file((out / "isav_as.jsonl").string(), as_lines.str());

  if (!c.inputs.isav_truth.empty()) {
    const auto truth = read_isav_truth(c.inputs.isav_truth);
    std::size_t agree = 0, inverted = 0, uncertain = 0, total = 0;
    for (const auto& [p, v] : verdicts) {
      auto it = truth.find(p);
      if (it == truth.end()) continue;
      ++total;
      const std::string& t = it->second;
      if (v == IsavOutcome::Uncertain) {
        ++uncertain;
        if (t == "unmeasurable") ++agree;
      } else if ((v == IsavOutcome::Deployed && t == "deployed") || (v == IsavOutcome::Vulnerable && t == "vulnerable")) {
        ++agree;
      } else if (t != "unmeasurable") {
        ++inverted;
      }
    }
    double mc = 0.0;
    for (const auto& [p, m] : consistency) mc += m;
    std::ostringstream o;
    o << "metric\tvalue\n"
      << "prefixes\t" << total << "\nagree\t" << agree << "\nagreement_pct\t" << pct(agree, total) << "\nuncertain\t"
      << uncertain << "\ninverted\t" << inverted << "\nmean_mode_consistency\t"
      << fmt(consistency.empty() ? 0.0 : mc / consistency.size()) << '\n';
    write_file((out / "isav_oracle.tsv").string(), o.str());
  }
  log << "isav: " << s.prefix_total() << " prefixes (" << s.prefix_vulnerable << " vulnerable, " << s.prefix_deployed
      << " deployed, " << s.prefix_uncertain << " uncertain), " << s.as_total() << " ASes\n";
}

// ---------------------------------------------------------------------------
// reach
// ---------------------------------------------------------------------------

inline std::vector<DataPair> read_pair_list(const std::string& path) {
  std::vector<DataPair> out;
  for (const auto& [p, list] : read_pairs(path)) out.insert(out.end(), list.begin(), list.end());
  return out;
}

inline void cmd_reach(const CampaignConfig& c, std::ostream& log = std::cout) {
  c.validate_for("reach");
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  RunManifest manifest(out, "reach");
  const fs::path verdict_file = out / "reach_verdicts.jsonl";
  auto kept = completed_records(verdict_file, manifest, "target");
  rewrite_records(verdict_file, kept);

  std::vector<Ipv6Address> todo;
  for (const auto& t : read_addresses(c.inputs.reach_targets)) {
    if (!manifest.done(t.to_string())) todo.push_back(t);
  }
  if (!todo.empty()) {
    auto transport = make_transport(c);
    const CoordinateBook book = c.inputs.coordinates.empty() ? CoordinateBook{} : read_coordinates(c.inputs.coordinates);
    ReachOptions opts = c.reach_opts;
    opts.seed = c.seed;
    opts.precheck = c.backend == "sim";
    auto result = run_reach_campaign(todo, read_pair_list(c.inputs.proxy_rvps), c.reach, *transport, geo_estimator(book), opts);
    for (const auto& t : todo) {
      append_record(verdict_file, reach_record(result.results.at(t)));
      manifest.mark(t.to_string());
    }
  }

  std::map<Ipv6Address, ReachVerdict> verdicts;
  std::size_t counts[3] = {0, 0, 0};
  {
    std::ifstream in(verdict_file);
    for (std::string line; std::getline(in, line);) {
      const json j = json::parse(line);
      ReachVerdict v;
      v.avg1 = j.at("avg1").get<double>();
      v.avg2 = j.at("avg2").get<double>();
      if (!j.at("ratio").is_null()) v.ratio = j.at("ratio").get<double>();
      v.k = j.at("k").get<int>();
      const std::string s = j.at("verdict").get<std::string>();
      v.outcome = s == "connected" ? ReachOutcome::Connected : s == "unconnected" ? ReachOutcome::Unconnected : ReachOutcome::Uncertain;
      ++counts[static_cast<int>(v.outcome)];
      verdicts[Ipv6Address::parse(j.at("target").get<std::string>())] = v;
    }
  }
  std::ostringstream sum;
  sum << "verdict\tcount\tpct\n";
  const std::size_t n = verdicts.size();
  sum << "connected\t" << counts[0] << '\t' << pct(counts[0], n) << '\n';
  sum << "unconnected\t" << counts[1] << '\t' << pct(counts[1], n) << '\n';
  sum << "uncertain\t" << counts[2] << '\t' << pct(counts[2], n) << '\n';
  sum << "total\t" << n << "\t100.00\n";
  write_file((out / "reach_summary.tsv").string(), sum.str());

  if (!c.inputs.reach_truth.empty()) {
    const auto rep = evaluate(verdicts, read_reach_truth(c.inputs.reach_truth), c.reach_lambdas);
    std::ostringstream ev;
    ev << "lambda\ttp\tfp\ttn\tfn\tprecision\trecall\taccuracy\tf_score\n";
    for (const auto& r : rep.rows) {
      ev << fmt(r.lambda, 2) << '\t' << r.tp << '\t' << r.fp << '\t' << r.tn << '\t' << r.fn << '\t' << fmt(r.precision)
         << '\t' << fmt(r.recall) << '\t' << fmt(r.accuracy) << '\t' << fmt(r.f_score) << '\n';
    }
    ev << "# auc\t" << fmt(rep.auc) << "\n# evaluated\t" << rep.evaluated << "\n# excluded_uncertain\t" << rep.excluded << '\n';
    write_file((out / "reach_eval.tsv").string(), ev.str());
    std::ostringstream roc;
    roc << "fpr\ttpr\n";
    for (const auto& [f, t] : rep.roc_points) roc << fmt(f) << '\t' << fmt(t) << '\n';
    write_file((out / "reach_roc.tsv").string(), roc.str());
  }
  log << "reach: " << n << " targets (" << counts[0] << " connected, " << counts[1] << " unconnected, " << counts[2]
      << " uncertain)\n";
}

// ---------------------------------------------------------------------------
// rl-classify
// ---------------------------------------------------------------------------

inline std::vector<RlTarget> read_rl_targets(const std::string& path) {
  std::vector<RlTarget> out;
  for (const auto& row : read_table(path)) {
    if (row.size() < 2) throw InputError(path + ": expected '<probe_dst> <origin> [kind]'");
    RlTarget t{Ipv6Address::parse(row[0]), Ipv6Address::parse(row[1]), IcmpKind::DestinationUnreachable};
    if (row.size() > 2) t.kind = parse_icmp_kind(row[2]);
    out.push_back(t);
  }
  return out;
}

inline void cmd_rl_classify(const CampaignConfig& c, std::ostream& log = std::cout) {
  c.validate_for("rl-classify");
  const fs::path out(c.out_dir);
  fs::create_directories(out);
  RunManifest manifest(out, "rl-classify");
  const fs::path class_file = out / "rl_classes.jsonl";
  auto kept = completed_records(class_file, manifest, "origin");
  rewrite_records(class_file, kept);

  std::vector<RlTarget> todo;
  for (const auto& t : read_rl_targets(c.inputs.rl_targets)) {
    if (!manifest.done(t.origin.to_string())) todo.push_back(t);
  }
  if (!todo.empty()) {
    auto transport = make_transport(c);
    for (const auto& r : run_rl_classification(todo, c.rl, *transport, c.seed, c.burst)) {
      append_record(class_file, rl_record(r));
      manifest.mark(r.target.origin.to_string());
    }
  }

  std::map<std::string, std::string> classes;
  {
    std::ifstream in(class_file);
    for (std::string line; std::getline(in, line);) {
      const json j = json::parse(line);
      classes[j.at("origin").get<std::string>()] = j.at("class").get<std::string>();
    }
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& [o, cls] : classes) ++counts[cls];
  std::ostringstream tsv;
  tsv << "class\tcount\tpct\n";
  for (const char* k : {"global", "strict", "loose", "unclassified"}) {
    tsv << k << '\t' << counts[k] << '\t' << pct(counts[k], classes.size()) << '\n';
  }
  tsv << "total\t" << classes.size() << "\t100.00\n";
  if (!c.inputs.rl_truth.empty()) {
    std::size_t agree = 0;
    std::size_t total = 0;
    for (const auto& row : read_table(c.inputs.rl_truth)) {
      if (row.size() < 2) continue;
      auto it = classes.find(Ipv6Address::parse(row[0]).to_string());
      if (it == classes.end()) continue;
      ++total;
      agree += it->second == row[1] ? 1 : 0;
    }
    tsv << "# oracle_agreement\t" << agree << '/' << total << '\t' << pct(agree, total) << '\n';
  }
  write_file((out / "rl_summary.tsv").string(), tsv.str());
  log << "rl-classify: " << classes.size() << " targets\n";
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline void cmd_report(const fs::path& dir, std::ostream& log = std::cout) {
  if (!fs::is_directory(dir)) throw InputError("no results directory: " + dir.string());
  const std::pair<const char*, const char*> sections[] = {
      {"discovery_summary.tsv", "Discovery"}, {"isav_summary.tsv", "ISAV deployment"},
      {"isav_oracle.tsv", "ISAV vs. planted truth"}, {"rl_summary.tsv", "Rate limiting classes"},
      {"reach_summary.tsv", "Reachability verdicts"}, {"reach_eval.tsv", "Reachability evaluation"}};
  std::size_t shown = 0;
  for (const auto& [file, title] : sections) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) continue;
    std::string body = read_file(p.string());
    if (std::string(file) == "discovery_summary.tsv") {
      // condensed: totals only
      std::size_t prefixes = 0, sent = 0, pairs = 0;
      for (const auto& row : read_table(p.string())) {
        if (row[0] == "prefix" || row.size() < 3) continue;
        ++prefixes;
        sent += std::stoull(row[1]);
        pairs += std::stoull(row[2]);
      }
      body = "prefixes\t" + std::to_string(prefixes) + "\nprobes\t" + std::to_string(sent) + "\npairs\t" +
             std::to_string(pairs) + "\n";
    }
    log << "== " << title << " ==\n" << body << '\n';
    ++shown;
  }
  if (shown == 0) throw InputError("no result files in " + dir.string());
}

}  // namespace ivantage
