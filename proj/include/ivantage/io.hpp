#pragma once

// Text formats: scenario JSON, line-delimited records, and the small
// whitespace/tab separated input files used by the campaign commands.

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivantage/isav.hpp"
#include "ivantage/model.hpp"
#include "ivantage/reach.hpp"
#include "ivantage/simnet.hpp"

namespace ivantage {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SimConfig
// ---------------------------------------------------------------------------

inline json limiter_to_json(const RateLimiterSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UnlimitedSpec>) {
          return {{"type", "unlimited"}};
        } else if constexpr (std::is_same_v<T, TokenBucketSpec>) {
          return {{"type", "token_bucket"},
                  {"capacity", s.capacity},
                  {"refill_interval_ms", s.refill_interval_ms},
                  {"scope", s.scope == LimiterScope::Global ? "global" : "per_source"}};
        } else {
          return {{"type", "strict_single"}, {"window_ms", s.window_ms}};
        }
      },
      spec);
}

inline RateLimiterSpec limiter_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "unlimited") return UnlimitedSpec{};
  if (type == "token_bucket") {
    TokenBucketSpec s;
    s.capacity = j.value("capacity", s.capacity);
    s.refill_interval_ms = j.value("refill_interval_ms", s.refill_interval_ms);
    const std::string scope = j.value("scope", std::string("global"));
    if (scope == "global") {
      s.scope = LimiterScope::Global;
    } else if (scope == "per_source") {
      s.scope = LimiterScope::PerSource;
    } else {
      throw ConfigError("unknown limiter scope: " + scope);
    }
    return s;
  }
  if (type == "strict_single") {
    StrictSingleSpec s;
    s.window_ms = j.value("window_ms", s.window_ms);
    return s;
  }
  throw ConfigError("unknown limiter type: " + type);
}

inline json link_to_json(const LinkModel& m) {
  return {{"base_owd_ms", m.base_owd_ms}, {"jitter_frac", m.jitter_frac}, {"loss_prob", m.loss_prob}};
}

inline LinkModel link_from_json(const json& j) {
  LinkModel m;
  m.base_owd_ms = j.value("base_owd_ms", m.base_owd_ms);
  m.jitter_frac = j.value("jitter_frac", m.jitter_frac);
  m.loss_prob = j.value("loss_prob", m.loss_prob);
  return m;
}

inline json sim_config_to_json(const SimConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["prober"] = {{"address", cfg.prober.address.to_string()}, {"local_prefix", cfg.prober.local_prefix.to_string()}};
  j["default_link"] = link_to_json(cfg.default_link);
  j["routers"] = json::array();
  for (const auto& r : cfg.routers) {
    j["routers"].push_back({{"address", r.address.to_string()},
                            {"served_prefix", r.served_prefix.to_string()},
                            {"limiter", limiter_to_json(r.limiter)},
                            {"echo_limiter", limiter_to_json(r.echo_limiter)},
                            {"isav_ingress", r.isav_ingress},
                            {"echo_responder", r.echo_responder},
                            {"unreachable_reply", std::string(to_string(r.unreachable_reply))}});
  }
  j["hosts"] = json::array();
  for (const auto& h : cfg.hosts) {
    j["hosts"].push_back({{"address", h.address.to_string()}, {"responds_to_echo", h.responds_to_echo}});
  }
  j["links"] = json::array();
  for (const auto& l : cfg.links) {
    json e = link_to_json(l.model);
    e["a"] = l.a.to_string();
    e["b"] = l.b.to_string();
    j["links"].push_back(std::move(e));
  }
  j["unreachable_pairs"] = json::array();
  for (const auto& c : cfg.unreachable_pairs) {
    j["unreachable_pairs"].push_back({{"src_prefix", c.src_prefix.to_string()}, {"dst", c.dst.to_string()}});
  }
  return j;
}

inline SimConfig sim_config_from_json(const json& j) {
  try {
    SimConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{0});
    const auto& p = j.at("prober");
    cfg.prober.address = Ipv6Address::parse(p.at("address").get<std::string>());
    cfg.prober.local_prefix = Prefix::parse(p.at("local_prefix").get<std::string>());
    if (j.contains("default_link")) cfg.default_link = link_from_json(j.at("default_link"));
    for (const auto& r : j.value("routers", json::array())) {
      SimRouter sr;
      sr.address = Ipv6Address::parse(r.at("address").get<std::string>());
      sr.served_prefix = Prefix::parse(r.at("served_prefix").get<std::string>());
      if (r.contains("limiter")) sr.limiter = limiter_from_json(r.at("limiter"));
      if (r.contains("echo_limiter")) sr.echo_limiter = limiter_from_json(r.at("echo_limiter"));
      sr.isav_ingress = r.value("isav_ingress", false);
      sr.echo_responder = r.value("echo_responder", true);
      if (r.contains("unreachable_reply")) sr.unreachable_reply = parse_icmp_kind(r.at("unreachable_reply").get<std::string>());
      cfg.routers.push_back(std::move(sr));
    }
    for (const auto& h : j.value("hosts", json::array())) {
      cfg.hosts.push_back({Ipv6Address::parse(h.at("address").get<std::string>()), h.value("responds_to_echo", true)});
    }
    for (const auto& l : j.value("links", json::array())) {
      cfg.links.push_back({Ipv6Address::parse(l.at("a").get<std::string>()), Ipv6Address::parse(l.at("b").get<std::string>()),
                           link_from_json(l)});
    }
    for (const auto& c : j.value("unreachable_pairs", json::array())) {
      cfg.unreachable_pairs.push_back(
          {Prefix::parse(c.at("src_prefix").get<std::string>()), Ipv6Address::parse(c.at("dst").get<std::string>())});
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad scenario: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// Non-empty lines with '#' comments stripped, split on whitespace.
inline std::vector<std::vector<std::string>> read_table(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> cols;
    for (std::string c; ls >> c;) cols.push_back(c);
    if (!cols.empty()) rows.push_back(std::move(cols));
  }
  return rows;
}

inline std::vector<Prefix> read_prefixes(const std::string& path) {
  std::vector<Prefix> out;
  for (const auto& row : read_table(path)) out.push_back(Prefix::parse(row[0]));
  return out;
}

inline std::vector<Ipv6Address> read_addresses(const std::string& path) {
  std::vector<Ipv6Address> out;
  for (const auto& row : read_table(path)) out.push_back(Ipv6Address::parse(row[0]));
  return out;
}

inline std::map<Prefix, AsId> read_as_map(const std::string& path) {
  std::map<Prefix, AsId> out;
  for (const auto& row : read_table(path)) {
    if (row.size() < 2) throw InputError(path + ": expected '<prefix> <asn>'");
    out[Prefix::parse(row[0])] = static_cast<AsId>(std::stoul(row[1]));
  }
  return out;
}

inline CoordinateBook read_coordinates(const std::string& path) {
  CoordinateBook book;
  for (const auto& row : read_table(path)) {
    if (row.size() < 3) throw InputError(path + ": expected '<address_or_prefix> <lat> <lon>'");
    book.add(Prefix::parse(row[0]), GeoPoint{std::stod(row[1]), std::stod(row[2])});
  }
  return book;
}

// "<target> <0|1>", 1 meaning unconnected.
inline std::map<Ipv6Address, bool> read_reach_truth(const std::string& path) {
  std::map<Ipv6Address, bool> out;
  for (const auto& row : read_table(path)) {
    if (row.size() < 2) throw InputError(path + ": expected '<address> <0|1>'");
    out[Ipv6Address::parse(row[0])] = row[1] == "1";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records (one JSON object per line)
// ---------------------------------------------------------------------------

inline json pair_record(const Prefix& prefix, const DataPair& p) {
  return {{"prefix", prefix.to_string()},
          {"target", p.target.to_string()},
          {"periphery", p.periphery.to_string()},
          {"error_kind", std::string(to_string(p.error_kind))},
          {"t_ms", p.discovered_at}};
}

inline std::pair<Prefix, DataPair> pair_from_record(const json& j) {
  DataPair p;
  p.target = Ipv6Address::parse(j.at("target").get<std::string>());
  p.periphery = Ipv6Address::parse(j.at("periphery").get<std::string>());
  p.error_kind = parse_icmp_kind(j.at("error_kind").get<std::string>());
  p.discovered_at = j.value("t_ms", Timestamp{0});
  return {Prefix::parse(j.at("prefix").get<std::string>()), p};
}

inline json trace_record(const IcmpObservation& o) {
  return {{"t_ms", o.received_at},
          {"kind", std::string(to_string(o.kind))},
          {"origin", o.origin.to_string()},
          {"quoted_dst", o.quoted_dst ? json(o.quoted_dst->to_string()) : json(nullptr)}};
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json isav_record(const IsavPrefixResult& r) {
  return {{"prefix", r.prefix.to_string()},
          {"rvp", r.origin.to_string()},
          {"probe_dst", r.probe_dst.to_string()},
          {"kind", std::string(to_string(r.kind))},
          {"avg1", r.triple.avg1()},
          {"avg2", r.triple.avg2()},
          {"avg3", r.triple.avg3()},
          {"verdict", std::string(to_string(r.verdict.outcome))},
          {"rule", std::string(to_string(r.verdict.rule))},
          {"ratio31", opt_json(r.verdict.ratio31)},
          {"ratio23", opt_json(r.verdict.ratio23)},
          {"mode_consistency", r.triple.mode_consistency()},
          {"k", r.triple.samples1.size()}};
}

inline json reach_record(const ReachTargetResult& r) {
  std::string verdict(to_string(r.verdict.outcome));
  return {{"target", r.target.to_string()},
          {"avg1", r.verdict.avg1},
          {"avg2", r.verdict.avg2},
          {"ratio", opt_json(r.verdict.ratio)},
          {"verdict", verdict},
          {"echo_silent", r.echo_silent},
          {"k", r.verdict.k}};
}

inline json rl_record(const RlResult& r) {
  return {{"origin", r.target.origin.to_string()},
          {"probe_dst", r.target.probe_dst.to_string()},
          {"kind", std::string(to_string(r.target.kind))},
          {"avg1", r.avg1},
          {"avg2", r.avg2},
          {"n", r.n},
          {"class", std::string(to_string(r.cls))}};
}

// Fixed formatting for tables so reruns are byte-identical.
inline std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace ivantage
