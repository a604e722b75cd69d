#pragma once

// Inbound source address validation inference. For every prefix one remote
// vantage point is loaded three ways: probes only (rcv1), probes plus noise
// spoofed from the local network (rcv2), probes plus noise spoofed from the
// target network (rcv3). Noise from the target network is dropped by ISAV,
// so rcv3 stays close to rcv1 where ISAV is deployed.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/ratelimit.hpp"
#include "ivantage/transport.hpp"

namespace ivantage {

enum class IsavOutcome : std::uint8_t { Deployed, Vulnerable, Uncertain };

inline std::string_view to_string(IsavOutcome v) {
  switch (v) {
    case IsavOutcome::Deployed: return "deployed";
    case IsavOutcome::Vulnerable: return "vulnerable";
    case IsavOutcome::Uncertain: return "uncertain";
  }
  return "unknown";
}

// Which inference rule decided the verdict.
enum class IsavRule : std::uint8_t {
  NoBaseline,       // avg1 == 0
  NoiseNotFiltered, // avg3 < lambda * avg1
  NoiseFiltered,    // avg2 < lambda * avg3
  BothSmallerRatio, // both fired, decided by the smaller ratio
  Neither,
};

inline std::string_view to_string(IsavRule r) {
  switch (r) {
    case IsavRule::NoBaseline: return "no_baseline";
    case IsavRule::NoiseNotFiltered: return "rcv3_below_rcv1";
    case IsavRule::NoiseFiltered: return "rcv2_below_rcv3";
    case IsavRule::BothSmallerRatio: return "both_smaller_ratio";
    case IsavRule::Neither: return "neither";
  }
  return "unknown";
}

struct IsavVerdict {
  IsavOutcome outcome = IsavOutcome::Uncertain;
  IsavRule rule = IsavRule::Neither;
  std::optional<double> ratio31;  // avg3 / avg1
  std::optional<double> ratio23;  // avg2 / avg3
};

inline IsavVerdict infer_isav(double avg1, double avg2, double avg3, double lambda) {
  IsavVerdict v;
  if (avg1 > 0.0) v.ratio31 = avg3 / avg1;
  if (avg3 > 0.0) v.ratio23 = avg2 / avg3;
  if (!(avg1 > 0.0)) {
    v.rule = IsavRule::NoBaseline;
    return v;
  }
  const bool not_filtered = avg3 < lambda * avg1;
  const bool filtered = avg2 < lambda * avg3;
  if (not_filtered && filtered) {
    v.rule = IsavRule::BothSmallerRatio;
    if (*v.ratio31 < *v.ratio23) {
      v.outcome = IsavOutcome::Vulnerable;
    } else if (*v.ratio23 < *v.ratio31) {
      v.outcome = IsavOutcome::Deployed;
    }
  } else if (not_filtered) {
    v.rule = IsavRule::NoiseNotFiltered;
    v.outcome = IsavOutcome::Vulnerable;
  } else if (filtered) {
    v.rule = IsavRule::NoiseFiltered;
    v.outcome = IsavOutcome::Deployed;
  }
  return v;
}

struct RcvTriple {
  std::vector<RcvSample> samples1;
  std::vector<RcvSample> samples2;
  std::vector<RcvSample> samples3;

  double avg1() const { return mean_rcv(samples1); }
  double avg2() const { return mean_rcv(samples2); }
  double avg3() const { return mean_rcv(samples3); }

  // Mean over the three lists of the share of samples equal to the list's mode.
  double mode_consistency() const {
    return (mode_share(samples1) + mode_share(samples2) + mode_share(samples3)) / 3.0;
  }
};

// Prefers RVPs whose one-shot rcv1 shows moderate limiting (1 < rcv1 < n);
// falls back to the first candidate when none does.
inline std::optional<DataPair> select_rvp(const std::vector<std::pair<DataPair, double>>& candidates, int n) {
  for (const auto& [pair, rcv1] : candidates) {
    if (rcv1 > 1.0 && rcv1 < static_cast<double>(n)) return pair;
  }
  if (candidates.empty()) return std::nullopt;
  return candidates.front().first;
}

struct IsavPrefixResult {
  Prefix prefix;
  Ipv6Address probe_dst;  // unreachable target, or the responder in echo mode
  Ipv6Address origin;     // RVP whose replies are counted
  IcmpKind kind = IcmpKind::DestinationUnreachable;
  RcvTriple triple;
  IsavVerdict verdict;
  int repeats = 0;
};

struct IsavBurst {
  int round = 0;
  int phase = 1;  // 1, 2 or 3
  Prefix prefix;
  Ipv6Address rvp;
};

struct IsavCampaignResult {
  std::map<Prefix, IsavPrefixResult> results;
  std::vector<IsavBurst> schedule;
};

struct IsavProbeTarget {
  Ipv6Address probe_dst;
  Ipv6Address origin;
  IcmpKind kind = IcmpKind::DestinationUnreachable;
};

// Phase-ordered measurement of rcv1/rcv2/rcv3 for every prefix: round i of
// rcv1 for all prefixes, then rcv2, then rcv3, repeated `repeats` times.
inline IsavCampaignResult run_isav_targets(const std::map<Prefix, IsavProbeTarget>& targets, const MeasurementParams& base,
                                           Transport& transport, const Ipv6Address& local_vp, std::uint64_t seed,
                                           BurstPolicy policy = {}) {
  base.validate();
  BurstPacer pacer(policy);
  IsavCampaignResult out;
  struct Plan {
    Prefix prefix;
    IsavProbeTarget target;
    MeasurementParams params;
    SpoofSources spoof;
  };
  std::vector<Plan> plans;
  for (const auto& [prefix, t] : targets) {
    const auto params = params_for_kind(t.kind, base);
    const std::uint64_t key = hash_keys({seed, prefix.base().hi(), prefix.base().lo(), prefix.length()});
    plans.push_back({prefix, t, params, spoof_sources(local_vp, t.origin, key)});
    auto& r = out.results[prefix];
    r.prefix = prefix;
    r.probe_dst = t.probe_dst;
    r.origin = t.origin;
    r.kind = t.kind;
    r.repeats = params.repeats;
  }
  for (int round = 0; round < base.repeats; ++round) {
    for (int phase = 1; phase <= 3; ++phase) {
      for (const auto& p : plans) {
        std::optional<NoiseSpec> noise;
        if (phase == 2) noise = NoiseSpec{p.params.m_noise, p.spoof.local_spoof};
        if (phase == 3) noise = NoiseSpec{p.params.m_noise, p.spoof.target_spoof};
        auto s = measure_rcv(transport, p.target.probe_dst, p.target.kind, p.params.n_probe, noise, p.target.origin,
                             p.params.receive_window_ms, &pacer);
        auto& triple = out.results[p.prefix].triple;
        (phase == 1 ? triple.samples1 : phase == 2 ? triple.samples2 : triple.samples3).push_back(s);
        out.schedule.push_back({round, phase, p.prefix, p.target.origin});
      }
    }
  }
  for (auto& [prefix, r] : out.results) {
    r.verdict = infer_isav(r.triple.avg1(), r.triple.avg2(), r.triple.avg3(), base.lambda);
  }
  return out;
}

inline IsavCampaignResult run_isav_campaign(const std::map<Prefix, DataPair>& prefix_rvps, const MeasurementParams& params,
                                            Transport& transport, const Ipv6Address& local_vp, std::uint64_t seed,
                                            BurstPolicy policy = {}) {
  std::map<Prefix, IsavProbeTarget> targets;
  for (const auto& [prefix, pair] : prefix_rvps) targets[prefix] = {pair.target, pair.periphery, pair.error_kind};
  return run_isav_targets(targets, params, transport, local_vp, seed, policy);
}

// Re-measures Uncertain prefixes through echo-reply rate limiting, probing the
// responders directly. Previously discovered RVPs are tried before extra
// (hitlist) targets; at most `max_candidates` responders per prefix.
inline void run_supplemental_echo(IsavCampaignResult& campaign, const std::map<Prefix, std::vector<Ipv6Address>>& extra_targets,
                                  const MeasurementParams& params, Transport& transport, const Ipv6Address& local_vp,
                                  std::uint64_t seed, BurstPolicy policy = {}, std::size_t max_candidates = 3) {
  std::map<Prefix, std::vector<Ipv6Address>> candidates;
  for (const auto& [prefix, r] : campaign.results) {
    if (r.verdict.outcome != IsavOutcome::Uncertain) continue;
    auto& list = candidates[prefix];
    list.push_back(r.origin);
    if (auto it = extra_targets.find(prefix); it != extra_targets.end()) {
      for (const auto& a : it->second) {
        if (std::find(list.begin(), list.end(), a) == list.end()) list.push_back(a);
      }
    }
    if (list.size() > max_candidates) list.resize(max_candidates);
  }
  for (std::size_t attempt = 0; attempt < max_candidates; ++attempt) {
    std::map<Prefix, IsavProbeTarget> batch;
    for (const auto& [prefix, list] : candidates) {
      if (attempt >= list.size()) continue;
      if (campaign.results[prefix].verdict.outcome != IsavOutcome::Uncertain) continue;
      batch[prefix] = {list[attempt], list[attempt], IcmpKind::EchoReply};
    }
    if (batch.empty()) break;
    auto echo = run_isav_targets(batch, params, transport, local_vp, seed + 1 + attempt, policy);
    for (auto& [prefix, r] : echo.results) {
      if (r.verdict.outcome != IsavOutcome::Uncertain) campaign.results[prefix] = r;
    }
    campaign.schedule.insert(campaign.schedule.end(), echo.schedule.begin(), echo.schedule.end());
  }
}

// ---------------------------------------------------------------------------
// AS aggregation
// ---------------------------------------------------------------------------

using AsId = std::uint32_t;

enum class AsOutcome : std::uint8_t { Vulnerable, Deployed, Inconsistent };

inline std::string_view to_string(AsOutcome v) {
  switch (v) {
    case AsOutcome::Vulnerable: return "vulnerable";
    case AsOutcome::Deployed: return "deployed";
    case AsOutcome::Inconsistent: return "inconsistent";
  }
  return "unknown";
}

struct AsVerdict {
  AsOutcome outcome = AsOutcome::Vulnerable;
  std::vector<std::pair<Prefix, IsavOutcome>> members;  // decided members only
};

inline std::map<AsId, AsVerdict> aggregate_as(const std::map<Prefix, IsavOutcome>& verdicts,
                                              const std::map<Prefix, AsId>& as_map) {
  std::map<AsId, AsVerdict> out;
  for (const auto& [prefix, v] : verdicts) {
    auto it = as_map.find(prefix);
    if (it == as_map.end()) throw InputError("no AS mapping for " + prefix.to_string());
    if (v == IsavOutcome::Uncertain) continue;
    out[it->second].members.emplace_back(prefix, v);
  }
  for (auto& [as, agg] : out) {
    bool any_v = false;
    bool any_d = false;
    for (const auto& [p, v] : agg.members) {
      any_v |= v == IsavOutcome::Vulnerable;
      any_d |= v == IsavOutcome::Deployed;
    }
    agg.outcome = any_v && any_d ? AsOutcome::Inconsistent : any_d ? AsOutcome::Deployed : AsOutcome::Vulnerable;
  }
  return out;
}

struct IsavSummary {
  std::size_t prefix_vulnerable = 0;
  std::size_t prefix_deployed = 0;
  std::size_t prefix_uncertain = 0;
  std::size_t as_vulnerable = 0;
  std::size_t as_deployed = 0;
  std::size_t as_inconsistent = 0;

  std::size_t prefix_total() const { return prefix_vulnerable + prefix_deployed + prefix_uncertain; }
  std::size_t as_total() const { return as_vulnerable + as_deployed + as_inconsistent; }
};

inline IsavSummary summarize(const std::map<Prefix, IsavOutcome>& verdicts, const std::map<AsId, AsVerdict>& ases) {
  IsavSummary s;
  for (const auto& [p, v] : verdicts) {
    if (v == IsavOutcome::Vulnerable) ++s.prefix_vulnerable;
    if (v == IsavOutcome::Deployed) ++s.prefix_deployed;
    if (v == IsavOutcome::Uncertain) ++s.prefix_uncertain;
  }
  for (const auto& [as, v] : ases) {
    if (v.outcome == AsOutcome::Vulnerable) ++s.as_vulnerable;
    if (v.outcome == AsOutcome::Deployed) ++s.as_deployed;
    if (v.outcome == AsOutcome::Inconsistent) ++s.as_inconsistent;
  }
  return s;
}

inline std::map<Prefix, IsavOutcome> outcomes(const IsavCampaignResult& c) {
  std::map<Prefix, IsavOutcome> out;
  for (const auto& [p, r] : c.results) out[p] = r.verdict.outcome;
  return out;
}

}  // namespace ivantage
