#pragma once

// rcv measurements under probe-only and probe+noise load, rate limiting
// classification, and the packet-count / noise-ratio calibration sweeps.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/transport.hpp"

namespace ivantage {

struct RcvSample {
  int rcv = 0;
  int n_sent = 0;
  bool with_noise = false;
  int m_noise = 0;
  Timestamp t = 0;

  bool operator==(const RcvSample&) const = default;
};

struct NoiseSpec {
  int m = 0;
  Ipv6Address spoof_src;
};

// Spacing and inter-burst gaps applied by every engine that triggers rate
// limiting on a remote node.
struct BurstPolicy {
  DurationMs spacing_ms = 1;        // between consecutive packets of one burst
  DurationMs min_gap_ms = 2000;     // between bursts at the same node
  DurationMs echo_gap_ms = 10000;   // same, for echo-reply bursts
  DurationMs slot_ms = 1000;        // bursts start on slot boundaries
};

// Echo-reply limiting is looser; those measurements use N = M = 500.
inline MeasurementParams params_for_kind(IcmpKind kind, MeasurementParams base) {
  if (kind == IcmpKind::EchoReply) {
    base.n_probe = 500;
    base.m_noise = 500;
  }
  return base;
}

// Builds one burst of `n` probes and `m` noise packets to `dst`, spread
// uniformly so that noise precedes each probe in proportion M/N. Probe packets
// take ids [first_id, first_id + n); noise takes the following m ids.
inline SendPlan build_burst(const Ipv6Address& local, const Ipv6Address& dst, int n, const std::optional<NoiseSpec>& noise,
                            ProbeId first_id, DurationMs spacing_ms = 1) {
  const int m = noise ? noise->m : 0;
  const long total = static_cast<long>(n) + m;
  SendPlan plan;
  plan.packets.reserve(static_cast<std::size_t>(total));
  ProbeId probe_id = first_id;
  ProbeId noise_id = first_id + static_cast<ProbeId>(n);
  for (long i = 0; i < total; ++i) {
    const bool is_probe = ((i + 1) * n) / total > (i * n) / total;
    ProbePacket p;
    p.dst = dst;
    if (is_probe) {
      p.src = local;
      p.probe_id = probe_id++;
    } else {
      p.src = noise->spoof_src;
      p.probe_id = noise_id++;
    }
    plan.add(i * spacing_ms, p);
  }
  return plan;
}

// Tracks when each remote node was last loaded so bursts at one node stay
// apart, and aligns burst starts to slot boundaries.
class BurstPacer {
 public:
  explicit BurstPacer(BurstPolicy policy = {}) : policy_(policy) {}

  const BurstPolicy& policy() const { return policy_; }

  void wait_for(Transport& transport, const Ipv6Address& node, IcmpKind kind, std::size_t burst_packets) {
    Timestamp t = transport.now();
    if (auto it = last_end_.find(node); it != last_end_.end()) {
      DurationMs gap = kind == IcmpKind::EchoReply ? policy_.echo_gap_ms : policy_.min_gap_ms;
      const auto cap_gap = static_cast<DurationMs>(std::ceil(static_cast<double>(burst_packets) * 1000.0 /
                                                             std::max(1.0, transport.max_pps())));
      gap = std::max(gap, cap_gap);
      t = std::max(t, it->second + gap);
    }
    if (policy_.slot_ms > 0 && t % policy_.slot_ms != 0) t += policy_.slot_ms - t % policy_.slot_ms;
    transport.sleep_until(t);
  }

  void record(const Ipv6Address& node, Timestamp burst_end) { last_end_[node] = burst_end; }

 private:
  BurstPolicy policy_;
  std::map<Ipv6Address, Timestamp> last_end_;
};

// Sends `n` probes to `rvp_target` (plus interleaved noise) in one burst and
// counts observations of `kind` quoting or answering those probes. For error
// kinds `expected_origin` is the periphery; for echo replies it is the target.
inline RcvSample measure_rcv(Transport& transport, const Ipv6Address& rvp_target, IcmpKind kind, int n,
                             const std::optional<NoiseSpec>& noise, const std::optional<Ipv6Address>& expected_origin,
                             DurationMs receive_window_ms, BurstPacer* pacer = nullptr) {
  if (n < 1) throw InputError("measure_rcv needs n >= 1");
  const int m = noise ? noise->m : 0;
  const Ipv6Address node = expected_origin.value_or(rvp_target);
  if (pacer) pacer->wait_for(transport, node, kind, static_cast<std::size_t>(n + m));
  const DurationMs spacing = pacer ? pacer->policy().spacing_ms : 1;

  const ProbeId first = transport.reserve_ids(static_cast<std::size_t>(n + m));
  SendPlan plan = build_burst(transport.local_address(), rvp_target, n, noise, first, spacing);

  CollectWindow window;
  window.open_at = transport.now();
  window.duration_ms = plan.span() + receive_window_ms;
  window.filter.kind = kind;
  window.filter.origin = expected_origin;
  window.filter.probe_ids = std::make_pair(first, first + static_cast<ProbeId>(n));
  if (is_error_kind(kind)) window.filter.quoted_dst = rvp_target;

  const Timestamp start = transport.now();
  auto obs = transport.execute(plan, window);
  if (pacer) pacer->record(node, start + plan.span());

  RcvSample s;
  s.rcv = static_cast<int>(obs.size());
  s.n_sent = n;
  s.with_noise = m > 0;
  s.m_noise = m;
  s.t = start;
  return s;
}

inline double mean_rcv(const std::vector<RcvSample>& samples) {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += s.rcv;
  return sum / static_cast<double>(samples.size());
}

// Fraction of samples equal to the most frequent rcv value.
inline double mode_share(const std::vector<RcvSample>& samples) {
  if (samples.empty()) return 1.0;
  std::map<int, int> counts;
  for (const auto& s : samples) ++counts[s.rcv];
  int best = 0;
  for (const auto& [v, c] : counts) best = std::max(best, c);
  return static_cast<double>(best) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

// Strict, then Loose, then Global; anything else is Unclassified.
inline RateLimitClass classify(double rcv1_avg, double rcv2_avg, int n, double lambda) {
  if (rcv1_avg <= 0.0) return RateLimitClass::Unclassified;
  if (rcv1_avg >= 0.95 && rcv1_avg <= 1.05) return RateLimitClass::Strict;
  if (rcv2_avg >= 0.95 * n) return RateLimitClass::Loose;
  if (rcv2_avg < lambda * rcv1_avg) return RateLimitClass::Global;
  return RateLimitClass::Unclassified;
}

inline double observability(double rcv_before, double rcv_after) {
  if (!(rcv_before > 0.0)) throw InputError("observability needs rcv_before > 0");
  return std::clamp(1.0 - rcv_after / rcv_before, 0.0, 1.0);
}

// A node whose limiter is measured: probes go to `probe_dst`, replies of
// `kind` are expected from `origin`.
struct RlTarget {
  Ipv6Address probe_dst;
  Ipv6Address origin;
  IcmpKind kind = IcmpKind::DestinationUnreachable;
};

inline RlTarget rl_target_from_pair(const DataPair& p) { return {p.target, p.periphery, p.error_kind}; }
inline RlTarget rl_target_echo(const Ipv6Address& responder) { return {responder, responder, IcmpKind::EchoReply}; }

struct RlResult {
  RlTarget target;
  std::vector<RcvSample> rcv1;
  std::vector<RcvSample> rcv2;
  double avg1 = 0.0;
  double avg2 = 0.0;
  int n = 0;
  RateLimitClass cls = RateLimitClass::Unclassified;
};

// Measures rcv1 (probes only) and rcv2 (probes plus locally spoofed noise)
// `repeats` times per target, phase-ordered across targets, and classifies.
inline std::vector<RlResult> run_rl_classification(const std::vector<RlTarget>& targets, const MeasurementParams& params,
                                                   Transport& transport, std::uint64_t seed, BurstPolicy policy = {}) {
  params.validate();
  BurstPacer pacer(policy);
  std::vector<RlResult> out(targets.size());
  std::vector<NoiseSpec> noise(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto p = params_for_kind(targets[i].kind, params);
    out[i].target = targets[i];
    out[i].n = p.n_probe;
    noise[i] = NoiseSpec{p.m_noise, spoof_sources(transport.local_address(), targets[i].origin, seed + i).local_spoof};
  }
  for (int round = 0; round < params.repeats; ++round) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      out[i].rcv1.push_back(measure_rcv(transport, t.probe_dst, t.kind, out[i].n, std::nullopt, t.origin,
                                        params.receive_window_ms, &pacer));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      out[i].rcv2.push_back(
          measure_rcv(transport, t.probe_dst, t.kind, out[i].n, noise[i], t.origin, params.receive_window_ms, &pacer));
    }
  }
  for (auto& r : out) {
    r.avg1 = mean_rcv(r.rcv1);
    r.avg2 = mean_rcv(r.rcv2);
    r.cls = classify(r.avg1, r.avg2, r.n, params.lambda);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration sweeps
// ---------------------------------------------------------------------------

struct NoiseSplit {
  int m = 0;  // noise packets
  int n = 0;  // probe packets
  bool operator==(const NoiseSplit&) const = default;
};

// Splits a fixed packet budget for a given noise-to-probe ratio M/N.
inline NoiseSplit split_for_ratio(int total, double ratio) {
  if (total < 1 || ratio < 0.0) throw InputError("invalid packet budget split");
  int n = static_cast<int>(std::lround(static_cast<double>(total) / (1.0 + ratio)));
  n = std::clamp(n, 1, total);
  return {total - n, n};
}

struct SufficiencyTable {
  std::vector<int> totals;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> insufficient;  // [total][threshold]
};

// For each packet budget, measures the decline caused by noise on every
// target; a target is insufficient at a threshold when its decline is lower.
inline SufficiencyTable sufficiency_sweep(const std::vector<RlTarget>& targets, const std::vector<int>& totals,
                                          const std::vector<double>& thresholds, Transport& transport,
                                          DurationMs receive_window_ms = 1000, double ratio = 2.0,
                                          std::uint64_t seed = 1, BurstPolicy policy = {}) {
  if (totals.empty()) throw InputError("sufficiency sweep needs at least one packet total");
  BurstPacer pacer(policy);
  SufficiencyTable table{totals, thresholds, {}};
  for (int total : totals) {
    const NoiseSplit split = split_for_ratio(total, ratio);
    std::vector<int> insufficient(thresholds.size(), 0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      const NoiseSpec noise{split.m, spoof_sources(transport.local_address(), t.origin, seed + i).local_spoof};
      const auto before =
          measure_rcv(transport, t.probe_dst, t.kind, split.n, std::nullopt, t.origin, receive_window_ms, &pacer);
      const auto after = measure_rcv(transport, t.probe_dst, t.kind, split.n, noise, t.origin, receive_window_ms, &pacer);
      const double decline = before.rcv > 0 ? observability(before.rcv, after.rcv) : 0.0;
      for (std::size_t h = 0; h < thresholds.size(); ++h) {
        if (decline < thresholds[h]) ++insufficient[h];
      }
    }
    std::vector<double> row;
    for (int c : insufficient) {
      row.push_back(targets.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(targets.size()));
    }
    table.insufficient.push_back(std::move(row));
  }
  return table;
}

struct RatioRow {
  double ratio = 0.0;
  NoiseSplit split;
  double mean_observability = 0.0;
  std::size_t measured = 0;  // targets with a non-zero baseline
};

inline std::vector<RatioRow> ratio_sweep(const std::vector<RlTarget>& targets, int total, const std::vector<double>& ratios,
                                         Transport& transport, DurationMs receive_window_ms = 1000,
                                         std::uint64_t seed = 1, BurstPolicy policy = {}) {
  BurstPacer pacer(policy);
  std::vector<RatioRow> rows;
  for (double ratio : ratios) {
    RatioRow row;
    row.ratio = ratio;
    row.split = split_for_ratio(total, ratio);
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      const NoiseSpec noise{row.split.m, spoof_sources(transport.local_address(), t.origin, seed + i).local_spoof};
      const auto before =
          measure_rcv(transport, t.probe_dst, t.kind, row.split.n, std::nullopt, t.origin, receive_window_ms, &pacer);
      const auto after =
          measure_rcv(transport, t.probe_dst, t.kind, row.split.n, noise, t.origin, receive_window_ms, &pacer);
      if (before.rcv > 0) {
        sum += observability(before.rcv, after.rcv);
        ++row.measured;
      }
    }
    row.mean_observability = row.measured ? sum / static_cast<double>(row.measured) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ivantage
