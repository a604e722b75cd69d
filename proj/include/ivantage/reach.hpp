#pragma once

// Remote-to-remote reachability. Echo requests spoofed from an unreachable
// address X behind RVP A are sent to target B; B's replies go to X and make A
// emit errors, draining A's limiter. Probes to X timed to meet those
// reflections at A then see fewer errors than the baseline unless B cannot
// reach A.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/ratelimit.hpp"
#include "ivantage/simnet.hpp"
#include "ivantage/transport.hpp"

namespace ivantage {

inline constexpr double kLightKmPerMs = 300.0;  // 3e5 km/s

struct RttEstimate {
  double low_ms = 0.0;
  double high_ms = 0.0;
  double sample_ms = 0.0;
};

// Physical bound on the A<->B round trip for a great-circle distance,
// narrowed by the triangle through the prober. When the two disagree the
// physical bound is kept.
inline std::pair<double, double> rtt_bounds(double distance_km, double rtt_a_ms, double rtt_b_ms) {
  if (!(distance_km >= 0.0)) throw InputError("distance must be >= 0");
  const double geo_low = distance_km / (2.0 * kLightKmPerMs / 3.0);
  const double geo_high = distance_km / (kLightKmPerMs / 3.0);
  const double low = std::max(geo_low, std::abs(rtt_a_ms - rtt_b_ms));
  const double high = std::min(geo_high, rtt_a_ms + rtt_b_ms);
  if (low > high) return {geo_low, geo_high};
  return {low, high};
}

// Draws from the upper two thirds of [low, high]: late probes are harmless,
// early ones are not.
inline RttEstimate sample_estimate(std::pair<double, double> bounds, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double span = bounds.second - bounds.first;
  const double s = bounds.first + span * (1.0 / 3.0 + 2.0 / 3.0 * u(rng));
  return {bounds.first, bounds.second, std::clamp(s, bounds.first, bounds.second)};
}

// Offset of the probe burst relative to the spoofed burst. Negative means the
// probes go first.
inline double delta_t(double rtt_a_ms, double rtt_b_ms, double est_ab_ms) { return (rtt_b_ms - rtt_a_ms + est_ab_ms) / 2.0; }

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

inline double great_circle_km(GeoPoint a, GeoPoint b) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * rad;
  const double dlon = (b.lon - a.lon) * rad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Coordinates per address or per prefix; exact addresses win, then the
// longest covering prefix.
class CoordinateBook {
 public:
  void add(const Prefix& p, GeoPoint g) { entries_[p] = g; }
  void add(const Ipv6Address& a, GeoPoint g) { entries_[Prefix(a, 128)] = g; }

  std::optional<GeoPoint> find(const Ipv6Address& a) const {
    std::optional<GeoPoint> best;
    unsigned best_len = 0;
    for (const auto& [p, g] : entries_) {
      if (p.contains(a) && (!best || p.length() > best_len)) {
        best = g;
        best_len = p.length();
      }
    }
    return best;
  }

  std::optional<double> distance_km(const Ipv6Address& a, const Ipv6Address& b) const {
    auto ga = find(a);
    auto gb = find(b);
    if (!ga || !gb) return std::nullopt;
    return great_circle_km(*ga, *gb);
  }

  std::size_t size() const { return entries_.size(); }
  const std::map<Prefix, GeoPoint>& entries() const { return entries_; }

 private:
  std::map<Prefix, GeoPoint> entries_;
};

// Produces the A<->B round-trip estimate for one protocol run.
using RttEstimator = std::function<RttEstimate(const Ipv6Address& target, const DataPair& rvp, double rtt_a_ms,
                                               double rtt_b_ms, std::mt19937_64& rng)>;

// Distance-based estimator. Without coordinates only the triangle bound is
// available.
inline RttEstimator geo_estimator(CoordinateBook book) {
  return [book = std::move(book)](const Ipv6Address& target, const DataPair& rvp, double rtt_a, double rtt_b,
                                  std::mt19937_64& rng) {
    if (auto d = book.distance_km(target, rvp.periphery)) return sample_estimate(rtt_bounds(*d, rtt_a, rtt_b), rng);
    return sample_estimate({std::abs(rtt_a - rtt_b), rtt_a + rtt_b}, rng);
  };
}

namespace detail {

inline Ipv6Address sim_edge(const SimConfig& cfg, const Ipv6Address& a) {
  const SimRouter* best = nullptr;
  for (const auto& r : cfg.routers) {
    if (r.address == a) return a;
    if (r.served_prefix.contains(a) && (!best || r.served_prefix.length() > best->served_prefix.length())) best = &r;
  }
  return best ? best->address : a;
}

inline double sim_base_owd(const SimConfig& cfg, const Ipv6Address& a, const Ipv6Address& b) {
  for (const auto& l : cfg.links) {
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return l.model.base_owd_ms;
  }
  return cfg.default_link.base_owd_ms;
}

}  // namespace detail

// Exact A<->B round trip read from a simulated topology.
inline RttEstimator sim_truth_estimator(const SimConfig& cfg) {
  return [cfg](const Ipv6Address& target, const DataPair& rvp, double, double, std::mt19937_64&) {
    const double r = 2.0 * detail::sim_base_owd(cfg, detail::sim_edge(cfg, target), detail::sim_edge(cfg, rvp.periphery));
    return RttEstimate{r, r, r};
  };
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

// Round trips from the prober, one echo request per address per attempt; the
// mean over answered attempts, nullopt when none was answered.
inline std::map<Ipv6Address, std::optional<double>> ping_rtts(Transport& transport, const std::vector<Ipv6Address>& addrs,
                                                               int attempts = 3, DurationMs window_ms = 2000) {
  std::map<Ipv6Address, std::pair<double, int>> acc;
  for (const auto& a : addrs) acc[a] = {0.0, 0};
  for (int k = 0; k < attempts; ++k) {
    if (addrs.empty()) break;
    const ProbeId first = transport.reserve_ids(addrs.size());
    SendPlan plan;
    std::map<ProbeId, std::pair<Ipv6Address, DurationMs>> sent;
    for (std::size_t i = 0; i < addrs.size(); ++i) {
      ProbePacket p;
      p.src = transport.local_address();
      p.dst = addrs[i];
      p.probe_id = first + i;
      plan.add(static_cast<DurationMs>(i), p);
      sent[p.probe_id] = {addrs[i], static_cast<DurationMs>(i)};
    }
    CollectWindow w;
    w.open_at = transport.now();
    w.duration_ms = plan.span() + window_ms;
    w.filter.kind = IcmpKind::EchoReply;
    w.filter.probe_ids = std::make_pair(first, first + addrs.size());
    const Timestamp start = transport.now();
    std::set<ProbeId> seen;
    for (const auto& o : transport.execute(plan, w)) {
      auto it = sent.find(o.probe_id);
      if (it == sent.end() || o.origin != it->second.first || !seen.insert(o.probe_id).second) continue;
      auto& [sum, count] = acc[it->second.first];
      sum += static_cast<double>(o.received_at - (start + it->second.second));
      ++count;
    }
  }
  std::map<Ipv6Address, std::optional<double>> out;
  for (const auto& [a, sc] : acc) {
    out[a] = sc.second > 0 ? std::optional<double>(sc.first / sc.second) : std::nullopt;
  }
  return out;
}

// Steps 1-2: N probes to the unreachable address X, counting A's errors.
inline RcvSample reach_baseline(Transport& transport, const DataPair& rvp, const MeasurementParams& params) {
  return measure_rcv(transport, rvp.target, rvp.error_kind, params.n_probe, std::nullopt, rvp.periphery,
                     params.receive_window_ms);
}

struct ReachBurst {
  RcvSample rcv2;
  DurationMs delta_ms = 0;
};

// Steps 3-7 in one plan: M echo requests to B spoofed from X, and N probes to
// X shifted by delta_t so both loads reach A together.
inline ReachBurst reach_burst(Transport& transport, const Ipv6Address& target_b, const DataPair& rvp,
                              const MeasurementParams& params, double rtt_a_ms, double rtt_b_ms, const RttEstimate& est,
                              DurationMs spacing_ms = 1) {
  const auto dt = static_cast<DurationMs>(std::llround(delta_t(rtt_a_ms, rtt_b_ms, est.sample_ms)));
  const DurationMs noise_at = std::max<DurationMs>(0, -dt);
  const DurationMs probe_at = std::max<DurationMs>(0, dt);
  const int n = params.n_probe;
  const int m = params.m_noise;
  const ProbeId first = transport.reserve_ids(static_cast<std::size_t>(n + m));

  std::vector<PlannedPacket> pkts;
  pkts.reserve(static_cast<std::size_t>(n + m));
  for (int i = 0; i < m; ++i) {
    ProbePacket p;
    p.src = rvp.target;
    p.dst = target_b;
    p.probe_id = first + static_cast<ProbeId>(n + i);
    pkts.push_back({noise_at + i * spacing_ms, p});
  }
  for (int i = 0; i < n; ++i) {
    ProbePacket p;
    p.src = transport.local_address();
    p.dst = rvp.target;
    p.probe_id = first + static_cast<ProbeId>(i);
    pkts.push_back({probe_at + i * spacing_ms, p});
  }
  std::stable_sort(pkts.begin(), pkts.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
  SendPlan plan;
  plan.packets = std::move(pkts);

  CollectWindow w;
  w.open_at = transport.now();
  w.duration_ms = plan.span() + params.receive_window_ms;
  w.filter.kind = rvp.error_kind;
  w.filter.origin = rvp.periphery;
  w.filter.quoted_dst = rvp.target;
  w.filter.probe_ids = std::make_pair(first, first + static_cast<ProbeId>(n));
  const Timestamp start = transport.now();
  auto obs = transport.execute(plan, w);

  ReachBurst out;
  out.delta_ms = dt;
  out.rcv2.rcv = static_cast<int>(obs.size());
  out.rcv2.n_sent = n;
  out.rcv2.with_noise = true;
  out.rcv2.m_noise = m;
  out.rcv2.t = start;
  return out;
}

// All seven steps for one target: baseline, a settling gap, then the burst.
inline std::pair<RcvSample, RcvSample> run_reach_protocol(const Ipv6Address& target_b, const DataPair& rvp,
                                                          const MeasurementParams& params, const RttEstimate& est,
                                                          Transport& transport, double rtt_a_ms, double rtt_b_ms,
                                                          DurationMs settle_ms = 2000) {
  RcvSample rcv1 = reach_baseline(transport, rvp, params);
  transport.sleep_until(transport.now() + settle_ms);
  ReachBurst b = reach_burst(transport, target_b, rvp, params, rtt_a_ms, rtt_b_ms, est);
  return {rcv1, b.rcv2};
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class ReachOutcome : std::uint8_t { Connected, Unconnected, Uncertain };

inline std::string_view to_string(ReachOutcome v) {
  switch (v) {
    case ReachOutcome::Connected: return "connected";
    case ReachOutcome::Unconnected: return "unconnected";
    case ReachOutcome::Uncertain: return "uncertain";
  }
  return "unknown";
}

struct ReachVerdict {
  ReachOutcome outcome = ReachOutcome::Uncertain;
  std::optional<double> ratio;  // avg2 / avg1
  double avg1 = 0.0;
  double avg2 = 0.0;
  int k = 0;
};

inline ReachVerdict infer_reach(double avg1, double avg2, double lambda) {
  ReachVerdict v;
  v.avg1 = avg1;
  v.avg2 = avg2;
  if (!(avg1 > 0.0)) return v;
  v.ratio = avg2 / avg1;
  v.outcome = *v.ratio >= lambda ? ReachOutcome::Unconnected : ReachOutcome::Connected;
  return v;
}

struct ReachSample {
  Ipv6Address rvp;
  int rcv1 = 0;
  int rcv2 = 0;
  RttEstimate est;
  DurationMs delta_ms = 0;
  Timestamp t = 0;
};

struct ReachTargetResult {
  Ipv6Address target;
  std::vector<ReachSample> samples;
  bool echo_silent = false;  // failed the pre-check
  ReachVerdict verdict;
};

// Verdict over the first `k` samples (all when k <= 0).
inline ReachVerdict verdict_from_samples(const std::vector<ReachSample>& samples, double lambda, int k = 0) {
  const std::size_t use = k > 0 ? std::min(samples.size(), static_cast<std::size_t>(k)) : samples.size();
  if (use == 0) return {};
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < use; ++i) {
    s1 += samples[i].rcv1;
    s2 += samples[i].rcv2;
  }
  ReachVerdict v = infer_reach(s1 / use, s2 / use, lambda);
  v.k = static_cast<int>(use);
  return v;
}

struct ReachOptions {
  DurationMs reuse_interval_ms = 300000;  // between two protocol bursts at one RVP
  int baseline_every = 20;                // uses of an RVP per baseline refresh
  DurationMs settle_ms = 2000;            // baseline to burst at the same RVP
  int ping_attempts = 3;
  bool precheck = true;
  std::uint64_t seed = 0;
};

struct ReachCampaignResult {
  std::map<Ipv6Address, ReachTargetResult> results;
  std::size_t protocol_runs = 0;
  std::size_t baseline_runs = 0;
};

// k repeats per target, RVPs used round-robin with a minimum reuse interval,
// repeat-major so one target's repeats spread over time and RVPs.
inline ReachCampaignResult run_reach_campaign(const std::vector<Ipv6Address>& targets, const std::vector<DataPair>& proxy_rvps,
                                              const MeasurementParams& params, Transport& transport,
                                              const RttEstimator& estimator, const ReachOptions& opts = {}) {
  params.validate();
  if (proxy_rvps.empty()) throw InputError("reach campaign needs at least one proxy RVP");
  if (opts.baseline_every < 1) throw InputError("baseline_every must be >= 1");
  std::mt19937_64 rng(opts.seed);
  ReachCampaignResult out;
  for (const auto& t : targets) out.results[t].target = t;

  std::vector<Ipv6Address> periph;
  for (const auto& r : proxy_rvps) periph.push_back(r.periphery);
  auto rtt_a = ping_rtts(transport, periph, opts.ping_attempts);

  std::map<Ipv6Address, std::optional<double>> rtt_b;
  if (opts.precheck) {
    rtt_b = ping_rtts(transport, targets, opts.ping_attempts);
  }

  struct RvpState {
    std::optional<Timestamp> last_use;
    int uses = 0;
    int baseline = 0;
  };
  std::vector<RvpState> state(proxy_rvps.size());
  std::size_t rr = 0;

  for (int rep = 0; rep < params.repeats; ++rep) {
    for (const auto& target : targets) {
      auto& res = out.results[target];
      std::optional<double> rb = opts.precheck ? rtt_b[target] : std::optional<double>(0.0);
      if (!rb) {
        res.echo_silent = true;
        continue;
      }
      // next RVP whose round trip is known
      std::optional<std::size_t> pick;
      for (std::size_t tries = 0; tries < proxy_rvps.size(); ++tries) {
        const std::size_t i = (rr + tries) % proxy_rvps.size();
        if (rtt_a[proxy_rvps[i].periphery]) {
          pick = i;
          rr = i + 1;
          break;
        }
      }
      if (!pick) continue;
      const DataPair& rvp = proxy_rvps[*pick];
      RvpState& st = state[*pick];
      if (st.last_use) transport.sleep_until(*st.last_use + opts.reuse_interval_ms);
      if (st.uses % opts.baseline_every == 0) {
        st.baseline = reach_baseline(transport, rvp, params).rcv;
        ++out.baseline_runs;
        transport.sleep_until(transport.now() + opts.settle_ms);
      }
      ++st.uses;
      const double ra = *rtt_a[rvp.periphery];
      const RttEstimate est = estimator(target, rvp, ra, *rb, rng);
      ReachBurst b = reach_burst(transport, target, rvp, params, ra, *rb, est);
      st.last_use = transport.now();
      ++out.protocol_runs;
      if (st.baseline == 0) continue;  // RVP unusable at the moment
      res.samples.push_back({rvp.periphery, st.baseline, b.rcv2.rcv, est, b.delta_ms, b.rcv2.t});
    }
  }
  for (auto& [t, res] : out.results) res.verdict = verdict_from_samples(res.samples, params.lambda);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation (positive class: Unconnected)
// ---------------------------------------------------------------------------

struct EvalRow {
  double lambda = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f_score = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::pair<double, double>> roc_points;  // (fpr, tpr), from (0,0) to (1,1)
  double auc = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // Uncertain verdicts

  const EvalRow* row(double lambda) const {
    for (const auto& r : rows) {
      if (std::abs(r.lambda - lambda) < 1e-12) return &r;
    }
    return nullptr;
  }
};

inline EvalRow confusion_row(const std::vector<std::pair<double, bool>>& scored, double lambda) {
  EvalRow r;
  r.lambda = lambda;
  for (const auto& [ratio, positive] : scored) {
    const bool pred = ratio >= lambda;
    if (pred && positive) ++r.tp;
    if (pred && !positive) ++r.fp;
    if (!pred && positive) ++r.fn;
    if (!pred && !positive) ++r.tn;
  }
  auto frac = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  r.precision = frac(r.tp, r.tp + r.fp);
  r.recall = frac(r.tp, r.tp + r.fn);
  r.accuracy = frac(r.tp + r.tn, r.tp + r.tn + r.fp + r.fn);
  r.f_score = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

// ROC from sweeping the threshold over every distinct ratio; AUC by trapezoids.
inline std::pair<std::vector<std::pair<double, double>>, double> roc_curve(std::vector<std::pair<double, bool>> scored) {
  std::size_t pos = 0;
  for (const auto& s : scored) pos += s.second ? 1 : 0;
  const std::size_t neg = scored.size() - pos;
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double thr = scored[i].first;
    while (i < scored.size() && scored[i].first == thr) {
      (scored[i].second ? tp : fp) += 1;
      ++i;
    }
    pts.emplace_back(neg ? static_cast<double>(fp) / neg : 0.0, pos ? static_cast<double>(tp) / pos : 0.0);
  }
  if (pts.back() != std::make_pair(1.0, 1.0)) pts.emplace_back(1.0, 1.0);
  double auc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auc += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  }
  return {pts, auc};
}

inline EvalReport evaluate(const std::map<Ipv6Address, ReachVerdict>& verdicts, const std::map<Ipv6Address, bool>& unconnected_truth,
                           const std::vector<double>& lambdas) {
  if (unconnected_truth.empty()) throw InputError("evaluation needs ground truth");
  std::vector<std::pair<double, bool>> scored;
  EvalReport rep;
  for (const auto& [t, v] : verdicts) {
    auto it = unconnected_truth.find(t);
    if (it == unconnected_truth.end()) continue;
    if (!v.ratio || v.outcome == ReachOutcome::Uncertain) {
      ++rep.excluded;
      continue;
    }
    scored.emplace_back(*v.ratio, it->second);
  }
  rep.evaluated = scored.size();
  for (double l : lambdas) rep.rows.push_back(confusion_row(scored, l));
  std::tie(rep.roc_points, rep.auc) = roc_curve(scored);
  return rep;
}

// Verdicts recomputed from the first k samples of every target.
inline std::map<Ipv6Address, ReachVerdict> verdicts_at_k(const ReachCampaignResult& c, double lambda, int k) {
  std::map<Ipv6Address, ReachVerdict> out;
  for (const auto& [t, r] : c.results) out[t] = verdict_from_samples(r.samples, lambda, k);
  return out;
}

inline std::map<Ipv6Address, ReachVerdict> verdicts(const ReachCampaignResult& c) {
  std::map<Ipv6Address, ReachVerdict> out;
  for (const auto& [t, r] : c.results) out[t] = r.verdict;
  return out;
}

}  // namespace ivantage
