#pragma once

// Send/receive contract between the measurement engines and a packet
// substrate. The simulated backend drives a Simulator; the raw backend is a
// contract placeholder that refuses to run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/simnet.hpp"

namespace ivantage {

struct PlannedPacket {
  DurationMs offset = 0;  // from plan start
  ProbePacket packet;
};

struct SendPlan {
  std::vector<PlannedPacket> packets;

  void add(DurationMs offset, const ProbePacket& p) { packets.push_back({offset, p}); }

  bool empty() const { return packets.empty(); }

  // Offset of the last packet, 0 for an empty plan.
  DurationMs span() const { return packets.empty() ? 0 : packets.back().offset; }

  void validate() const {
    DurationMs prev = 0;
    for (const auto& p : packets) {
      if (p.offset < prev) throw TransportError("send plan offsets must be non-decreasing and >= 0");
      if (p.packet.kind != IcmpKind::EchoRequest) throw TransportError("only echo requests may be emitted");
      if (p.packet.hop_limit < 1 || p.packet.hop_limit > 255) throw TransportError("hop limit out of range");
      prev = p.offset;
    }
  }
};

struct ObservationFilter {
  std::optional<IcmpKind> kind;
  std::optional<Ipv6Address> origin;
  std::optional<Ipv6Address> quoted_dst;
  std::optional<std::pair<ProbeId, ProbeId>> probe_ids;  // half-open [first, second)

  bool matches(const IcmpObservation& o) const {
    if (kind && o.kind != *kind) return false;
    if (origin && o.origin != *origin) return false;
    if (quoted_dst && o.quoted_dst != quoted_dst) return false;
    if (probe_ids && (o.probe_id < probe_ids->first || o.probe_id >= probe_ids->second)) return false;
    return true;
  }
};

struct CollectWindow {
  Timestamp open_at = 0;
  DurationMs duration_ms = 1000;
  ObservationFilter filter;
};

class Transport {
 public:
  virtual ~Transport() = default;

  // Emits the plan starting at now() and returns the matching observations
  // that arrive inside the window, in arrival order.
  virtual std::vector<IcmpObservation> execute(const SendPlan& plan, const CollectWindow& window) = 0;

  virtual Timestamp now() const = 0;
  virtual void sleep_until(Timestamp t) = 0;

  // First id of `count` fresh probe ids.
  virtual ProbeId reserve_ids(std::size_t count) = 0;

  virtual Ipv6Address local_address() const = 0;

  // Sustained per-destination-prefix packet rate the backend enforces.
  virtual double max_pps() const = 0;
};

// Per destination prefix pacing cap: sustained rate plus a burst allowance.
struct RateCap {
  double max_pps = 200.0;
  double burst = 1000.0;
  unsigned prefix_len = 48;
};

class SimTransport final : public Transport {
 public:
  explicit SimTransport(SimConfig cfg, RateCap cap = {}) : sim_(std::move(cfg)), cap_(cap) {
    if (!(cap_.max_pps > 0.0) || cap_.burst < 1.0) throw ConfigError("invalid transport rate cap");
  }

  std::vector<IcmpObservation> execute(const SendPlan& plan, const CollectWindow& window) override {
    plan.validate();
    if (window.duration_ms <= 0) throw TransportError("collect window duration must be > 0");
    const Timestamp start = now_;

    std::vector<std::pair<Timestamp, std::size_t>> emit;
    emit.reserve(plan.packets.size());
    for (std::size_t i = 0; i < plan.packets.size(); ++i) {
      const auto& p = plan.packets[i];
      emit.emplace_back(pace(start + p.offset, p.packet.dst), i);
    }
    std::stable_sort(emit.begin(), emit.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    last_emissions_.clear();
    for (const auto& [t, i] : emit) {
      sim_.run_until(t - 1);
      sim_.inject(t, plan.packets[i].packet);
      last_emissions_.push_back(t);
    }
    const Timestamp close = window.open_at + window.duration_ms;
    sim_.run_until(close - 1);

    std::vector<IcmpObservation> out;
    for (auto& o : sim_.take_observations()) {
      if (o.received_at >= window.open_at && o.received_at < close && window.filter.matches(o)) {
        out.push_back(std::move(o));
      }
    }
    Timestamp last = emit.empty() ? start : emit.back().first;
    now_ = std::max({now_, close, last + 1});
    return out;
  }

  Timestamp now() const override { return now_; }

  void sleep_until(Timestamp t) override {
    if (t <= now_) return;
    now_ = t;
    sim_.run_until(t - 1);
    sim_.take_observations();
  }

  ProbeId reserve_ids(std::size_t count) override {
    ProbeId first = next_id_;
    next_id_ += count;
    return first;
  }

  Ipv6Address local_address() const override { return sim_.config().prober.address; }
  double max_pps() const override { return cap_.max_pps; }

  Simulator& simulator() { return sim_; }
  const Simulator& simulator() const { return sim_; }

  // Emission times of the packets of the last executed plan, in send order.
  const std::vector<Timestamp>& last_emissions() const { return last_emissions_; }

 private:
  struct CapState {
    double tokens = 0.0;
    Timestamp last = 0;
  };

  Timestamp pace(Timestamp want, const Ipv6Address& dst) {
    const Prefix key(dst, cap_.prefix_len);
    auto [it, fresh] = caps_.try_emplace(key, CapState{cap_.burst, want});
    CapState& s = it->second;
    Timestamp t = std::max(want, s.last);
    s.tokens = std::min(cap_.burst, s.tokens + static_cast<double>(t - s.last) * cap_.max_pps / 1000.0);
    s.last = t;
    if (s.tokens < 1.0) {
      const auto wait = static_cast<Timestamp>(std::ceil((1.0 - s.tokens) * 1000.0 / cap_.max_pps));
      t += wait;
      s.tokens = std::min(cap_.burst, s.tokens + static_cast<double>(wait) * cap_.max_pps / 1000.0);
      s.last = t;
    }
    s.tokens -= 1.0;
    return t;
  }

  Simulator sim_;
  RateCap cap_;
  Timestamp now_ = 0;
  ProbeId next_id_ = 1;
  std::map<Prefix, CapState> caps_;
  std::vector<Timestamp> last_emissions_;
};

struct RawTransportOptions {
  std::string interface;
  Ipv6Address local_address;
  bool allow_spoofing = false;
  bool spoofing_acknowledged = false;
  RateCap cap;
};

// Raw ICMPv6 backend. Only the configuration contract is provided; execute()
// always fails so nothing is ever put on a real network by this build.
class RawTransport final : public Transport {
 public:
  explicit RawTransport(RawTransportOptions opts) : opts_(std::move(opts)) {
    if (opts_.interface.empty()) throw ConfigError("raw backend requires an interface name");
    if (opts_.allow_spoofing && !opts_.spoofing_acknowledged) {
      throw ConfigError("raw backend with spoofing requires an explicit acknowledgment flag");
    }
  }

  std::vector<IcmpObservation> execute(const SendPlan& plan, const CollectWindow&) override {
    plan.validate();
    throw TransportError("raw backend is not available in this build (interface " + opts_.interface + ")");
  }

  Timestamp now() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
  }

  void sleep_until(Timestamp) override {}

  ProbeId reserve_ids(std::size_t count) override {
    ProbeId first = next_id_;
    next_id_ += count;
    return first;
  }

  Ipv6Address local_address() const override { return opts_.local_address; }
  double max_pps() const override { return opts_.cap.max_pps; }

 private:
  RawTransportOptions opts_;
  ProbeId next_id_ = 1;
};

}  // namespace ivantage
