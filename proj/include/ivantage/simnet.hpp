#pragma once

// Deterministic discrete-event model of a small IPv6 internet: one local
// prober, peripheries (routers) in front of customer subnets, standalone
// hosts, lossy/jittery links and directed reachability cuts.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/random.hpp"

namespace ivantage {

// ---------------------------------------------------------------------------
// Rate limiter specifications
// ---------------------------------------------------------------------------

enum class LimiterScope : std::uint8_t { Global, PerSource };

struct TokenBucketSpec {
  int capacity = 10;
  DurationMs refill_interval_ms = 100;
  LimiterScope scope = LimiterScope::Global;

  bool operator==(const TokenBucketSpec&) const = default;
};

// At most one message per window.
struct StrictSingleSpec {
  DurationMs window_ms = 1000;

  bool operator==(const StrictSingleSpec&) const = default;
};

struct UnlimitedSpec {
  bool operator==(const UnlimitedSpec&) const = default;
};

using RateLimiterSpec = std::variant<UnlimitedSpec, TokenBucketSpec, StrictSingleSpec>;

inline void validate_limiter(const RateLimiterSpec& spec) {
  if (const auto* tb = std::get_if<TokenBucketSpec>(&spec)) {
    if (tb->capacity < 1) throw ConfigError("token bucket capacity must be >= 1");
    if (tb->refill_interval_ms < 1) throw ConfigError("token bucket refill interval must be >= 1 ms");
  } else if (const auto* st = std::get_if<StrictSingleSpec>(&spec)) {
    if (st->window_ms < 1) throw ConfigError("strict limiter window must be >= 1 ms");
  }
}

// Ground-truth class a limiter should be measured as.
inline RateLimitClass rl_class_of(const RateLimiterSpec& spec) {
  return std::visit(
      [](const auto& s) -> RateLimitClass {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, UnlimitedSpec>) {
          return RateLimitClass::Loose;
        } else if constexpr (std::is_same_v<T, StrictSingleSpec>) {
          return RateLimitClass::Strict;
        } else {
          return s.scope == LimiterScope::Global ? RateLimitClass::Global : RateLimitClass::Unclassified;
        }
      },
      spec);
}

// ---------------------------------------------------------------------------
// Token bucket
// ---------------------------------------------------------------------------

struct TokenBucketState {
  double tokens = 0.0;
  Timestamp last_refill = 0;

  bool operator==(const TokenBucketState&) const = default;
};

inline TokenBucketState full_bucket(const TokenBucketSpec& spec, Timestamp at = 0) {
  return {static_cast<double>(spec.capacity), at};
}

// Whole tokens only: one token per elapsed refill interval, clamped to the
// capacity. The refill phase is kept across calls.
inline std::pair<bool, TokenBucketState> bucket_try_consume(TokenBucketState state, const TokenBucketSpec& spec,
                                                            Timestamp now) {
  if (now > state.last_refill) {
    const std::int64_t ticks = (now - state.last_refill) / spec.refill_interval_ms;
    if (ticks > 0) {
      state.tokens = std::min(static_cast<double>(spec.capacity), state.tokens + static_cast<double>(ticks));
      state.last_refill += ticks * spec.refill_interval_ms;
    }
  }
  if (state.tokens >= 1.0) {
    state.tokens -= 1.0;
    return {true, state};
  }
  return {false, state};
}

// ---------------------------------------------------------------------------
// Stateful limiter (one per router and message kind)
// ---------------------------------------------------------------------------

class RateLimiter {
 public:
  RateLimiter() = default;
  explicit RateLimiter(RateLimiterSpec spec) : spec_(std::move(spec)) {}

  const RateLimiterSpec& spec() const { return spec_; }

  // `requester` is the address the ICMP message would be sent to.
  bool try_acquire(Timestamp now, const Ipv6Address& requester) {
    if (std::holds_alternative<UnlimitedSpec>(spec_)) return true;
    if (const auto* st = std::get_if<StrictSingleSpec>(&spec_)) {
      if (last_strict_grant_ && now - *last_strict_grant_ < st->window_ms) return false;
      last_strict_grant_ = now;
      return true;
    }
    const auto& tb = std::get<TokenBucketSpec>(spec_);
    const Ipv6Address key = tb.scope == LimiterScope::Global ? Ipv6Address{} : requester;
    auto it = buckets_.find(key);
    if (it == buckets_.end()) {
      it = buckets_.emplace(key, full_bucket(tb, tb.scope == LimiterScope::Global ? 0 : now)).first;
    }
    auto [granted, next] = bucket_try_consume(it->second, tb, now);
    if (next.tokens < 0.0 || next.tokens > static_cast<double>(tb.capacity)) {
      throw std::logic_error("token bucket invariant violated");
    }
    it->second = next;
    return granted;
  }

  // Global-scope bucket state, if this is a token bucket limiter that has been used.
  std::optional<TokenBucketState> global_bucket() const {
    auto it = buckets_.find(Ipv6Address{});
    if (it == buckets_.end()) return std::nullopt;
    return it->second;
  }

 private:
  RateLimiterSpec spec_ = UnlimitedSpec{};
  std::unordered_map<Ipv6Address, TokenBucketState> buckets_;
  std::optional<Timestamp> last_strict_grant_;
};

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

struct SimRouter {
  Ipv6Address address;
  Prefix served_prefix;
  RateLimiterSpec limiter = UnlimitedSpec{};       // ICMP errors; independent state per kind
  RateLimiterSpec echo_limiter = UnlimitedSpec{};  // echo replies originated by the router
  bool isav_ingress = false;
  bool echo_responder = true;
  // Kind of error emitted for dead addresses in the served prefix. TimeExceeded
  // models a routing loop in front of the subnet.
  IcmpKind unreachable_reply = IcmpKind::DestinationUnreachable;
};

struct SimHost {
  Ipv6Address address;
  bool responds_to_echo = true;
};

struct LinkModel {
  double base_owd_ms = 10.0;
  double jitter_frac = 0.0;
  double loss_prob = 0.0;

  bool operator==(const LinkModel&) const = default;
};

struct SimLink {
  Ipv6Address a;
  Ipv6Address b;
  LinkModel model;
};

// Packets emitted by nodes inside `src_prefix` never reach `dst`.
struct CutEdge {
  Prefix src_prefix;
  Ipv6Address dst;
};

struct SimProber {
  Ipv6Address address;
  Prefix local_prefix;
};

struct SimConfig {
  SimProber prober;
  std::vector<SimRouter> routers;
  std::vector<SimHost> hosts;
  std::vector<SimLink> links;
  LinkModel default_link;
  std::vector<CutEdge> unreachable_pairs;
  std::uint64_t seed = 0;

  void validate() const {
    std::set<Ipv6Address> seen;
    auto claim = [&](const Ipv6Address& a, const char* what) {
      if (!seen.insert(a).second) throw ConfigError(std::string("duplicate address for ") + what + ": " + a.to_string());
    };
    auto check_link = [](const LinkModel& m) {
      if (!(m.base_owd_ms >= 0.0)) throw ConfigError("link base_owd_ms must be >= 0");
      if (!(m.jitter_frac >= 0.0 && m.jitter_frac <= 1.0)) throw ConfigError("link jitter_frac must lie in [0,1]");
      if (!(m.loss_prob >= 0.0 && m.loss_prob <= 1.0)) throw ConfigError("link loss_prob must lie in [0,1]");
    };
    if (!prober.local_prefix.contains(prober.address)) {
      throw ConfigError("prober address must lie inside its local prefix");
    }
    claim(prober.address, "prober");
    std::set<Prefix> served;
    for (const auto& r : routers) {
      claim(r.address, "router");
      if (!served.insert(r.served_prefix).second) {
        throw ConfigError("duplicate served prefix: " + r.served_prefix.to_string());
      }
      if (r.served_prefix.contains(prober.address) || prober.local_prefix.contains(r.address)) {
        throw ConfigError("router " + r.address.to_string() + " overlaps the prober's local network");
      }
      if (is_error_kind(r.unreachable_reply) == false) {
        throw ConfigError("unreachable_reply must be an error kind");
      }
      validate_limiter(r.limiter);
      validate_limiter(r.echo_limiter);
    }
    for (const auto& h : hosts) claim(h.address, "host");
    check_link(default_link);
    for (const auto& l : links) check_link(l.model);
  }
};

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

// An ICMP message originated by a router or host, recorded for property checks.
struct GeneratedMessage {
  Timestamp t = 0;
  Ipv6Address origin;
  IcmpKind kind = IcmpKind::DestinationUnreachable;
  Ipv6Address invoking_src;
  Ipv6Address invoking_dst;
};

struct SimStats {
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t cut_dropped = 0;
  std::uint64_t isav_dropped = 0;
  std::uint64_t unroutable = 0;
  std::uint64_t rate_limited = 0;
  std::uint64_t generated = 0;
};

class Simulator {
 public:
  explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    index();
  }

  const SimConfig& config() const { return cfg_; }
  Timestamp now() const { return now_; }
  const SimStats& stats() const { return stats_; }

  void set_generation_hook(std::function<void(const GeneratedMessage&)> hook) { gen_hook_ = std::move(hook); }

  // Emits `pkt` from the prober at time `t` (not earlier than now()).
  void inject(Timestamp t, const ProbePacket& pkt) {
    if (t < now_) throw std::invalid_argument("cannot inject a packet into the past");
    if (pkt.hop_limit < 1 || pkt.hop_limit > 255) throw std::invalid_argument("hop_limit out of range");
    ++stats_.injected;
    Wire w;
    w.kind = pkt.kind;
    w.src = pkt.src;
    w.dst = pkt.dst;
    w.origin = cfg_.prober.address;
    w.probe_id = pkt.probe_id;
    transmit(NodeRef{NodeType::Prober, 0}, std::move(w), t);
  }

  // Processes every event with time <= t.
  void run_until(Timestamp t) {
    while (!queue_.empty() && queue_.top().t <= t) step();
    now_ = std::max(now_, t);
  }

  void run_all() {
    while (!queue_.empty()) step();
  }

  bool idle() const { return queue_.empty(); }

  std::vector<IcmpObservation> take_observations() {
    std::vector<IcmpObservation> out;
    out.swap(observations_);
    return out;
  }

  // Global-scope bucket of a router's limiter for `kind`, for inspection.
  std::optional<TokenBucketState> bucket_state(const Ipv6Address& router, IcmpKind kind) const {
    auto it = router_by_addr_.find(router);
    if (it == router_by_addr_.end()) return std::nullopt;
    const auto& rs = router_state_[it->second];
    if (kind == IcmpKind::EchoReply) return rs.echo.global_bucket();
    auto lit = rs.errors.find(kind);
    if (lit == rs.errors.end()) return std::nullopt;
    return lit->second.global_bucket();
  }

  // Delay applied to packet `packet_id` on the link between two edge addresses;
  // nullopt when the packet is lost.
  std::optional<DurationMs> link_delay(const Ipv6Address& a, const Ipv6Address& b, std::uint64_t packet_id) const {
    const LinkModel& m = link_model(a, b);
    const std::uint64_t key = link_key(a, b);
    if (m.loss_prob > 0.0 && unit_interval(hash_keys({cfg_.seed, packet_id, key, 1})) < m.loss_prob) {
      return std::nullopt;
    }
    double delay = m.base_owd_ms;
    if (m.jitter_frac > 0.0) {
      const double u = unit_interval(hash_keys({cfg_.seed, packet_id, key, 2}));
      delay = m.base_owd_ms * (1.0 + m.jitter_frac * (2.0 * u - 1.0));
    }
    auto rounded = static_cast<DurationMs>(std::llround(delay));
    const auto lo = static_cast<DurationMs>(std::ceil(m.base_owd_ms * (1.0 - m.jitter_frac) - 1e-9));
    const auto hi = static_cast<DurationMs>(std::floor(m.base_owd_ms * (1.0 + m.jitter_frac) + 1e-9));
    if (lo <= hi) rounded = std::clamp(rounded, lo, hi);
    return rounded;
  }

  const LinkModel& link_model(const Ipv6Address& a, const Ipv6Address& b) const {
    auto it = links_.find(link_key(a, b));
    return it == links_.end() ? cfg_.default_link : it->second;
  }

 private:
  enum class NodeType : std::uint8_t { Prober, Router, Host };

  struct NodeRef {
    NodeType type = NodeType::Prober;
    std::size_t index = 0;
    bool operator==(const NodeRef&) const = default;
  };

  struct Wire {
    IcmpKind kind = IcmpKind::EchoRequest;
    Ipv6Address src;
    Ipv6Address dst;
    Ipv6Address origin;  // true emitter, independent of a spoofed src
    std::optional<Ipv6Address> quoted_dst;
    ProbeId probe_id = 0;
    std::uint64_t id = 0;
  };

  struct Event {
    Timestamp t = 0;
    std::uint64_t seq = 0;
    NodeRef to;
    Wire pkt;
  };

  struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };

  struct RouterState {
    std::map<IcmpKind, RateLimiter> errors;
    RateLimiter echo;
  };

  static std::uint64_t link_key(const Ipv6Address& a, const Ipv6Address& b) {
    const auto& x = std::min(a, b);
    const auto& y = std::max(a, b);
    return hash_keys({x.hi(), x.lo(), y.hi(), y.lo()});
  }

  void index() {
    router_state_.resize(cfg_.routers.size());
    for (std::size_t i = 0; i < cfg_.routers.size(); ++i) {
      const auto& r = cfg_.routers[i];
      router_by_addr_.emplace(r.address, i);
      routers_by_len_[r.served_prefix.length()].emplace(r.served_prefix.base(), i);
      router_state_[i].echo = RateLimiter(r.echo_limiter);
    }
    for (std::size_t i = 0; i < cfg_.hosts.size(); ++i) host_by_addr_.emplace(cfg_.hosts[i].address, i);
    for (const auto& l : cfg_.links) links_[link_key(l.a, l.b)] = l.model;
    for (const auto& c : cfg_.unreachable_pairs) cuts_by_dst_.emplace(c.dst, c.src_prefix);
  }

  std::optional<std::size_t> router_for(const Ipv6Address& dst) const {
    for (auto it = routers_by_len_.rbegin(); it != routers_by_len_.rend(); ++it) {
      auto hit = it->second.find(dst.masked(it->first));
      if (hit != it->second.end()) return hit->second;
    }
    return std::nullopt;
  }

  std::optional<NodeRef> resolve(const Ipv6Address& dst) const {
    if (auto r = router_for(dst)) return NodeRef{NodeType::Router, *r};
    if (auto h = host_by_addr_.find(dst); h != host_by_addr_.end()) return NodeRef{NodeType::Host, h->second};
    if (cfg_.prober.local_prefix.contains(dst)) return NodeRef{NodeType::Prober, 0};
    return std::nullopt;
  }

  const Ipv6Address& edge_address(const NodeRef& n) const {
    switch (n.type) {
      case NodeType::Router: return cfg_.routers[n.index].address;
      case NodeType::Host: return cfg_.hosts[n.index].address;
      case NodeType::Prober: break;
    }
    return cfg_.prober.address;
  }

  bool is_cut(const Ipv6Address& origin, const Ipv6Address& receiver, const Ipv6Address& dst) const {
    if (cuts_by_dst_.empty()) return false;
    auto hit = [&](const Ipv6Address& d) {
      auto [lo, hi] = cuts_by_dst_.equal_range(d);
      for (auto it = lo; it != hi; ++it) {
        if (it->second.contains(origin)) return true;
      }
      return false;
    };
    return hit(receiver) || (dst != receiver && hit(dst));
  }

  void transmit(const NodeRef& from, Wire pkt, Timestamp t) {
    pkt.id = next_packet_id_++;
    auto to = resolve(pkt.dst);
    if (!to) {
      ++stats_.unroutable;
      return;
    }
    if (*to == from) return;  // stays inside the sender's own network
    const Ipv6Address& a = edge_address(from);
    const Ipv6Address& b = edge_address(*to);
    if (is_cut(pkt.origin, b, pkt.dst)) {
      ++stats_.cut_dropped;
      return;
    }
    auto delay = link_delay(a, b, pkt.id);
    if (!delay) {
      ++stats_.lost;
      return;
    }
    queue_.push(Event{t + *delay, next_seq_++, *to, std::move(pkt)});
  }

  void step() {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.t);
    ++stats_.delivered;
    switch (ev.to.type) {
      case NodeType::Prober: arrive_prober(ev.pkt, ev.t); break;
      case NodeType::Router: arrive_router(ev.to.index, ev.pkt, ev.t); break;
      case NodeType::Host: arrive_host(ev.to, ev.pkt, ev.t); break;
    }
  }

  void arrive_prober(const Wire& pkt, Timestamp t) {
    if (pkt.dst != cfg_.prober.address) return;
    if (pkt.kind == IcmpKind::EchoRequest) return;
    observations_.push_back(IcmpObservation{pkt.kind, pkt.src, pkt.quoted_dst, t, pkt.probe_id});
  }

  void reply(const NodeRef& from, const Ipv6Address& origin, IcmpKind kind, const Wire& invoking, Timestamp t) {
    Wire out;
    out.kind = kind;
    out.src = origin;
    out.dst = invoking.src;
    out.origin = origin;
    out.probe_id = invoking.probe_id;
    if (is_error_kind(kind)) out.quoted_dst = invoking.dst;
    ++stats_.generated;
    if (gen_hook_) gen_hook_(GeneratedMessage{t, origin, kind, invoking.src, invoking.dst});
    transmit(from, std::move(out), t);
  }

  void arrive_router(std::size_t idx, const Wire& pkt, Timestamp t) {
    const SimRouter& r = cfg_.routers[idx];
    RouterState& rs = router_state_[idx];
    const NodeRef self{NodeType::Router, idx};
    if (r.isav_ingress && r.served_prefix.contains(pkt.src)) {
      ++stats_.isav_dropped;
      return;
    }
    if (pkt.dst == r.address) {
      if (pkt.kind == IcmpKind::EchoRequest && r.echo_responder) {
        if (rs.echo.try_acquire(t, pkt.src)) {
          reply(self, r.address, IcmpKind::EchoReply, pkt, t);
        } else {
          ++stats_.rate_limited;
        }
      }
      return;
    }
    if (auto h = host_by_addr_.find(pkt.dst); h != host_by_addr_.end()) {
      const SimHost& host = cfg_.hosts[h->second];
      if (pkt.kind == IcmpKind::EchoRequest && host.responds_to_echo) {
        reply(self, host.address, IcmpKind::EchoReply, pkt, t);
      }
      return;
    }
    if (is_error_kind(pkt.kind)) return;  // no errors about errors
    auto [it, inserted] = rs.errors.try_emplace(r.unreachable_reply, r.limiter);
    if (it->second.try_acquire(t, pkt.src)) {
      reply(self, r.address, r.unreachable_reply, pkt, t);
    } else {
      ++stats_.rate_limited;
    }
  }

  void arrive_host(const NodeRef& node, const Wire& pkt, Timestamp t) {
    const SimHost& host = cfg_.hosts[node.index];
    if (pkt.dst != host.address) return;
    if (pkt.kind == IcmpKind::EchoRequest && host.responds_to_echo) {
      reply(node, host.address, IcmpKind::EchoReply, pkt, t);
    }
  }

  SimConfig cfg_;
  Timestamp now_ = 0;
  SimStats stats_;
  std::uint64_t next_packet_id_ = 1;
  std::uint64_t next_seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
  std::vector<IcmpObservation> observations_;
  std::vector<RouterState> router_state_;
  std::unordered_map<Ipv6Address, std::size_t> router_by_addr_;
  std::map<unsigned, std::unordered_map<Ipv6Address, std::size_t>> routers_by_len_;
  std::unordered_map<Ipv6Address, std::size_t> host_by_addr_;
  std::unordered_map<std::uint64_t, LinkModel> links_;
  std::unordered_multimap<Ipv6Address, Prefix> cuts_by_dst_;
  std::function<void(const GeneratedMessage&)> gen_hook_;
};

// A packet emitted by the prober at an absolute time.
struct TimedPacket {
  Timestamp t = 0;
  ProbePacket packet;
};

// Runs a fresh simulation of `injected` to completion.
inline std::vector<IcmpObservation> run_events(const SimConfig& cfg, const std::vector<TimedPacket>& injected) {
  for (std::size_t i = 1; i < injected.size(); ++i) {
    if (injected[i].t < injected[i - 1].t) throw std::invalid_argument("injected timestamps must be non-decreasing");
  }
  Simulator sim(cfg);
  for (const auto& p : injected) {
    sim.run_until(p.t - 1);
    sim.inject(p.t, p.packet);
  }
  sim.run_all();
  return sim.take_observations();
}

// ---------------------------------------------------------------------------
// Oracles: ground truth read directly from the configuration
// ---------------------------------------------------------------------------

namespace detail {

inline const SimRouter* router_serving(const SimConfig& cfg, const Prefix& prefix) {
  const SimRouter* best = nullptr;
  for (const auto& r : cfg.routers) {
    if (r.served_prefix == prefix) return &r;
    if (r.served_prefix.length() <= prefix.length() && r.served_prefix.contains(prefix.base())) {
      if (!best || best->served_prefix.length() < r.served_prefix.length()) best = &r;
    }
  }
  return best;
}

inline bool known_address(const SimConfig& cfg, const Ipv6Address& a) {
  if (a == cfg.prober.address || cfg.prober.local_prefix.contains(a)) return true;
  for (const auto& r : cfg.routers) {
    if (r.address == a || r.served_prefix.contains(a)) return true;
  }
  for (const auto& h : cfg.hosts) {
    if (h.address == a) return true;
  }
  return false;
}

}  // namespace detail

inline bool oracle_isav(const SimConfig& cfg, const Prefix& prefix) {
  const SimRouter* r = detail::router_serving(cfg, prefix);
  if (!r) throw InputError("no simulated router serves " + prefix.to_string());
  return r->isav_ingress;
}

inline bool oracle_reachable(const SimConfig& cfg, const Ipv6Address& src, const Ipv6Address& dst) {
  if (!detail::known_address(cfg, src)) throw InputError("unknown simulated address " + src.to_string());
  if (!detail::known_address(cfg, dst)) throw InputError("unknown simulated address " + dst.to_string());
  for (const auto& c : cfg.unreachable_pairs) {
    if (c.src_prefix.contains(src) && c.dst == dst) return false;
  }
  return true;
}

inline RateLimitClass oracle_rl_class(const SimConfig& cfg, const Ipv6Address& addr, IcmpKind kind) {
  for (const auto& r : cfg.routers) {
    if (r.address == addr) return rl_class_of(kind == IcmpKind::EchoReply ? r.echo_limiter : r.limiter);
  }
  for (const auto& h : cfg.hosts) {
    if (h.address == addr && kind == IcmpKind::EchoReply) return RateLimitClass::Loose;
  }
  throw InputError("no simulated node " + addr.to_string() + " originates " + std::string(to_string(kind)));
}

}  // namespace ivantage
