#pragma once

// Seeded generators for the bundled demo populations. Each add_* function
// appends its nodes to a SimConfig and returns the engine inputs together with
// the ground truth it planted.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "ivantage/isav.hpp"
#include "ivantage/model.hpp"
#include "ivantage/ratelimit.hpp"
#include "ivantage/reach.hpp"
#include "ivantage/simnet.hpp"

namespace ivantage::demo {

inline Ipv6Address addr(std::uint16_t g0, std::uint16_t g1, std::uint16_t g2, std::uint64_t lo) {
  const std::uint64_t hi = (std::uint64_t{g0} << 48) | (std::uint64_t{g1} << 32) | (std::uint64_t{g2} << 16);
  return Ipv6Address(hi, lo);
}

inline SimConfig base_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.prober.address = addr(0x2001, 0x0db8, 0xffff, 1);
  cfg.prober.local_prefix = Prefix(cfg.prober.address, 48);
  cfg.default_link = LinkModel{10.0, 0.0, 0.0};
  return cfg;
}

// ---------------------------------------------------------------------------
// ISAV
// ---------------------------------------------------------------------------

struct IsavPopulationSpec {
  int moderate = 200;      // Global error limiter, cap 10..20 per 100 ms
  int echo_only = 0;       // unlimited errors, Global echo limiter cap 100 per 100 ms
  int unlimited = 0;       // nothing limited
  double loss = 0.0;
  double jitter = 0.0;
  std::uint16_t block = 0x2400;
};

struct IsavPopulation {
  std::map<Prefix, DataPair> pairs;
  std::map<Prefix, bool> deployed;
  std::set<Prefix> unmeasurable;  // no limiter the protocol can observe
  std::map<Prefix, AsId> as_map;
  std::map<Prefix, std::vector<Ipv6Address>> hitlist;
};

inline IsavPopulation add_isav_population(SimConfig& cfg, const IsavPopulationSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  IsavPopulation pop;
  const int total = spec.moderate + spec.echo_only + spec.unlimited;
  AsId as = 64500;
  int as_left = 0;
  bool as_mixed = false;  // members drawn independently
  bool as_isav = false;
  for (int i = 0; i < total; ++i) {
    const auto g1 = static_cast<std::uint16_t>(i + 1);
    const Prefix prefix(addr(spec.block, g1, 0, 0), 48);
    SimRouter r;
    r.address = addr(spec.block, g1, 0, 1);
    r.served_prefix = prefix;
    if (as_left == 0) {
      ++as;
      as_left = std::uniform_int_distribution<int>(1, 4)(rng);
      as_mixed = std::bernoulli_distribution(0.2)(rng);
      as_isav = std::bernoulli_distribution(0.5)(rng);
    }
    pop.as_map[prefix] = as;
    --as_left;
    r.isav_ingress = as_mixed ? std::bernoulli_distribution(0.5)(rng) : as_isav;
    if (i < spec.moderate) {
      r.limiter = TokenBucketSpec{std::uniform_int_distribution<int>(10, 20)(rng), 100, LimiterScope::Global};
    } else if (i < spec.moderate + spec.echo_only) {
      r.echo_limiter = TokenBucketSpec{100, 100, LimiterScope::Global};
    } else {
      pop.unmeasurable.insert(prefix);
    }
    const Ipv6Address live = addr(spec.block, g1, 0, 0x10);
    cfg.hosts.push_back({live, true});
    cfg.links.push_back({cfg.prober.address, r.address,
                         LinkModel{std::uniform_real_distribution<double>(5.0, 80.0)(rng), spec.jitter, spec.loss}});
    cfg.routers.push_back(r);

    const Ipv6Address dead = addr(spec.block, g1, 0, 0xdead0000ULL + static_cast<std::uint64_t>(i));
    pop.pairs[prefix] = DataPair{dead, r.address, IcmpKind::DestinationUnreachable, 0};
    pop.deployed[prefix] = r.isav_ingress;
    pop.hitlist[prefix] = {live};
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Rate limiting classes
// ---------------------------------------------------------------------------

struct RlPopulationSpec {
  int global = 100;
  int strict = 100;
  int unlimited = 100;
  double loss = 0.0;
  std::uint16_t block = 0x2500;
};

struct RlPopulation {
  std::vector<RlTarget> targets;
  std::vector<RateLimitClass> expected;
};

inline RlPopulation add_rl_population(SimConfig& cfg, const RlPopulationSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RlPopulation pop;
  const int total = spec.global + spec.strict + spec.unlimited;
  for (int i = 0; i < total; ++i) {
    const auto g1 = static_cast<std::uint16_t>(i + 1);
    SimRouter r;
    r.address = addr(spec.block, g1, 0, 1);
    r.served_prefix = Prefix(r.address, 48);
    if (i < spec.global) {
      r.limiter = TokenBucketSpec{std::uniform_int_distribution<int>(5, 20)(rng), 100, LimiterScope::Global};
    } else if (i < spec.global + spec.strict) {
      r.limiter = StrictSingleSpec{std::uniform_int_distribution<DurationMs>(500, 1000)(rng)};
    }
    cfg.links.push_back({cfg.prober.address, r.address,
                         LinkModel{std::uniform_real_distribution<double>(5.0, 80.0)(rng), 0.0, spec.loss}});
    cfg.routers.push_back(r);
    pop.targets.push_back({addr(spec.block, g1, 0, 0xdead), r.address, IcmpKind::DestinationUnreachable});
    pop.expected.push_back(rl_class_of(r.limiter));
  }
  return pop;
}

// ---------------------------------------------------------------------------
// Discovery
// ---------------------------------------------------------------------------

struct DiscoveryDemo {
  Prefix rich;    // /122: router plus 3 live hosts, 60 dead addresses
  Prefix silent;  // no responder at all
};

inline DiscoveryDemo add_discovery_demo(SimConfig& cfg, std::uint16_t block = 0x2800) {
  DiscoveryDemo d{Prefix(addr(block, 0, 0, 0), 122), Prefix(addr(block, 1, 0, 0), 64)};
  SimRouter r;
  r.address = addr(block, 0, 0, 1);
  r.served_prefix = d.rich;
  r.limiter = TokenBucketSpec{10, 100, LimiterScope::Global};
  cfg.routers.push_back(r);
  for (std::uint64_t h = 2; h <= 4; ++h) cfg.hosts.push_back({addr(block, 0, 0, h), true});
  return d;
}

// ---------------------------------------------------------------------------
// Reachability
// ---------------------------------------------------------------------------

struct ReachPopulationSpec {
  int targets = 1000;
  int cut = 149;
  int rvps = 3;
  double loss = 0.02;
  double jitter = 0.2;
  double max_inflation = 0.3;
  bool targets_behind_routers = false;  // give each target its own router
  bool target_isav = false;             // ISAV on those routers
  std::uint16_t rvp_block = 0x2600;
  std::uint16_t target_block = 0x2700;
};

struct ReachPopulation {
  std::vector<Ipv6Address> targets;
  std::vector<DataPair> rvps;
  CoordinateBook coordinates;
  std::map<Ipv6Address, bool> unconnected;
};

inline ReachPopulation add_reach_population(SimConfig& cfg, const ReachPopulationSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(-45.0, 60.0);
  std::uniform_real_distribution<double> lon(-180.0, 180.0);
  std::uniform_real_distribution<double> infl(0.0, spec.max_inflation);
  ReachPopulation pop;

  const GeoPoint prober_at{40.0, -75.0};
  pop.coordinates.add(cfg.prober.address, prober_at);
  // one-way delay for a great-circle distance: fibre speed, path inflated
  auto owd = [&](double km) { return std::max(1.0, km / 400.0 * (1.0 + infl(rng))); };

  const GeoPoint rvp_sites[] = {{51.5, -0.1}, {35.7, 139.7}, {-23.5, -46.6}, {1.3, 103.8}, {37.8, -122.4}};
  std::vector<double> owd_pa;
  std::vector<GeoPoint> rvp_geo;
  for (int i = 0; i < spec.rvps; ++i) {
    const auto g1 = static_cast<std::uint16_t>(i + 1);
    const GeoPoint at = rvp_sites[i % 5];
    SimRouter r;
    r.address = addr(spec.rvp_block, g1, 0, 1);
    r.served_prefix = Prefix(r.address, 48);
    r.limiter = TokenBucketSpec{10, 100, LimiterScope::Global};
    cfg.routers.push_back(r);
    const double d = owd(great_circle_km(prober_at, at));
    cfg.links.push_back({cfg.prober.address, r.address, LinkModel{d, spec.jitter, spec.loss}});
    owd_pa.push_back(d);
    rvp_geo.push_back(at);
    pop.coordinates.add(r.served_prefix, at);
    pop.rvps.push_back(DataPair{addr(spec.rvp_block, g1, 0, 0xdead), r.address, IcmpKind::DestinationUnreachable, 0});
  }

  std::vector<int> order(static_cast<std::size_t>(spec.targets));
  for (int i = 0; i < spec.targets; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::set<int> cut(order.begin(), order.begin() + std::min(spec.cut, spec.targets));

  for (int i = 0; i < spec.targets; ++i) {
    const auto g1 = static_cast<std::uint16_t>(i + 1);
    const GeoPoint at{lat(rng), lon(rng)};
    Ipv6Address b = addr(spec.target_block, g1, 0, 0x100);
    Ipv6Address edge = b;
    if (spec.targets_behind_routers) {
      SimRouter r;
      r.address = addr(spec.target_block, g1, 0, 1);
      r.served_prefix = Prefix(r.address, 48);
      r.isav_ingress = spec.target_isav;
      cfg.routers.push_back(r);
      edge = r.address;
    }
    cfg.hosts.push_back({b, true});
    const double d_pb = owd(great_circle_km(prober_at, at));
    cfg.links.push_back({cfg.prober.address, edge, LinkModel{d_pb, spec.jitter, spec.loss}});
    for (int a = 0; a < spec.rvps; ++a) {
      const auto ai = static_cast<std::size_t>(a);
      double d_ab = owd(great_circle_km(at, rvp_geo[ai]));
      // keep the triangle through the prober
      d_ab = std::clamp(d_ab, std::max(1.0, std::abs(owd_pa[ai] - d_pb)), owd_pa[ai] + d_pb);
      cfg.links.push_back({edge, pop.rvps[ai].periphery, LinkModel{d_ab, spec.jitter, spec.loss}});
      if (cut.count(i)) cfg.unreachable_pairs.push_back({Prefix(b, 128), pop.rvps[ai].periphery});
    }
    pop.coordinates.add(b, at);
    pop.targets.push_back(b);
    pop.unconnected[b] = cut.count(i) > 0;
  }
  return pop;
}

}  // namespace ivantage::demo
