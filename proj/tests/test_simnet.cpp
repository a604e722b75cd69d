#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ivantage/simnet.hpp"

using namespace ivantage;

namespace {

const Ipv6Address kProber = Ipv6Address::parse("2001:db8:ffff::1");
const Ipv6Address kRouter = Ipv6Address::parse("2400:1::1");
const Ipv6Address kDead = Ipv6Address::parse("2400:1::dead");
const Ipv6Address kHost = Ipv6Address::parse("2700:1::100");

SimConfig one_router(RateLimiterSpec limiter, bool isav = false) {
  SimConfig cfg;
  cfg.prober = {kProber, Prefix::parse("2001:db8:ffff::/48")};
  SimRouter r;
  r.address = kRouter;
  r.served_prefix = Prefix::parse("2400:1::/48");
  r.limiter = limiter;
  r.isav_ingress = isav;
  cfg.routers.push_back(r);
  cfg.hosts.push_back({kHost, true});
  cfg.default_link = {10.0, 0.0, 0.0};
  return cfg;
}

std::vector<TimedPacket> burst(const Ipv6Address& src, const Ipv6Address& dst, int n, Timestamp t0 = 0) {
  std::vector<TimedPacket> out;
  for (int i = 0; i < n; ++i) {
    ProbePacket p;
    p.src = src;
    p.dst = dst;
    p.probe_id = static_cast<ProbeId>(i + 1);
    out.push_back({t0 + i, p});
  }
  return out;
}

}  // namespace

TEST_CASE("fresh cap-10 bucket answers 10 of 50", "[simnet]") {
  auto obs = run_events(one_router(TokenBucketSpec{10, 100, LimiterScope::Global}), burst(kProber, kDead, 50));
  REQUIRE(obs.size() == 10);
  for (const auto& o : obs) {
    CHECK(o.kind == IcmpKind::DestinationUnreachable);
    CHECK(o.origin == kRouter);
    CHECK(o.quoted_dst == kDead);
  }
}

TEST_CASE("unlimited router answers every probe", "[simnet]") {
  CHECK(run_events(one_router(UnlimitedSpec{}), burst(kProber, kDead, 50)).size() == 50);
}

TEST_CASE("time exceeded replies when configured", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  cfg.routers[0].unreachable_reply = IcmpKind::TimeExceeded;
  auto obs = run_events(cfg, burst(kProber, kDead, 3));
  REQUIRE(obs.size() == 3);
  CHECK(obs[0].kind == IcmpKind::TimeExceeded);
}

TEST_CASE("echo replies from routers use the echo limiter", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  cfg.routers[0].echo_limiter = TokenBucketSpec{5, 1000, LimiterScope::Global};
  auto obs = run_events(cfg, burst(kProber, kRouter, 20));
  CHECK(obs.size() == 5);
  CHECK(run_events(cfg, burst(kProber, kHost, 20)).size() == 20);
}

TEST_CASE("replies reach the prober only at its own address", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  const auto other = Ipv6Address::parse("2001:db8:ffff::77");
  CHECK(run_events(cfg, burst(other, kDead, 10)).empty());
}

TEST_CASE("round trip follows link delays", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  cfg.links.push_back({kProber, kRouter, {25.0, 0.0, 0.0}});
  auto obs = run_events(cfg, burst(kProber, kDead, 1, 100));
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].received_at == 150);
}

TEST_CASE("ingress validation drops sources from the served prefix", "[simnet]") {
  for (bool isav : {false, true}) {
    Simulator sim(one_router(UnlimitedSpec{}, isav));
    std::vector<GeneratedMessage> gen;
    sim.set_generation_hook([&](const GeneratedMessage& m) { gen.push_back(m); });
    ProbePacket inside;
    inside.src = Ipv6Address::parse("2400:1::abcd");
    inside.dst = kDead;
    ProbePacket outside;
    outside.src = Ipv6Address::parse("2001:db8:ffff::9");
    outside.dst = kDead;
    sim.inject(0, inside);
    sim.inject(1, outside);
    sim.run_all();
    std::size_t from_inside = 0;
    for (const auto& g : gen) from_inside += g.invoking_src == inside.src ? 1 : 0;
    CHECK(from_inside == (isav ? 0U : 1U));
    CHECK(gen.size() == (isav ? 1U : 2U));
    CHECK(sim.stats().isav_dropped == (isav ? 1U : 0U));
  }
}

TEST_CASE("cut edges suppress delivery from the source network", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  cfg.unreachable_pairs.push_back({Prefix(kHost, 128), kRouter});
  CHECK_FALSE(oracle_reachable(cfg, kHost, kRouter));
  CHECK(oracle_reachable(cfg, kRouter, kHost));
  CHECK(oracle_reachable(cfg, kProber, kRouter));

  // echo requests to the host spoofed from the dead address: the replies
  // would be answered by the router, but the cut drops them
  for (bool cut : {false, true}) {
    auto c = cfg;
    if (!cut) c.unreachable_pairs.clear();
    Simulator sim(c);
    std::size_t errors_to_host = 0;
    sim.set_generation_hook([&](const GeneratedMessage& m) {
      if (m.origin == kRouter && m.invoking_src == kHost) ++errors_to_host;
    });
    for (int i = 0; i < 5; ++i) {
      ProbePacket p;
      p.src = kDead;
      p.dst = kHost;
      sim.inject(i, p);
    }
    sim.run_all();
    CHECK(errors_to_host == (cut ? 0U : 5U));
    CHECK(sim.stats().cut_dropped == (cut ? 5U : 0U));
  }
}

TEST_CASE("jittered delays stay inside their bounds", "[simnet]") {
  auto cfg = one_router(UnlimitedSpec{});
  cfg.links.push_back({kProber, kRouter, {40.0, 0.2, 0.05}});
  Simulator sim(cfg);
  int lost = 0;
  for (std::uint64_t id = 1; id <= 20000; ++id) {
    auto d = sim.link_delay(kProber, kRouter, id);
    if (!d) {
      ++lost;
      continue;
    }
    REQUIRE(*d >= 32);
    REQUIRE(*d <= 48);
  }
  CHECK(std::abs(lost / 20000.0 - 0.05) < 0.01);
  CHECK(sim.link_delay(kProber, kRouter, 7) == sim.link_delay(kRouter, kProber, 7));
}

TEST_CASE("same seed, same trace", "[simnet]") {
  auto cfg = one_router(TokenBucketSpec{10, 100, LimiterScope::Global});
  cfg.default_link = {30.0, 0.2, 0.1};
  cfg.seed = 99;
  auto pkts = burst(kProber, kDead, 300);
  CHECK(run_events(cfg, pkts) == run_events(cfg, pkts));
  auto other = cfg;
  other.seed = 100;
  CHECK(run_events(cfg, pkts) != run_events(other, pkts));
}

TEST_CASE("simulator input checks", "[simnet]") {
  Simulator sim(one_router(UnlimitedSpec{}));
  sim.run_until(100);
  ProbePacket p;
  p.src = kProber;
  p.dst = kDead;
  CHECK_THROWS_AS(sim.inject(50, p), std::invalid_argument);
  p.hop_limit = 0;
  CHECK_THROWS_AS(sim.inject(200, p), std::invalid_argument);

  auto bad = one_router(UnlimitedSpec{});
  bad.hosts.push_back({kRouter, true});
  CHECK_THROWS_AS(Simulator(bad), ConfigError);
  auto bad_link = one_router(UnlimitedSpec{});
  bad_link.default_link.loss_prob = 1.5;
  CHECK_THROWS_AS(Simulator(bad_link), ConfigError);
  CHECK_THROWS_AS(run_events(one_router(UnlimitedSpec{}), {{5, p}, {1, p}}), std::invalid_argument);
}

TEST_CASE("oracles read the configuration", "[simnet]") {
  auto cfg = one_router(TokenBucketSpec{}, true);
  CHECK(oracle_isav(cfg, Prefix::parse("2400:1::/48")));
  CHECK(oracle_isav(cfg, Prefix::parse("2400:1:0:5::/64")));
  CHECK_THROWS_AS(oracle_isav(cfg, Prefix::parse("2400:2::/48")), InputError);
  CHECK(oracle_rl_class(cfg, kRouter, IcmpKind::DestinationUnreachable) == RateLimitClass::Global);
  CHECK(oracle_rl_class(cfg, kRouter, IcmpKind::EchoReply) == RateLimitClass::Loose);
  CHECK(oracle_rl_class(cfg, kHost, IcmpKind::EchoReply) == RateLimitClass::Loose);
  CHECK_THROWS_AS(oracle_reachable(cfg, Ipv6Address::parse("3000::1"), kRouter), InputError);
}
