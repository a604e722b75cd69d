#include <catch_amalgamated.hpp>

#include <vector>

#include "ivantage/transport.hpp"

using namespace ivantage;

namespace {

const Ipv6Address kProber = Ipv6Address::parse("2001:db8:ffff::1");
const Ipv6Address kRouter = Ipv6Address::parse("2400:1::1");
const Ipv6Address kDead = Ipv6Address::parse("2400:1::dead");

SimConfig scenario(RateLimiterSpec limiter, LinkModel link = {10.0, 0.0, 0.0}) {
  SimConfig cfg;
  cfg.prober = {kProber, Prefix::parse("2001:db8:ffff::/48")};
  SimRouter r;
  r.address = kRouter;
  r.served_prefix = Prefix::parse("2400:1::/48");
  r.limiter = limiter;
  cfg.routers.push_back(r);
  cfg.default_link = link;
  cfg.seed = 5;
  return cfg;
}

SendPlan probes(int n, ProbeId first, DurationMs spacing = 1) {
  SendPlan plan;
  for (int i = 0; i < n; ++i) {
    ProbePacket p;
    p.src = kProber;
    p.dst = kDead;
    p.probe_id = first + static_cast<ProbeId>(i);
    plan.add(i * spacing, p);
  }
  return plan;
}

}  // namespace

TEST_CASE("send plans carry echo requests only", "[transport]") {
  SendPlan plan = probes(3, 1);
  CHECK_NOTHROW(plan.validate());
  plan.packets[1].packet.kind = IcmpKind::EchoReply;
  CHECK_THROWS_AS(plan.validate(), TransportError);
  SendPlan back = probes(3, 1);
  back.packets[2].offset = 0;
  back.packets[1].offset = 5;
  CHECK_THROWS_AS(back.validate(), TransportError);
  SendPlan hop = probes(1, 1);
  hop.packets[0].packet.hop_limit = 256;
  CHECK_THROWS_AS(hop.validate(), TransportError);
}

TEST_CASE("cap-10 bucket through the transport", "[transport]") {
  SimTransport t(scenario(TokenBucketSpec{10, 100, LimiterScope::Global}));
  const ProbeId first = t.reserve_ids(50);
  CollectWindow w;
  w.open_at = t.now();
  w.duration_ms = 1000;
  w.filter.kind = IcmpKind::DestinationUnreachable;
  w.filter.origin = kRouter;
  w.filter.quoted_dst = kDead;
  w.filter.probe_ids = std::make_pair(first, first + 50);
  auto obs = t.execute(probes(50, first), w);
  CHECK(obs.size() == 10);
  CHECK(t.now() >= 1000);
  CHECK(t.reserve_ids(1) == first + 50);
}

TEST_CASE("transport is transparent to the simulator", "[transport]") {
  const auto cfg = scenario(TokenBucketSpec{7, 50, LimiterScope::Global}, {20.0, 0.3, 0.1});
  SimTransport t(cfg);
  SendPlan plan = probes(200, 1, 2);
  CollectWindow w;
  w.open_at = 0;
  w.duration_ms = 5000;
  auto got = t.execute(plan, w);

  std::vector<TimedPacket> timed;
  for (const auto& p : plan.packets) timed.push_back({p.offset, p.packet});
  CHECK(got == run_events(cfg, timed));
}

TEST_CASE("filters select by origin, quote and probe id", "[transport]") {
  SimTransport t(scenario(UnlimitedSpec{}));
  CollectWindow w;
  w.open_at = 0;
  w.duration_ms = 1000;
  w.filter.probe_ids = std::make_pair(ProbeId{3}, ProbeId{6});
  CHECK(t.execute(probes(10, 1), w).size() == 3);
  w.open_at = t.now();
  w.filter = {};
  w.filter.origin = kDead;
  CHECK(t.execute(probes(10, 20), w).empty());
  w.open_at = t.now();
  w.filter = {};
  w.filter.kind = IcmpKind::EchoReply;
  CHECK(t.execute(probes(10, 40), w).empty());
}

TEST_CASE("observations outside the window are discarded", "[transport]") {
  SimTransport t(scenario(UnlimitedSpec{}, {100.0, 0.0, 0.0}));
  CollectWindow w;
  w.open_at = 0;
  w.duration_ms = 150;  // replies arrive at 200
  CHECK(t.execute(probes(1, 1), w).empty());
}

TEST_CASE("per-prefix pacing cap", "[transport]") {
  SimTransport t(scenario(UnlimitedSpec{}), RateCap{200.0, 1000.0, 48});
  CollectWindow w;
  w.open_at = 0;
  w.duration_ms = 1;
  SendPlan plan;
  for (int i = 0; i < 1400; ++i) {
    ProbePacket p;
    p.src = kProber;
    p.dst = kDead;
    p.probe_id = static_cast<ProbeId>(i + 1);
    plan.add(0, p);
  }
  t.execute(plan, w);
  const auto& e = t.last_emissions();
  REQUIRE(e.size() == 1400);
  CHECK(e[999] == 0);
  CHECK(e[1000] > 0);
  // after the allowance, 400 more packets need 2 s at 200/s
  CHECK(e.back() >= 1990);
  CHECK(e.back() <= 2010);
  for (std::size_t i = 1001; i < e.size(); ++i) REQUIRE(e[i] - e[i - 1] >= 4);
}

TEST_CASE("sleep advances the clock and drops stray replies", "[transport]") {
  SimTransport t(scenario(UnlimitedSpec{}));
  t.sleep_until(5000);
  CHECK(t.now() == 5000);
  t.sleep_until(10);
  CHECK(t.now() == 5000);
}

TEST_CASE("raw backend contract", "[transport]") {
  RawTransportOptions o;
  CHECK_THROWS_AS(RawTransport(o), ConfigError);
  o.interface = "eth0";
  o.allow_spoofing = true;
  CHECK_THROWS_AS(RawTransport(o), ConfigError);
  o.spoofing_acknowledged = true;
  RawTransport raw(o);
  CollectWindow w;
  CHECK_THROWS_AS(raw.execute(probes(1, 1), w), TransportError);
}
