#include <catch_amalgamated.hpp>

#include <random>

#include "ivantage/demo.hpp"
#include "ivantage/ratelimit.hpp"

using namespace ivantage;

TEST_CASE("burst interleaves noise in proportion", "[ratelimit]") {
  const auto local = Ipv6Address::parse("2001:db8::1");
  const auto spoof = Ipv6Address::parse("2001:db8::99");
  const auto dst = Ipv6Address::parse("2400::dead");
  for (int n : {1, 7, 50, 60}) {
    for (int m : {0, 1, 50, 100, 107}) {
      auto plan = build_burst(local, dst, n, NoiseSpec{m, spoof}, 1000);
      REQUIRE(plan.packets.size() == static_cast<std::size_t>(n + m));
      int probes = 0;
      int noise = 0;
      for (std::size_t i = 0; i < plan.packets.size(); ++i) {
        const auto& p = plan.packets[i].packet;
        REQUIRE(plan.packets[i].offset == static_cast<DurationMs>(i));
        REQUIRE(p.dst == dst);
        if (p.src == local) {
          REQUIRE(p.probe_id == 1000 + static_cast<ProbeId>(probes));
          ++probes;
        } else {
          REQUIRE(p.src == spoof);
          REQUIRE(p.probe_id == 1000 + static_cast<ProbeId>(n + noise));
          ++noise;
        }
        // probes sent so far never run ahead of the exact proportion
        const double share = static_cast<double>(n) * static_cast<double>(i + 1) / (n + m);
        REQUIRE(std::abs(probes - share) < 1.0);
      }
      CHECK(probes == n);
      CHECK(noise == m);
    }
  }
}

TEST_CASE("classification precedence", "[ratelimit]") {
  CHECK(classify(1.0, 1.0, 50, 0.6) == RateLimitClass::Strict);
  CHECK(classify(1.05, 0.0, 50, 0.6) == RateLimitClass::Strict);
  CHECK(classify(50, 50, 50, 0.6) == RateLimitClass::Loose);
  CHECK(classify(50, 47.5, 50, 0.6) == RateLimitClass::Loose);
  CHECK(classify(10, 3, 50, 0.6) == RateLimitClass::Global);
  CHECK(classify(10, 6, 50, 0.6) == RateLimitClass::Unclassified);
  CHECK(classify(0, 0, 50, 0.6) == RateLimitClass::Unclassified);
}

TEST_CASE("observability", "[ratelimit]") {
  CHECK(observability(10, 4) == Catch::Approx(0.6));
  CHECK(observability(10, 12) == 0.0);
  CHECK_THROWS_AS(observability(0, 1), InputError);
}

TEST_CASE("budget splits", "[ratelimit]") {
  CHECK(split_for_ratio(150, 0.5) == NoiseSplit{50, 100});
  CHECK(split_for_ratio(150, 1.0) == NoiseSplit{75, 75});
  CHECK(split_for_ratio(150, 1.5) == NoiseSplit{90, 60});
  CHECK(split_for_ratio(150, 2.0) == NoiseSplit{100, 50});
  CHECK(split_for_ratio(150, 2.5) == NoiseSplit{107, 43});
  CHECK_THROWS_AS(split_for_ratio(0, 1.0), InputError);
}

TEST_CASE("pacer separates bursts at one node", "[ratelimit]") {
  auto cfg = demo::base_config(1);
  SimTransport t(cfg);
  BurstPacer pacer;
  const auto node = Ipv6Address::parse("2400::1");
  t.sleep_until(123);
  pacer.wait_for(t, node, IcmpKind::DestinationUnreachable, 150);
  CHECK(t.now() == 1000);
  pacer.record(node, 1150);
  pacer.wait_for(t, node, IcmpKind::DestinationUnreachable, 150);
  CHECK(t.now() == 4000);
  pacer.record(node, 4150);
  pacer.wait_for(t, Ipv6Address::parse("2400::2"), IcmpKind::DestinationUnreachable, 150);
  CHECK(t.now() == 4000);
  pacer.wait_for(t, node, IcmpKind::EchoReply, 150);
  CHECK(t.now() == 15000);
}

TEST_CASE("rcv of a known bucket", "[ratelimit]") {
  auto cfg = demo::base_config(1);
  SimRouter r;
  r.address = Ipv6Address::parse("2400:1::1");
  r.served_prefix = Prefix::parse("2400:1::/48");
  r.limiter = TokenBucketSpec{10, 100, LimiterScope::Global};
  cfg.routers.push_back(r);
  SimTransport t(cfg);
  BurstPacer pacer;
  const auto dst = Ipv6Address::parse("2400:1::dead");
  auto s1 = measure_rcv(t, dst, IcmpKind::DestinationUnreachable, 50, std::nullopt, r.address, 1000, &pacer);
  CHECK(s1.rcv == 10);
  // 150 packets over 150 ms: one refill, 11 grants shared 1:2
  auto s2 = measure_rcv(t, dst, IcmpKind::DestinationUnreachable, 50,
                        NoiseSpec{100, Ipv6Address::parse("2001:db8:ffff::77")}, r.address, 1000, &pacer);
  CHECK(s2.rcv < s1.rcv);
  CHECK(s2.with_noise);
  CHECK_THROWS_AS(measure_rcv(t, dst, IcmpKind::DestinationUnreachable, 0, std::nullopt, r.address, 1000), InputError);
}

TEST_CASE("classification matches the oracle on a mixed population", "[ratelimit]") {
  auto cfg = demo::base_config(5);
  auto pop = demo::add_rl_population(cfg, {20, 20, 20, 0.0, 0x2500}, 5);
  SimTransport t(cfg);
  MeasurementParams p{50, 100, 0.6, 3, 1000};
  auto res = run_rl_classification(pop.targets, p, t, 5);
  REQUIRE(res.size() == pop.targets.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    CHECK(res[i].cls == pop.expected[i]);
    CHECK(res[i].cls == oracle_rl_class(cfg, pop.targets[i].origin, pop.targets[i].kind));
    CHECK(res[i].rcv1.size() == 3);
  }
}

TEST_CASE("observability grows with the noise ratio", "[ratelimit]") {
  auto cfg = demo::base_config(2);
  auto pop = demo::add_rl_population(cfg, {40, 0, 0, 0.0, 0x2500}, 2);
  SimTransport t(cfg);
  auto rows = ratio_sweep(pop.targets, 150, {0.5, 1.0, 1.5, 2.0, 2.5}, t);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].mean_observability >= rows[i - 1].mean_observability);
  CHECK(rows.back().mean_observability > rows.front().mean_observability);
  for (const auto& r : rows) CHECK(r.measured == 40);
}

TEST_CASE("sufficiency table shrinks with budget", "[ratelimit]") {
  auto cfg = demo::base_config(3);
  auto pop = demo::add_rl_population(cfg, {20, 0, 10, 0.0, 0x2500}, 3);
  SimTransport t(cfg);
  auto table = sufficiency_sweep(pop.targets, {30, 150}, {0.1, 0.3}, t);
  REQUIRE(table.insufficient.size() == 2);
  for (const auto& row : table.insufficient) {
    for (double v : row) CHECK((v >= 0.0 && v <= 1.0));
    // unlimited routers never decline
    CHECK(row[0] >= 10.0 / 30.0 - 1e-9);
  }
  CHECK_THROWS_AS(sufficiency_sweep(pop.targets, {}, {0.1}, t), InputError);
}
