#include <catch_amalgamated.hpp>

#include <cstdio>
#include <random>
#include <string>

#include "ivantage/model.hpp"

using namespace ivantage;

namespace {

// Uncompressed eight-group rendering, independent of inet_ntop.
std::string full_form(std::uint64_t hi, std::uint64_t lo) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%x:%x:%x:%x:%x:%x:%x:%x", unsigned(hi >> 48), unsigned(hi >> 32 & 0xffff),
                unsigned(hi >> 16 & 0xffff), unsigned(hi & 0xffff), unsigned(lo >> 48), unsigned(lo >> 32 & 0xffff),
                unsigned(lo >> 16 & 0xffff), unsigned(lo & 0xffff));
  return buf;
}

}  // namespace

TEST_CASE("address text round trips", "[model]") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 10000; ++i) {
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    if (i % 4 == 1) lo &= 0xffff;  // long zero runs exercise '::'
    if (i % 4 == 2) hi &= 0xffff000000000000ULL;
    const auto a = Ipv6Address::parse(full_form(hi, lo));
    REQUIRE(a.hi() == hi);
    REQUIRE(a.lo() == lo);
    REQUIRE(Ipv6Address::parse(a.to_string()) == a);
  }
}

TEST_CASE("canonical text form", "[model]") {
  CHECK(Ipv6Address::parse("2001:0db8:0000:0000:0000:0000:0000:0001").to_string() == "2001:db8::1");
  CHECK(Ipv6Address::parse("::").to_string() == "::");
  CHECK_THROWS_AS(Ipv6Address::parse("2001:db8::1::2"), InputError);
  CHECK_THROWS_AS(Ipv6Address::parse("10.0.0.1"), InputError);
  CHECK_FALSE(Ipv6Address::try_parse("nope").has_value());
}

TEST_CASE("prefix masking and containment", "[model]") {
  const auto p = Prefix::parse("2000:1234::ffff/40");
  CHECK(p.to_string() == "2000:1234::/40");
  CHECK(p.contains(Ipv6Address::parse("2000:1234:00ff:ffff::1")));
  CHECK_FALSE(p.contains(Ipv6Address::parse("2000:1234:0100::1")));
  CHECK(Prefix::parse("::/0").contains(Ipv6Address::parse("ffff::1")));
  CHECK(Prefix::parse("2001:db8::1").length() == 128);
  CHECK_THROWS_AS(Prefix::parse("2001:db8::/129"), InputError);
  CHECK_THROWS_AS(Prefix::parse("2001:db8::/x"), InputError);

  // bitwise oracle for masked()
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Ipv6Address a(rng(), rng());
    const unsigned len = static_cast<unsigned>(rng() % 129);
    const auto m = a.masked(len);
    for (unsigned b = 0; b < 128; ++b) REQUIRE(m.bit(b) == (b < len && a.bit(b)));
    REQUIRE((m | a.host_bits(len)) == a);
  }
}

TEST_CASE("icmp kinds", "[model]") {
  CHECK(is_error_kind(IcmpKind::DestinationUnreachable));
  CHECK(is_error_kind(IcmpKind::TimeExceeded));
  CHECK_FALSE(is_error_kind(IcmpKind::EchoReply));
  CHECK_FALSE(is_error_kind(IcmpKind::EchoRequest));
  for (auto k : {IcmpKind::EchoRequest, IcmpKind::EchoReply, IcmpKind::DestinationUnreachable, IcmpKind::TimeExceeded}) {
    CHECK(parse_icmp_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_icmp_kind("redirect"), InputError);
}

TEST_CASE("spoofed sources stay in their networks", "[model]") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5000; ++i) {
    const Ipv6Address local(rng(), rng());
    const Ipv6Address rvp(rng(), rng());
    const auto s = spoof_sources(local, rvp, rng());
    REQUIRE(Prefix(local, 80).contains(s.local_spoof));
    REQUIRE(Prefix(rvp, 124).contains(s.target_spoof));
    REQUIRE(s.local_spoof != local);
    REQUIRE(s.target_spoof != rvp);
  }
  const Ipv6Address a = Ipv6Address::parse("2001:db8::1");
  const Ipv6Address b = Ipv6Address::parse("2400:1::1");
  CHECK(spoof_sources(a, b, 5).local_spoof == spoof_sources(a, b, 5).local_spoof);
}

TEST_CASE("measurement parameter validation", "[model]") {
  MeasurementParams p;
  CHECK_NOTHROW(p.validate());
  p.lambda = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.lambda = 0.6;
  p.n_probe = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
