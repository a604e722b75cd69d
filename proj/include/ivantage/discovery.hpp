#pragma once

// Remote vantage point discovery: pseudo-random targets inside each BGP
// prefix, probed in a randomized interleaved order; ICMP errors quoting a
// target yield <target, periphery> data pairs.

#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ivantage/model.hpp"
#include "ivantage/random.hpp"
#include "ivantage/transport.hpp"

namespace ivantage {

// ---------------------------------------------------------------------------
// Number theory for the probe permutation
// ---------------------------------------------------------------------------

namespace detail {

using u128 = unsigned __int128;

constexpr std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

constexpr std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1U) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1U;
  }
  return result;
}

// Deterministic Miller-Rabin for 64-bit integers.
constexpr bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1U) == 0) {
    d >>= 1U;
    ++s;
  }
  for (std::uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL, 29ULL, 31ULL, 37ULL}) {
    std::uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

inline std::vector<std::uint64_t> distinct_prime_factors(std::uint64_t n) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t f = 2; f * f <= n; f += (f == 2 ? 1 : 2)) {
    if (n % f == 0) {
      out.push_back(f);
      while (n % f == 0) n /= f;
    }
  }
  if (n > 1) out.push_back(n);
  return out;
}

// Smallest primitive root of prime p, candidates tried in ascending order.
inline std::uint64_t smallest_primitive_root(std::uint64_t p) {
  if (p == 2) return 1;
  const auto factors = distinct_prime_factors(p - 1);
  for (std::uint64_t g = 2; g < p; ++g) {
    bool ok = true;
    for (std::uint64_t q : factors) {
      if (powmod(g, (p - 1) / q, p) == 1) {
        ok = false;
        break;
      }
    }
    if (ok) return g;
  }
  throw std::logic_error("no primitive root found");
}

}  // namespace detail

// Visits 1..n exactly once in the order g^1, g^2, ... mod p, where p is the
// smallest prime above n. Seed 0 uses the smallest primitive root and starts
// at g^1; other seeds pick a different generator and starting point.
class CyclicPermutation {
 public:
  static constexpr std::uint64_t kMaxN = 1ULL << 40;

  CyclicPermutation(std::uint64_t n, std::uint64_t seed) : n_(n) {
    if (n < 2) throw InputError("cyclic permutation requires n >= 2");
    if (n > kMaxN) throw InputError("cyclic permutation domain too large");
    p_ = n + 1;
    while (!detail::is_prime(p_)) ++p_;
    root_ = detail::smallest_primitive_root(p_);
    generator_ = root_;
    current_ = 1;
    if (seed != 0) {
      const std::uint64_t order = p_ - 1;
      std::uint64_t e = 1 + mix64(seed) % order;
      while (std::gcd(e, order) != 1) e = e % order + 1;
      generator_ = detail::powmod(root_, e, p_);
      current_ = 1 + mix64(seed ^ 0xA5A5A5A5A5A5A5A5ULL) % order;
    }
  }

  std::uint64_t n() const { return n_; }
  std::uint64_t prime() const { return p_; }
  std::uint64_t primitive_root() const { return root_; }
  std::uint64_t generator() const { return generator_; }

  std::optional<std::uint64_t> next() {
    while (steps_ < p_ - 1) {
      current_ = detail::mulmod(current_, generator_, p_);
      ++steps_;
      if (current_ <= n_) return current_;
    }
    return std::nullopt;
  }

  std::vector<std::uint64_t> take_all() {
    std::vector<std::uint64_t> out;
    out.reserve(static_cast<std::size_t>(n_));
    while (auto v = next()) out.push_back(*v);
    return out;
  }

 private:
  std::uint64_t n_;
  std::uint64_t p_ = 0;
  std::uint64_t root_ = 0;
  std::uint64_t generator_ = 0;
  std::uint64_t current_ = 1;
  std::uint64_t steps_ = 0;
};

inline CyclicPermutation cyclic_permutation(std::uint64_t n, std::uint64_t seed) { return {n, seed}; }

// ---------------------------------------------------------------------------
// Target generation
// ---------------------------------------------------------------------------

// Number of /64 subnets a prefix spans (1 for /64 and longer), saturating at 2^63.
inline std::uint64_t subnet_count(const Prefix& p) {
  if (p.length() >= 64) return 1;
  const unsigned bits = 64 - p.length();
  return bits >= 63 ? (1ULL << 63) : (1ULL << bits);
}

// Bits [len, 64) carry `index`; the interface identifier is random per
// (prefix, index, seed). Prefixes longer than /64 take random host bits below
// the prefix and use `index` only as the randomization key.
inline Ipv6Address generate_target(const Prefix& prefix, std::uint64_t index, std::uint64_t seed) {
  const std::uint64_t h1 = hash_keys({seed, prefix.base().hi(), prefix.base().lo(), prefix.length(), index});
  if (prefix.length() >= 64) {
    const std::uint64_t h2 = mix64(h1);
    return prefix.base() | Ipv6Address(h2, h1).host_bits(prefix.length());
  }
  if (prefix.length() > 0 && index >= subnet_count(prefix)) {
    throw InputError("target index out of range for " + prefix.to_string());
  }
  return Ipv6Address(prefix.base().hi() | index, h1);
}

// ---------------------------------------------------------------------------
// Data pair extraction
// ---------------------------------------------------------------------------

inline DataPair extract_pair(const IcmpObservation& obs) {
  if (!is_error_kind(obs.kind)) {
    throw InputError("cannot extract a data pair from " + std::string(to_string(obs.kind)));
  }
  if (!obs.quoted_dst) throw InputError("ICMP error without a quoted destination");
  return DataPair{*obs.quoted_dst, obs.origin, obs.kind, obs.received_at};
}

// ---------------------------------------------------------------------------
// Scanner
// ---------------------------------------------------------------------------

struct DiscoveryCaps {
  std::size_t pair_cap = 50;
  std::size_t probe_cap = 1'000'000;

  void validate() const {
    if (pair_cap < 1) throw ConfigError("pair_cap must be >= 1");
    if (probe_cap < pair_cap) throw ConfigError("probe_cap must be >= pair_cap");
  }
};

struct DiscoveryOptions {
  double pacing_pps = 100.0;        // per prefix
  std::size_t batch_rounds = 100;   // scheduling rounds per transport call
  DurationMs receive_window_ms = 1000;
};

struct PrefixScanState {
  Prefix prefix;
  std::size_t sent = 0;
  std::vector<DataPair> pairs_found;
  bool done = false;
  std::vector<std::uint64_t> probed;  // permutation values, in send order
};

struct DiscoveryResult {
  std::vector<PrefixScanState> prefixes;  // input order
  std::vector<std::size_t> schedule;      // prefix index of every emitted probe
  bool partial = false;
  std::string error;

  std::map<Prefix, std::vector<DataPair>> pairs() const {
    std::map<Prefix, std::vector<DataPair>> out;
    for (const auto& s : prefixes) out[s.prefix] = s.pairs_found;
    return out;
  }
};

namespace detail {

// Permutation domain used for a prefix. Structured /64 indices are permuted
// directly up to 2^32; beyond that the index space is strided.
inline std::uint64_t scan_domain(const Prefix& p, const DiscoveryCaps& caps) {
  if (p.length() >= 64) return std::max<std::uint64_t>(2, caps.probe_cap);
  return std::max<std::uint64_t>(2, std::min<std::uint64_t>(subnet_count(p), 1ULL << 32));
}

inline std::uint64_t scan_index(const Prefix& p, std::uint64_t value, std::uint64_t seed) {
  if (p.length() >= 64) return value;
  const std::uint64_t space = subnet_count(p);
  if (space <= (1ULL << 32)) return (value - 1) % space;
  const std::uint64_t stride = space >> 32;
  return (value - 1) * stride + mix64(seed ^ value) % stride;
}

}  // namespace detail

// Probe order for the prefix at position `position` of a discovery run.
inline CyclicPermutation scan_permutation(const Prefix& p, const DiscoveryCaps& caps, std::uint64_t seed,
                                          std::size_t position) {
  return {detail::scan_domain(p, caps), hash_keys({seed, position}) | 1U};
}

class DiscoveryScanner {
 public:
  DiscoveryScanner(std::vector<Prefix> prefixes, DiscoveryCaps caps, std::uint64_t seed, DiscoveryOptions opts = {})
      : caps_(caps), seed_(seed), opts_(opts) {
    if (prefixes.empty()) throw InputError("discovery needs at least one prefix");
    caps_.validate();
    if (!(opts_.pacing_pps > 0.0) || opts_.batch_rounds == 0) throw ConfigError("invalid discovery pacing");
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      PrefixScanState st;
      st.prefix = prefixes[i];
      result_.prefixes.push_back(std::move(st));
      perms_.push_back(scan_permutation(prefixes[i], caps_, seed_, i));
    }
    if (prefixes.size() >= 2) {
      CyclicPermutation order(prefixes.size(), seed_ | 1U);
      while (auto v = order.next()) order_.push_back(static_cast<std::size_t>(*v - 1));
    } else {
      order_.push_back(0);
    }
  }

  DiscoveryResult run(Transport& transport) {
    const DurationMs period = std::max<DurationMs>(1, static_cast<DurationMs>(1000.0 / opts_.pacing_pps));
    while (!all_done()) {
      SendPlan plan;
      std::vector<std::size_t> owner;
      std::vector<Ipv6Address> targets;
      for (std::size_t round = 0; round < opts_.batch_rounds; ++round) {
        std::vector<std::size_t> active;
        for (std::size_t idx : order_) {
          if (!result_.prefixes[idx].done) active.push_back(idx);
        }
        if (active.empty()) break;
        for (std::size_t j = 0; j < active.size(); ++j) {
          const std::size_t idx = active[j];
          auto& st = result_.prefixes[idx];
          auto value = perms_[idx].next();
          if (!value) {
            st.done = true;
            continue;
          }
          const Ipv6Address target =
              generate_target(st.prefix, detail::scan_index(st.prefix, *value, seed_), seed_ ^ idx);
          ProbePacket pkt;
          pkt.src = transport.local_address();
          pkt.dst = target;
          pkt.hop_limit = kDefaultHopLimit;
          const DurationMs offset = static_cast<DurationMs>(round) * period +
                                    static_cast<DurationMs>(j) * period / static_cast<DurationMs>(active.size());
          plan.add(offset, pkt);
          owner.push_back(idx);
          targets.push_back(target);
          st.probed.push_back(*value);
          result_.schedule.push_back(idx);
          if (++st.sent >= caps_.probe_cap) st.done = true;
        }
      }
      if (plan.empty()) break;

      const ProbeId first = transport.reserve_ids(plan.packets.size());
      for (std::size_t k = 0; k < plan.packets.size(); ++k) plan.packets[k].packet.probe_id = first + k;

      CollectWindow window;
      window.open_at = transport.now();
      window.duration_ms = plan.span() + opts_.receive_window_ms;
      window.filter.probe_ids = std::make_pair(first, first + plan.packets.size());

      std::vector<IcmpObservation> obs;
      try {
        obs = transport.execute(plan, window);
      } catch (const TransportError& e) {
        result_.partial = true;
        result_.error = e.what();
        return result_;
      }
      for (const auto& o : obs) {
        if (!is_error_kind(o.kind) || !o.quoted_dst) continue;
        const std::size_t k = static_cast<std::size_t>(o.probe_id - first);
        const std::size_t idx = owner[k];
        auto& st = result_.prefixes[idx];
        if (st.pairs_found.size() >= caps_.pair_cap) continue;
        DataPair pair = extract_pair(o);
        if (pair.target != targets[k] || !st.prefix.contains(pair.target)) continue;
        if (!seen_[idx].insert({pair.target, pair.periphery}).second) continue;
        st.pairs_found.push_back(pair);
      }
      for (auto& st : result_.prefixes) {
        if (st.pairs_found.size() >= caps_.pair_cap || st.sent >= caps_.probe_cap) st.done = true;
      }
    }
    return result_;
  }

 private:
  bool all_done() const {
    for (const auto& s : result_.prefixes) {
      if (!s.done) return false;
    }
    return true;
  }

  DiscoveryCaps caps_;
  std::uint64_t seed_;
  DiscoveryOptions opts_;
  DiscoveryResult result_;
  std::vector<CyclicPermutation> perms_;
  std::vector<std::size_t> order_;
  std::map<std::size_t, std::set<std::pair<Ipv6Address, Ipv6Address>>> seen_;
};

inline DiscoveryResult run_discovery(const std::vector<Prefix>& prefixes, const DiscoveryCaps& caps,
                                     Transport& transport, std::uint64_t seed, const DiscoveryOptions& opts = {}) {
  return DiscoveryScanner(prefixes, caps, seed, opts).run(transport);
}

}  // namespace ivantage
