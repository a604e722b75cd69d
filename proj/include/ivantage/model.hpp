#pragma once

// Core value types shared by the simulator, the transport layer and the
// measurement engines.

#include <arpa/inet.h>

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ivantage {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user input: addresses, files, parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

// Milliseconds since the transport's epoch (simulated or wall clock).
using Timestamp = std::int64_t;
using DurationMs = std::int64_t;

// Opaque correlation token carried in the echo payload and quoted back.
using ProbeId = std::uint64_t;

// ---------------------------------------------------------------------------
// Ipv6Address
// ---------------------------------------------------------------------------

class Ipv6Address {
 public:
  constexpr Ipv6Address() = default;
  constexpr Ipv6Address(std::uint64_t hi, std::uint64_t lo) : hi_(hi), lo_(lo) {}

  static Ipv6Address parse(std::string_view text) {
    std::string buf(text);
    in6_addr raw{};
    if (inet_pton(AF_INET6, buf.c_str(), &raw) != 1) {
      throw InputError("invalid IPv6 address: '" + buf + "'");
    }
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    for (int i = 0; i < 8; ++i) hi = (hi << 8) | raw.s6_addr[i];
    for (int i = 8; i < 16; ++i) lo = (lo << 8) | raw.s6_addr[i];
    return {hi, lo};
  }

  static std::optional<Ipv6Address> try_parse(std::string_view text) {
    try {
      return parse(text);
    } catch (const InputError&) {
      return std::nullopt;
    }
  }

  // RFC 5952 canonical form.
  std::string to_string() const {
    in6_addr raw{};
    for (int i = 0; i < 8; ++i) raw.s6_addr[i] = static_cast<std::uint8_t>(hi_ >> (56 - 8 * i));
    for (int i = 0; i < 8; ++i) raw.s6_addr[8 + i] = static_cast<std::uint8_t>(lo_ >> (56 - 8 * i));
    char out[INET6_ADDRSTRLEN];
    inet_ntop(AF_INET6, &raw, out, sizeof(out));
    return out;
  }

  constexpr std::uint64_t hi() const { return hi_; }
  constexpr std::uint64_t lo() const { return lo_; }

  // Bit 0 is the most significant bit of the address.
  constexpr bool bit(unsigned pos) const {
    return pos < 64 ? ((hi_ >> (63 - pos)) & 1U) != 0 : ((lo_ >> (127 - pos)) & 1U) != 0;
  }

  // Keeps the top `length` bits, zeroes the rest.
  constexpr Ipv6Address masked(unsigned length) const {
    if (length == 0) return {};
    if (length >= 128) return *this;
    if (length <= 64) {
      std::uint64_t mask = length == 64 ? ~0ULL : ~(~0ULL >> length);
      return {hi_ & mask, 0};
    }
    return {hi_, lo_ & ~(~0ULL >> (length - 64))};
  }

  // Bits below the top `length` bits.
  constexpr Ipv6Address host_bits(unsigned length) const {
    Ipv6Address net = masked(length);
    return {hi_ ^ net.hi_, lo_ ^ net.lo_};
  }

  constexpr Ipv6Address operator|(const Ipv6Address& o) const { return {hi_ | o.hi_, lo_ | o.lo_}; }

  constexpr auto operator<=>(const Ipv6Address&) const = default;

 private:
  std::uint64_t hi_ = 0;
  std::uint64_t lo_ = 0;
};

// ---------------------------------------------------------------------------
// Prefix
// ---------------------------------------------------------------------------

class Prefix {
 public:
  constexpr Prefix() = default;

  // Host bits of `base` are cleared.
  Prefix(Ipv6Address base, unsigned length) : base_(base.masked(length)), length_(length) {
    if (length > 128) throw InputError("prefix length out of range: " + std::to_string(length));
  }

  static Prefix parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) {
      return Prefix(Ipv6Address::parse(text), 128);
    }
    std::string len_text(text.substr(slash + 1));
    if (len_text.empty() || len_text.find_first_not_of("0123456789") != std::string::npos ||
        len_text.size() > 3) {
      throw InputError("invalid prefix length in '" + std::string(text) + "'");
    }
    unsigned len = static_cast<unsigned>(std::stoul(len_text));
    if (len > 128) throw InputError("invalid prefix length in '" + std::string(text) + "'");
    return Prefix(Ipv6Address::parse(text.substr(0, slash)), len);
  }

  std::string to_string() const { return base_.to_string() + "/" + std::to_string(length_); }

  constexpr const Ipv6Address& base() const { return base_; }
  constexpr unsigned length() const { return length_; }

  constexpr bool contains(const Ipv6Address& addr) const { return addr.masked(length_) == base_; }

  constexpr auto operator<=>(const Prefix&) const = default;

 private:
  Ipv6Address base_;
  unsigned length_ = 0;
};

inline bool prefix_contains(const Prefix& p, const Ipv6Address& a) { return p.contains(a); }

// ---------------------------------------------------------------------------
// ICMP
// ---------------------------------------------------------------------------

enum class IcmpKind : std::uint8_t { EchoRequest, EchoReply, DestinationUnreachable, TimeExceeded };

constexpr bool is_error_kind(IcmpKind k) {
  return k == IcmpKind::DestinationUnreachable || k == IcmpKind::TimeExceeded;
}

inline std::string_view to_string(IcmpKind k) {
  switch (k) {
    case IcmpKind::EchoRequest: return "echo_request";
    case IcmpKind::EchoReply: return "echo_reply";
    case IcmpKind::DestinationUnreachable: return "destination_unreachable";
    case IcmpKind::TimeExceeded: return "time_exceeded";
  }
  return "unknown";
}

inline IcmpKind parse_icmp_kind(std::string_view text) {
  if (text == "echo_request") return IcmpKind::EchoRequest;
  if (text == "echo_reply") return IcmpKind::EchoReply;
  if (text == "destination_unreachable") return IcmpKind::DestinationUnreachable;
  if (text == "time_exceeded") return IcmpKind::TimeExceeded;
  throw InputError("unknown ICMP kind: '" + std::string(text) + "'");
}

inline constexpr int kDefaultHopLimit = 64;

struct ProbePacket {
  IcmpKind kind = IcmpKind::EchoRequest;
  Ipv6Address src;  // possibly spoofed
  Ipv6Address dst;
  int hop_limit = kDefaultHopLimit;
  ProbeId probe_id = 0;
};

struct IcmpObservation {
  IcmpKind kind = IcmpKind::EchoReply;
  Ipv6Address origin;
  std::optional<Ipv6Address> quoted_dst;  // present for error kinds
  Timestamp received_at = 0;
  ProbeId probe_id = 0;

  bool operator==(const IcmpObservation&) const = default;
};

// How a node limits the rate of one ICMP message kind, as seen from outside.
enum class RateLimitClass : std::uint8_t { Global, Strict, Loose, Unclassified };

inline std::string_view to_string(RateLimitClass c) {
  switch (c) {
    case RateLimitClass::Global: return "global";
    case RateLimitClass::Strict: return "strict";
    case RateLimitClass::Loose: return "loose";
    case RateLimitClass::Unclassified: return "unclassified";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Data pairs and measurement parameters
// ---------------------------------------------------------------------------

// <target, periphery>: echo requests to `target` elicit errors from `periphery`.
struct DataPair {
  Ipv6Address target;
  Ipv6Address periphery;
  IcmpKind error_kind = IcmpKind::DestinationUnreachable;
  Timestamp discovered_at = 0;

  bool operator==(const DataPair&) const = default;
};

struct MeasurementParams {
  int n_probe = 50;
  int m_noise = 100;
  double lambda = 0.6;
  int repeats = 10;
  DurationMs receive_window_ms = 1000;

  void validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0,1)");
    if (n_probe < 1) throw ConfigError("n_probe must be >= 1");
    if (m_noise < 0) throw ConfigError("m_noise must be >= 0");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (receive_window_ms <= 0) throw ConfigError("receive_window_ms must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Spoofed source selection
// ---------------------------------------------------------------------------

struct SpoofSources {
  Ipv6Address local_spoof;   // same /80 as the local vantage point
  Ipv6Address target_spoof;  // same /124 as the remote vantage point
};

namespace detail {

// Replaces the bits below `length` with random bits, never returning `addr`.
template <class Rng>
Ipv6Address random_in_prefix_except(const Ipv6Address& addr, unsigned length, Rng& rng) {
  const Ipv6Address net = addr.masked(length);
  for (;;) {
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    Ipv6Address cand = net | Ipv6Address(hi, lo).host_bits(length);
    if (cand != addr) return cand;
  }
}

}  // namespace detail

template <class Rng>
SpoofSources spoof_sources(const Ipv6Address& local_vp, const Ipv6Address& rvp, Rng& rng) {
  SpoofSources out;
  out.local_spoof = detail::random_in_prefix_except(local_vp, 80, rng);
  out.target_spoof = detail::random_in_prefix_except(rvp, 124, rng);
  return out;
}

inline SpoofSources spoof_sources(const Ipv6Address& local_vp, const Ipv6Address& rvp,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return spoof_sources(local_vp, rvp, rng);
}

}  // namespace ivantage

template <>
struct std::hash<ivantage::Ipv6Address> {
  std::size_t operator()(const ivantage::Ipv6Address& a) const noexcept {
    std::uint64_t h = a.hi() * 0x9E3779B97F4A7C15ULL;
    h ^= a.lo() + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

template <>
struct std::hash<ivantage::Prefix> {
  std::size_t operator()(const ivantage::Prefix& p) const noexcept {
    return std::hash<ivantage::Ipv6Address>{}(p.base()) ^ (static_cast<std::size_t>(p.length()) << 1);
  }
};
