// One PASS/FAIL line per acceptance criterion. argv[1] is the command line
// tool, used by the determinism check.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ivantage/ivantage.hpp"

using namespace ivantage;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.ok = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(secs < budget_s, "runtime over " + fmt(budget_s, 0) + " s");
  if (!o.ok) ++failures;
  std::cout << (o.ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " (" << fmt(secs, 2) << " s)"
            << o.detail.str() << std::endl;
}

// Tick-by-tick replay of a bucket that gains one token per interval.
std::vector<bool> replay(int capacity, DurationMs interval, const std::vector<Timestamp>& requests) {
  std::vector<bool> out;
  long tokens = capacity;
  Timestamp clock = 0;
  for (Timestamp t : requests) {
    for (; clock < t;) {
      ++clock;
      if (clock % interval == 0 && tokens < capacity) ++tokens;
    }
    out.push_back(tokens > 0);
    if (tokens > 0) --tokens;
  }
  return out;
}

void token_bucket(Outcome& o) {
  std::mt19937_64 rng(1);
  int matched = 0;
  for (int s = 0; s < 1000; ++s) {
    const int cap = std::uniform_int_distribution<int>(1, 20)(rng);
    const DurationMs interval = std::uniform_int_distribution<DurationMs>(10, 500)(rng);
    std::vector<Timestamp> req;
    Timestamp t = 0;
    const int n = std::uniform_int_distribution<int>(1, 400)(rng);
    for (int i = 0; i < n; ++i) {
      t += std::uniform_int_distribution<DurationMs>(0, interval / 4 + 1)(rng);
      req.push_back(t);
    }
    const TokenBucketSpec spec{cap, interval, LimiterScope::Global};
    TokenBucketState st = full_bucket(spec, 0);
    std::vector<bool> got;
    for (Timestamp r : req) {
      auto [ok, next] = bucket_try_consume(st, spec, r);
      got.push_back(ok);
      st = next;
    }
    matched += got == replay(cap, interval, req) ? 1 : 0;
  }
  o.detail << " matched " << matched << "/1000 schedules";
  o.require(matched == 1000, "grant sequences differ");
}

void permutation(Outcome& o) {
  std::mt19937_64 rng(2);
  int exact = 0;
  std::vector<char> seen;
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t n = std::uniform_int_distribution<std::uint64_t>(2, 1'000'000)(rng);
    CyclicPermutation perm(n, rng());
    seen.assign(n + 1, 0);
    std::uint64_t count = 0;
    bool ok = true;
    while (auto v = perm.next()) {
      ++count;
      if (*v < 1 || *v > n || seen[*v]) {
        ok = false;
        break;
      }
      seen[*v] = 1;
    }
    exact += ok && count == n ? 1 : 0;
  }
  o.detail << " " << exact << "/200 exact permutations";
  o.require(exact == 200, "not a permutation");
}

void discovery(Outcome& o) {
  auto cfg = demo::base_config(3);
  auto d = demo::add_discovery_demo(cfg);
  SimTransport t(cfg);
  const DiscoveryCaps caps;
  auto res = run_discovery({d.rich, d.silent}, caps, t, 3);
  const auto pairs = res.pairs();
  o.detail << " rich " << pairs.at(d.rich).size() << " pairs, silent " << pairs.at(d.silent).size() << " pairs after "
           << res.prefixes[1].sent << " probes";
  o.require(pairs.at(d.rich).size() == 50, "rich prefix pair count");
  o.require(pairs.at(d.silent).empty(), "silent prefix pair count");
  o.require(res.prefixes[1].sent == caps.probe_cap, "silent prefix probe cap");
  // while both prefixes are active, consecutive probes alternate
  std::size_t rich_seen = 0;
  bool alternates = true;
  for (std::size_t k = 0; k + 1 < res.schedule.size(); ++k) {
    rich_seen += res.schedule[k] == 0 ? 1 : 0;
    if (rich_seen < res.prefixes[0].sent && res.schedule[k] == res.schedule[k + 1]) alternates = false;
  }
  o.require(alternates, "interleaving");
}

void rl_classes(Outcome& o) {
  auto cfg = demo::base_config(4);
  auto pop = demo::add_rl_population(cfg, {100, 100, 100, 0.0, 0x2500}, 4);
  SimTransport t(cfg);
  auto res = run_rl_classification(pop.targets, {50, 100, 0.6, 3, 1000}, t, 4);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    agree += res[i].cls == oracle_rl_class(cfg, pop.targets[i].origin, pop.targets[i].kind) ? 1 : 0;
  }
  o.detail << " " << agree << "/" << res.size() << " match the oracle";
  o.require(res.size() == 300 && agree == 300, "classification mismatch");
}

struct IsavScore {
  std::map<Prefix, IsavOutcome> verdicts;
  std::size_t agree = 0, uncertain = 0, inverted = 0, total = 0;
};

IsavScore isav_run(double loss, double jitter, double lambda) {
  auto cfg = demo::base_config(5);
  demo::IsavPopulationSpec spec;
  spec.moderate = 200;
  spec.loss = loss;
  spec.jitter = jitter;
  auto pop = demo::add_isav_population(cfg, spec, 5);
  SimTransport t(cfg);
  auto res = run_isav_campaign(pop.pairs, {50, 100, lambda, 10, 1000}, t, cfg.prober.address, 5);
  IsavScore s;
  s.verdicts = outcomes(res);
  for (const auto& [p, v] : s.verdicts) {
    ++s.total;
    const bool deployed = oracle_isav(cfg, p);
    if (v == IsavOutcome::Uncertain) {
      ++s.uncertain;
    } else if ((v == IsavOutcome::Deployed) == deployed) {
      ++s.agree;
    } else {
      ++s.inverted;
    }
  }
  return s;
}

void isav(Outcome& o) {
  const auto clean = isav_run(0.0, 0.0, 0.6);
  o.detail << " zero loss " << clean.agree << "/" << clean.total << " agree, " << clean.uncertain << " uncertain;";
  o.require(clean.total == 200 && clean.agree == 200 && clean.uncertain == 0, "zero-loss agreement");

  const auto lossy = isav_run(0.05, 0.2, 0.6);
  o.detail << " lossy " << lossy.agree << "/" << lossy.total << " agree, " << lossy.uncertain << " uncertain, "
           << lossy.inverted << " inverted;";
  o.require(lossy.agree * 100 >= lossy.total * 95, "lossy agreement below 95%");
  o.require(lossy.uncertain * 100 <= lossy.total * 5, "lossy uncertain above 5%");
  o.require(lossy.inverted == 0, "inverted verdicts");

  const auto lo = isav_run(0.0, 0.0, 0.5);
  const auto hi = isav_run(0.0, 0.0, 0.7);
  const bool stable = lo.verdicts == clean.verdicts && hi.verdicts == clean.verdicts;
  o.detail << " lambda 0.5/0.6/0.7 " << (stable ? "identical" : "differ");
  o.require(stable, "lambda stability");
}

void observability_trend(Outcome& o) {
  const std::vector<double> ratios{0.5, 1.0, 1.5, 2.0, 2.5};
  const std::vector<NoiseSplit> expected{{50, 100}, {75, 75}, {90, 60}, {100, 50}, {107, 43}};
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    o.require(split_for_ratio(150, ratios[i]) == expected[i], "split for ratio " + fmt(ratios[i], 1));
  }
  auto cfg = demo::base_config(6);
  auto pop = demo::add_rl_population(cfg, {200, 0, 0, 0.0, 0x2500}, 6);
  SimTransport t(cfg);
  auto rows = ratio_sweep(pop.targets, 150, ratios, t);
  o.detail << " observability";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    o.detail << " " << fmt(rows[i].mean_observability, 4);
    if (i > 0) o.require(rows[i].mean_observability >= rows[i - 1].mean_observability, "trend decreases");
  }
}

void reach(Outcome& o) {
  {
    auto cfg = demo::base_config(7);
    demo::ReachPopulationSpec spec;
    auto pop = demo::add_reach_population(cfg, spec, 7);
    SimTransport t(cfg);
    ReachOptions opts;
    opts.seed = 7;
    auto c = run_reach_campaign(pop.targets, pop.rvps, {50, 100, 0.7, 6, 1000}, t, geo_estimator(pop.coordinates), opts);
    const auto rep = evaluate(verdicts(c), pop.unconnected, {0.7});
    const auto* r = rep.row(0.7);
    o.detail << " P " << fmt(r->precision, 3) << " R " << fmt(r->recall, 3) << " A " << fmt(r->accuracy, 3);
    o.require(r->precision >= 0.80, "precision");
    o.require(r->recall >= 0.80, "recall");
    o.require(r->accuracy >= 0.90, "accuracy");
    o.detail << "; AUC";
    for (int k = 4; k <= 6; ++k) {
      const double auc = evaluate(verdicts_at_k(c, 0.7, k), pop.unconnected, {0.7}).auc;
      o.detail << " k" << k << "=" << fmt(auc, 3);
      o.require(auc >= 0.90, "AUC at k=" + std::to_string(k));
    }
  }
  {
    auto cfg = demo::base_config(8);
    demo::ReachPopulationSpec spec;
    spec.loss = 0.0;
    spec.jitter = 0.0;
    auto pop = demo::add_reach_population(cfg, spec, 8);
    SimTransport t(cfg);
    auto c = run_reach_campaign(pop.targets, pop.rvps, {50, 100, 0.7, 6, 1000}, t, sim_truth_estimator(cfg), {});
    const auto rep = evaluate(verdicts(c), pop.unconnected, {0.7});
    const auto* r = rep.row(0.7);
    const std::size_t correct = r->tp + r->tn;
    o.detail << "; perfect timing " << correct << "/" << pop.targets.size() << " correct";
    o.require(correct == pop.targets.size(), "perfect-timing variant");
  }
}

void delta_math(Outcome& o) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> rtt(0.0, 500.0);
  std::uniform_real_distribution<double> dist(0.0, 20000.0);
  int bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = rtt(rng), b = rtt(rng), e = rtt(rng), d = dist(rng);
    if (std::abs(delta_t(a, b, e) + delta_t(b, a, e) - e) > 1e-9) ++bad;
    const auto [lo, hi] = rtt_bounds(d, a, b);
    if (!(lo <= hi)) ++bad;
  }
  const double worked = delta_t(20, 50, 40);
  o.detail << " " << bad << " violations in 10000 draws, (20, 50, 40) -> " << fmt(worked, 1) << " ms";
  o.require(bad == 0, "property violations");
  o.require(std::abs(worked - 35.0) < 1e-12, "worked example");
}

int run(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

void determinism(Outcome& o, const std::string& cli) {
  if (cli.empty()) throw InputError("pass the command line tool as the first argument");
  const fs::path root = fs::temp_directory_path() / "ivantage_acceptance";
  fs::remove_all(root);
  std::vector<fs::path> outs;
  for (const char* run_name : {"a", "b"}) {
    const fs::path dir = root / run_name;
    const std::string cfg = (dir / "campaign.json").string();
    o.require(run(cli + " simulate --seed 11 --out " + dir.string()) == 0, "simulate");
    for (const char* cmd : {"discover", "isav", "reach"}) {
      o.require(run(cli + " " + cmd + " --config " + cfg) == 0, cmd);
    }
    outs.push_back(dir / "results");
  }
  std::size_t compared = 0;
  for (const char* f : {"pairs.jsonl", "isav_verdicts.jsonl", "isav_summary.tsv", "isav_as.jsonl", "isav_oracle.tsv",
                        "reach_verdicts.jsonl", "reach_summary.tsv", "reach_eval.tsv", "reach_roc.tsv"}) {
    const auto a = outs[0] / f;
    const auto b = outs[1] / f;
    if (!fs::exists(a) || !fs::exists(b)) {
      o.require(false, std::string("missing ") + f);
      continue;
    }
    o.require(read_file(a.string()) == read_file(b.string()), std::string(f) + " differs");
    ++compared;
  }
  o.detail << " " << compared << " output files compared byte for byte";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  criterion(1, "token bucket matches the replay oracle", 5, token_bucket);
  criterion(2, "cyclic permutation covers 1..n exactly", 30, permutation);
  criterion(3, "discovery stop conditions and interleaving", 10, discovery);
  criterion(4, "rate limiting classification matches the oracle", 60, rl_classes);
  criterion(5, "ISAV verdicts agree with the oracle", 300, isav);
  criterion(6, "observability grows with the noise ratio", 120, observability_trend);
  criterion(7, "reachability evaluation on a lossy replica", 600, reach);
  criterion(8, "delta t and round trip bound properties", 1, delta_math);
  criterion(9, "fixed-seed runs are byte identical", 120, [&](Outcome& o) { determinism(o, cli); });
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
