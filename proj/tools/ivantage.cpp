// Command line front end: simulate | discover | isav | reach | rl-classify | report

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ivantage/campaign.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool need_config) {
  auto* opt = sub->add_option("--config", c.config, "campaign configuration (JSON)");
  if (need_config) opt->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed override");
  sub->add_option("--backend", c.backend, "packet backend")->check(CLI::IsMember({"sim", "raw"}));
  sub->add_option("--out", c.out, "output directory override");
}

ivantage::CampaignConfig load(const Common& c) {
  auto cfg = ivantage::load_campaign(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.backend.empty()) cfg.backend = c.backend;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate_params();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICMP rate limiting side channel measurements"};
  app.require_subcommand(1);
  Common common;

  auto* simulate = app.add_subcommand("simulate", "write the demo scenario and its inputs");
  add_common(simulate, common, false);
  auto* discover = app.add_subcommand("discover", "find <target, periphery> data pairs");
  add_common(discover, common, true);
  auto* isav = app.add_subcommand("isav", "infer inbound source address validation per prefix");
  add_common(isav, common, true);
  auto* reach = app.add_subcommand("reach", "infer reachability from targets to remote vantage points");
  add_common(reach, common, true);
  auto* rl = app.add_subcommand("rl-classify", "classify ICMP rate limiting implementations");
  add_common(rl, common, true);
  auto* report = app.add_subcommand("report", "summarize a results directory");
  add_common(report, common, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const std::string dir = common.out.empty() ? "demo" : common.out;
      ivantage::cmd_simulate(dir, common.seed.value_or(1));
    } else if (discover->parsed()) {
      ivantage::cmd_discover(load(common));
    } else if (isav->parsed()) {
      ivantage::cmd_isav(load(common));
    } else if (reach->parsed()) {
      ivantage::cmd_reach(load(common));
    } else if (rl->parsed()) {
      ivantage::cmd_rl_classify(load(common));
    } else if (report->parsed()) {
      std::string dir = common.out;
      if (dir.empty() && !common.config.empty()) dir = ivantage::load_campaign(common.config).out_dir;
      if (dir.empty()) throw ivantage::InputError("report needs --out DIR or --config");
      ivantage::cmd_report(dir);
    }
  } catch (const ivantage::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
