// arcp: command-line driver for data generation, training and the three
// evaluation pipelines.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "arcp/config.hpp"
#include "arcp/errors.hpp"
#include "arcp/format.hpp"
#include "arcp/pipeline.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory (overrides the config)");
}

arcp::RunConfig load(const Common& c) {
  arcp::ConfigMap map;
  if (!c.config.empty()) map = arcp::load_config_map(c.config);
  if (c.seed) map["seed"] = std::to_string(*c.seed);
  if (c.out) map["out"] = *c.out;
  return arcp::build_config(map);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction under adversarial attacks"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "write dataset.csv and split.json");
  auto* trn = app.add_subcommand("train", "train the normal and adversarial models");
  auto* rq1 = app.add_subcommand("rq1", "calibrate and test under each known attack");
  auto* rq2 = app.add_subcommand("rq2", "conservative threshold across all attacks");
  auto* rq3 = app.add_subcommand("rq3", "payoff matrices, equilibrium and strategy evaluation");
  for (auto* s : {gen, trn, rq1, rq2, rq3}) add_common(s, common);

  auto* solve = app.add_subcommand("solve-game", "solve a payoff matrix CSV");
  std::string matrix;
  std::string solve_out = ".";
  solve->add_option("matrix", matrix, "payoff matrix CSV")->required();
  solve->add_option("--out", solve_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigExit;
  }

  try {
    if (solve->parsed()) {
      const auto eq = arcp::cmd_solve_game(matrix, solve_out);
      std::cout << "value " << arcp::format_double(eq.value) << "\n";
      return 0;
    }
    const auto cfg = load(common);
    if (gen->parsed()) arcp::cmd_gen_data(cfg);
    else if (trn->parsed()) arcp::cmd_train(cfg);
    else if (rq1->parsed()) arcp::cmd_rq1(cfg);
    else if (rq2->parsed()) arcp::cmd_rq2(cfg);
    else if (rq3->parsed()) arcp::cmd_rq3(cfg);
  } catch (const arcp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const arcp::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const arcp::DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const arcp::ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
