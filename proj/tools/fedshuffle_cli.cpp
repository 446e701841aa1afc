#include <CLI11.hpp>

#include <fedshuffle/harness.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator for federated reshuffling with compressed communication"};
  app.require_subcommand(1);

  fedshuffle::CliOptions opt;
  std::string parse_input;
  std::optional<int> parse_dim;

  const auto add_common = [&](CLI::App* sub, bool outputs) {
    sub->add_option("-c,--config", opt.config_path, "JSON configuration file")->required();
    sub->add_option("--seed", opt.seed, "override the base seed from the run section");
    sub->add_flag("-q,--quiet", opt.quiet, "suppress warnings on stderr");
    if (outputs) {
      sub->add_option("--output-prefix", opt.output_prefix, "override the output file prefix");
      sub->add_option("--threads", opt.threads, "override the worker thread count");
    }
  };

  auto* run = app.add_subcommand("run", "execute one configuration and write its trace");
  add_common(run, true);
  auto* sweep = app.add_subcommand("sweep", "expand list-valued parameters into a run grid");
  add_common(sweep, true);
  auto* theory = app.add_subcommand("theory", "print the analysis report for a configuration");
  add_common(theory, false);
  auto* parse_check = app.add_subcommand("parse-check", "validate a sparse dataset file");
  parse_check->add_option("-i,--input", parse_input, "dataset file to check")->required();
  parse_check->add_option("--dim", parse_dim, "declared feature dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return fedshuffle::command_run(opt, std::cerr);
  if (sweep->parsed()) return fedshuffle::command_sweep(opt, std::cerr);
  if (theory->parsed()) return fedshuffle::command_theory(opt, std::cout, std::cerr);
  if (parse_check->parsed())
    return fedshuffle::command_parse_check(parse_input, parse_dim, std::cout, std::cerr);
  return 2;
}
