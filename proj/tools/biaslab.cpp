#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "biaslab/pipeline.hpp"

namespace bp = biaslab::pipeline;

namespace {

struct Options {
  std::string config;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::string scheme;
  std::string out;
  std::string defining_sets;
  std::string stop_words;
  bool quiet = false;
};

bp::ExperimentConfig load_config(const Options& opt) {
  auto cfg = bp::ExperimentConfig::load(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.scheme.empty()) cfg.select_schemes(opt.scheme);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (!opt.defining_sets.empty()) cfg.defining_sets = opt.defining_sets;
  if (!opt.stop_words.empty()) cfg.stop_words = opt.stop_words;
  return cfg;
}

std::vector<double> sweep(const bp::ExperimentConfig& cfg, const Options& opt) {
  if (opt.lambda) return {*opt.lambda};
  return cfg.lambdas;
}

void add_common(CLI::App* cmd, Options& opt, bool with_lambda) {
  cmd->add_option("--config", opt.config, "experiment file (.toml or .json)")->required();
  if (with_lambda) cmd->add_option("--lambda", opt.lambda, "single regularizer weight instead of the sweep");
  cmd->add_option("--seed", opt.seed, "global seed");
  cmd->add_option("--scheme", opt.scheme, "context scheme")
      ->check(CLI::IsMember({"fixed", "exponential", "both"}));
  cmd->add_option("--out", opt.out, "output directory");
  cmd->add_option("--defining-sets", opt.defining_sets, "defining-set JSON file");
  cmd->add_option("--stop-words", opt.stop_words, "stop-word list");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gender bias measurement and regularized language modelling"};
  app.require_subcommand(1);
  Options opt;
  app.add_flag("-q,--quiet", opt.quiet, "only report warnings and errors");

  auto* analyze = app.add_subcommand("analyze", "score the training corpus under each context scheme");
  add_common(analyze, opt, false);
  auto* train = app.add_subcommand("train", "train one model per lambda");
  add_common(train, opt, true);
  auto* generate = app.add_subcommand("generate", "sample text from trained models");
  add_common(generate, opt, true);
  auto* evaluate = app.add_subcommand("evaluate", "generate, score and fit every lambda, then report");
  add_common(evaluate, opt, true);
  auto* report = app.add_subcommand("report", "assemble stored evaluations into report.json and report.csv");
  add_common(report, opt, false);

  bp::SyntheticCorpusConfig synth_cfg;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus with planted occupation skew");
  synth->add_option("--out", synth_dir, "directory to write")->required();
  synth->add_option("--tokens", synth_cfg.train_tokens, "training tokens");
  synth->add_option("--heldout-tokens", synth_cfg.heldout_tokens, "validation and test tokens each");
  synth->add_option("--skew", synth_cfg.skew, "probability of an occupation's favoured gender");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(opt.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*synth) {
      bp::write_synthetic_corpus(bp::make_synthetic_corpus(synth_cfg), synth_dir);
      return 0;
    }
    const auto cfg = load_config(opt);
    if (*analyze) {
      bp::cmd_analyze(cfg);
    } else if (*train) {
      for (double lambda : sweep(cfg, opt)) bp::cmd_train(cfg, lambda);
    } else if (*generate) {
      for (double lambda : sweep(cfg, opt)) bp::cmd_generate(cfg, lambda);
    } else if (*evaluate) {
      if (opt.lambda) {
        cfg.validate();
        bp::cmd_evaluate_lambda(cfg, *opt.lambda);
      } else {
        bp::cmd_evaluate(cfg);
      }
    } else if (*report) {
      bp::cmd_report(cfg);
    }
  } catch (const biaslab::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const biaslab::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
