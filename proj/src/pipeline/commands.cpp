#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "biaslab/pipeline.hpp"

namespace biaslab::pipeline {

namespace bm = biasmeter;
namespace lm = langmodel;

namespace {

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<std::string> ids_to_tokens(const corpus::TokenStream& stream) {
  std::vector<std::string> out;
  out.reserve(stream.size());
  for (auto id : stream.ids()) out.push_back(stream.vocab().token(id));
  return out;
}

// Sentence-level subsampling done on raw tokens so the final vocabulary
// counts only what survives.
std::vector<std::string> subsample_tokens(std::vector<std::string> tokens, std::uint32_t factor,
                                          std::uint64_t seed, const std::string& name) {
  if (factor <= 1) return tokens;
  auto vocab = std::make_shared<const corpus::Vocabulary>(corpus::Vocabulary::build(tokens));
  const auto full = corpus::TokenStream::encode(vocab, tokens, name);
  return ids_to_tokens(corpus::subsample(full, factor, seed));
}

std::vector<std::string> read_split(const ExperimentConfig& config, const fs::path& path,
                                    std::uint64_t index) {
  return subsample_tokens(corpus::read_tokens(path, config.scheme), config.subsample_factor,
                          derive_seed(config.seed, "corpus", index), path.filename().string());
}

corpus::StopWordList load_stops(const ExperimentConfig& config, const corpus::DefiningSets& sets) {
  if (config.stop_words.empty()) return {};
  return corpus::StopWordList::load(config.stop_words).without(sets);
}

nlohmann::ordered_json scheme_json(const SchemeResult& r) {
  nlohmann::ordered_json j;
  j["mu"] = r.summary.mu;
  j["sigma"] = r.summary.sigma;
  j["n"] = r.summary.n;
  if (r.fit) {
    j["beta"] = r.fit->beta;
    j["intercept"] = r.fit->intercept;
    j["n_used"] = r.fit->n_used;
    j["n_outliers"] = r.fit->n_outliers;
    j["r_squared"] = r.fit->r_squared;
  }
  return j;
}

SchemeResult scheme_from_json(const nlohmann::json& j) {
  SchemeResult r;
  r.summary.mu = j.at("mu").get<double>();
  r.summary.sigma = j.at("sigma").get<double>();
  r.summary.n = j.at("n").get<std::size_t>();
  if (j.contains("beta")) {
    bm::AmplificationFit fit;
    fit.beta = j.at("beta").get<double>();
    fit.intercept = j.at("intercept").get<double>();
    fit.n_used = j.at("n_used").get<std::size_t>();
    fit.n_outliers = j.at("n_outliers").get<std::size_t>();
    fit.r_squared = j.at("r_squared").get<double>();
    r.fit = fit;
  }
  return r;
}

nlohmann::ordered_json row_json(const LambdaRow& row) {
  nlohmann::ordered_json j;
  j["lambda"] = row.lambda;
  for (const auto& [name, result] : row.schemes) j[name] = scheme_json(result);
  j["ppl"] = row.ppl;
  return j;
}

nlohmann::json parse_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(corpus::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse '" + path.string() + "': " + e.what());
  }
}

}  // namespace

CorpusBundle load_corpora(const ExperimentConfig& config, bool need_heldout) {
  CorpusBundle b;
  const auto train_tokens = read_split(config, config.train_path, 0);
  b.vocab = std::make_shared<const corpus::Vocabulary>(corpus::Vocabulary::build(train_tokens));
  b.train = corpus::TokenStream::encode(b.vocab, train_tokens, config.train_path.filename().string());
  if (need_heldout) {
    if (config.valid_path.empty() || config.test_path.empty()) {
      throw corpus::ConfigurationError("training needs validation and test corpora");
    }
    b.valid = corpus::TokenStream::encode(b.vocab, read_split(config, config.valid_path, 1),
                                          config.valid_path.filename().string());
    b.test = corpus::TokenStream::encode(b.vocab, read_split(config, config.test_path, 2),
                                         config.test_path.filename().string());
  }
  b.sets = corpus::DefiningSets::load(config.defining_sets, *b.vocab);
  b.stops = load_stops(config, *b.sets);
  return b;
}

std::string lambda_tag(double lambda) { return fmt::format("{}", lambda); }

fs::path analyze_csv_path(const ExperimentConfig& config, const bm::ContextScheme& scheme) {
  return config.output_dir / "analyze" / ("train_" + scheme.name() + ".csv");
}

fs::path analyze_json_path(const ExperimentConfig& config, const bm::ContextScheme& scheme) {
  return config.output_dir / "analyze" / ("train_" + scheme.name() + ".json");
}

fs::path checkpoint_path(const ExperimentConfig& config, double lambda) {
  return config.output_dir / "train" /
         fmt::format("model_lambda{}_seed{}.ckpt", lambda_tag(lambda), config.seed);
}

fs::path train_log_path(const ExperimentConfig& config, double lambda) {
  return config.output_dir / "train" /
         fmt::format("train_lambda{}_seed{}.jsonl", lambda_tag(lambda), config.seed);
}

fs::path generated_path(const ExperimentConfig& config, double lambda) {
  return config.output_dir / "generate" /
         fmt::format("generated_lambda{}_seed{}.txt", lambda_tag(lambda), config.seed);
}

fs::path evaluation_path(const ExperimentConfig& config, double lambda) {
  return config.output_dir / "evaluate" /
         fmt::format("eval_lambda{}_seed{}.json", lambda_tag(lambda), config.seed);
}

std::map<std::string, bm::BiasSummary> cmd_analyze(const ExperimentConfig& config) {
  config.validate();
  const auto bundle = load_corpora(config, false);
  std::map<std::string, bm::BiasSummary> out;
  for (const auto& scheme : config.context_schemes()) {
    const auto table = bm::count_cooccurrences(*bundle.train, *bundle.sets, bundle.stops, scheme);
    auto scores = bm::bias_scores(table);
    scores.source = "train";
    const auto summary = bm::summarize(scores);
    fs::create_directories(analyze_csv_path(config, scheme).parent_path());
    bm::write_scores_csv(scores, analyze_csv_path(config, scheme));
    write_file(analyze_json_path(config, scheme), bm::summary_json({scheme.name(), summary, std::nullopt}));
    spdlog::info("{} context: mu={:.4f} sigma={:.4f} n={}", scheme.name(), summary.mu, summary.sigma, summary.n);
    out[scheme.name()] = summary;
  }
  return out;
}

lm::TrainReport cmd_train(const ExperimentConfig& config, double lambda) {
  config.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw corpus::ConfigurationError("lambda must be finite and non-negative");
  }
  const auto bundle = load_corpora(config, true);
  lm::LMConfig mc = config.model;
  mc.reg.lambda = lambda;
  mc.seed = config.seed;
  auto model = lm::init_model(mc, bundle.vocab, derive_seed(config.seed, "init"));

  const auto log_path = train_log_path(config, lambda);
  fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw InputError("cannot write '" + log_path.string() + "'");
  auto write_record = [&log](const nlohmann::ordered_json& j) {
    log << j.dump() << '\n';
    log.flush();
  };

  lm::TrainOptions options;
  options.validation = &*bundle.valid;
  options.on_epoch = [&](const lm::EpochRecord& rec) {
    nlohmann::ordered_json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    j["val_ppl"] = rec.val_ppl;
    j["reg_value"] = rec.reg_value;
    j["k"] = rec.k;
    j["lr"] = rec.learning_rate;
    write_record(j);
    spdlog::info("lambda {} epoch {}: loss {:.4f} val ppl {:.3f} reg {:.5g} k {}", lambda, rec.epoch,
                 rec.train_loss, rec.val_ppl, rec.reg_value, rec.k);
  };

  lm::TrainReport report;
  try {
    report = lm::train(model, *bundle.train, *bundle.sets, options);
  } catch (const lm::DivergenceError& e) {
    write_record({{"event", "diverged"}, {"step", e.step()}, {"message", e.what()}});
    throw;
  }
  report.test_ppl = lm::perplexity(model, *bundle.test);
  write_record({{"event", "final"},
                {"test_ppl", report.test_ppl},
                {"epochs", report.epochs.size()},
                {"steps", report.steps},
                {"stopped_early", report.stopped_early}});
  lm::save_checkpoint(model, checkpoint_path(config, lambda));
  spdlog::info("lambda {}: test ppl {:.3f}, {:.1f}s", lambda, report.test_ppl, report.wall_seconds);
  return report;
}

double read_logged_perplexity(const fs::path& log_path) {
  std::ifstream in(log_path);
  if (!in) throw InputError("missing training log '" + log_path.string() + "'");
  std::string line;
  std::optional<double> ppl;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed training log '" + log_path.string() + "': " + e.what());
    }
    if (j.value("event", "") == "final") ppl = j.at("test_ppl").get<double>();
  }
  if (!ppl) throw InputError("training log '" + log_path.string() + "' has no final record");
  return *ppl;
}

lm::GeneratedText cmd_generate(const ExperimentConfig& config, double lambda) {
  const auto ckpt = checkpoint_path(config, lambda);
  if (!fs::exists(ckpt)) {
    throw InputError("missing checkpoint for lambda " + lambda_tag(lambda) + ": '" + ckpt.string() + "'");
  }
  const auto model = lm::load_checkpoint(ckpt);
  lm::GenerationConfig gen = config.generation;
  gen.seed = config.seed;
  auto text = lm::generate(model, gen);
  write_file(generated_path(config, lambda), text.text(model.vocab()));
  return text;
}

LambdaRow score_generated(const ExperimentConfig& config, double lambda,
                          const corpus::TokenStream& generated, double ppl) {
  const auto sets = corpus::DefiningSets::load(config.defining_sets, generated.vocab());
  const auto stops = load_stops(config, sets);
  LambdaRow row;
  row.lambda = lambda;
  row.ppl = ppl;
  for (const auto& scheme : config.context_schemes()) {
    const auto csv = analyze_csv_path(config, scheme);
    if (!fs::exists(csv)) {
      throw InputError("missing training-corpus scores '" + csv.string() + "'; run analyze first");
    }
    const auto train_scores = bm::read_scores_csv(csv, scheme);
    auto scores = bm::bias_scores(bm::count_cooccurrences(generated, sets, stops, scheme));
    SchemeResult r;
    r.summary = bm::summarize(scores);
    r.fit = bm::fit_amplification(train_scores, scores);
    row.schemes[scheme.name()] = r;
  }
  return row;
}

LambdaRow cmd_evaluate_lambda(const ExperimentConfig& config, double lambda) {
  const auto ckpt = checkpoint_path(config, lambda);
  if (!fs::exists(ckpt)) {
    throw InputError("missing checkpoint for lambda " + lambda_tag(lambda) + ": '" + ckpt.string() + "'");
  }
  const double ppl = read_logged_perplexity(train_log_path(config, lambda));
  const auto model = lm::load_checkpoint(ckpt);
  lm::GenerationConfig gen = config.generation;
  gen.seed = config.seed;
  const auto text = lm::generate(model, gen);
  write_file(generated_path(config, lambda), text.text(model.vocab()));
  const auto row = score_generated(config, lambda, text.stream(model.vocab_ptr()), ppl);
  write_file(evaluation_path(config, lambda), row_json(row).dump(2) + "\n");
  spdlog::info("lambda {}: evaluated {} generated tokens", lambda, text.token_count());
  return row;
}

ExperimentReport cmd_evaluate(const ExperimentConfig& config) {
  config.validate();
  std::vector<std::string> missing;
  for (double lambda : config.lambdas) {
    if (!fs::exists(checkpoint_path(config, lambda))) missing.push_back(lambda_tag(lambda));
  }
  if (!missing.empty()) {
    throw InputError(fmt::format("missing checkpoint for lambda {} under '{}'", fmt::join(missing, ", "),
                                 (config.output_dir / "train").string()));
  }
  for (double lambda : config.lambdas) cmd_evaluate_lambda(config, lambda);
  return cmd_report(config);
}

ExperimentReport cmd_report(const ExperimentConfig& config) {
  ExperimentReport report;
  for (const auto& scheme : config.context_schemes()) {
    const auto path = analyze_json_path(config, scheme);
    if (!fs::exists(path)) throw InputError("missing analysis '" + path.string() + "'; run analyze first");
    report.train[scheme.name()] = scheme_from_json(parse_json_file(path)).summary;
  }
  std::vector<std::string> missing;
  for (double lambda : config.lambdas) {
    const auto path = evaluation_path(config, lambda);
    if (!fs::exists(path)) {
      missing.push_back(lambda_tag(lambda));
      continue;
    }
    const auto j = parse_json_file(path);
    LambdaRow row;
    row.lambda = j.at("lambda").get<double>();
    row.ppl = j.at("ppl").get<double>();
    for (const auto& scheme : config.context_schemes()) {
      if (!j.contains(scheme.name())) {
        throw InputError("evaluation '" + path.string() + "' lacks the " + scheme.name() + " scheme");
      }
      row.schemes[scheme.name()] = scheme_from_json(j.at(scheme.name()));
    }
    report.rows.push_back(row);
  }
  if (!missing.empty()) {
    throw InputError(fmt::format("missing evaluation for lambda {}", fmt::join(missing, ", ")));
  }
  write_file(config.output_dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(config.output_dir / "report.csv", report.to_csv());
  return report;
}

}  // namespace biaslab::pipeline
