#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biaslab/biasmeter.hpp"
#include "biaslab/corpus.hpp"
#include "biaslab/langmodel.hpp"

namespace biaslab::pipeline {

namespace fs = std::filesystem;

struct ExperimentConfig {
  fs::path train_path;
  fs::path valid_path;
  fs::path test_path;
  corpus::Scheme scheme = corpus::Scheme::Ptb;
  std::uint32_t subsample_factor = 1;
  fs::path defining_sets;
  fs::path stop_words;

  bool use_fixed = true;
  bool use_exponential = true;
  int window = 10;
  double adjacent_weight = 0.05;
  double decay = 0.95;

  std::vector<double> lambdas{0.0, 0.001, 0.01, 0.1, 0.5, 0.8, 1.0};
  langmodel::LMConfig model = langmodel::LMConfig::desk_scale();
  langmodel::GenerationConfig generation;
  fs::path output_dir = "out";
  std::uint64_t seed = 1;

  // JSON, or TOML when the extension is .toml. Relative paths resolve
  // against the config file's directory.
  static ExperimentConfig load(const fs::path& path);
  static ExperimentConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
  nlohmann::json to_json() const;
  void validate() const;

  // "fixed" then "exponential", whichever are enabled.
  std::vector<biasmeter::ContextScheme> context_schemes() const;
  // Restricts evaluation to "fixed", "exponential" or "both".
  void select_schemes(std::string_view which);
};

// Training/validation/test streams sharing the training vocabulary.
struct CorpusBundle {
  std::shared_ptr<const corpus::Vocabulary> vocab;
  std::optional<corpus::TokenStream> train;
  std::optional<corpus::TokenStream> valid;
  std::optional<corpus::TokenStream> test;
  std::optional<corpus::DefiningSets> sets;
  corpus::StopWordList stops;
};

// `need_heldout` also loads the validation and test splits.
CorpusBundle load_corpora(const ExperimentConfig& config, bool need_heldout);

std::string lambda_tag(double lambda);
fs::path analyze_csv_path(const ExperimentConfig& config, const biasmeter::ContextScheme& scheme);
fs::path analyze_json_path(const ExperimentConfig& config, const biasmeter::ContextScheme& scheme);
fs::path checkpoint_path(const ExperimentConfig& config, double lambda);
fs::path train_log_path(const ExperimentConfig& config, double lambda);
fs::path generated_path(const ExperimentConfig& config, double lambda);
fs::path evaluation_path(const ExperimentConfig& config, double lambda);

struct SchemeResult {
  biasmeter::BiasSummary summary;
  std::optional<biasmeter::AmplificationFit> fit;
};

// One row of the λ table: per-scheme μ, σ, β plus perplexity.
struct LambdaRow {
  double lambda = 0.0;
  std::map<std::string, SchemeResult> schemes;  // keyed "fixed" / "exponential"
  double ppl = 0.0;
};

struct ExperimentReport {
  std::map<std::string, biasmeter::BiasSummary> train;
  std::vector<LambdaRow> rows;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
};

// Writes per-scheme score CSV and summary JSON for the training corpus.
std::map<std::string, biasmeter::BiasSummary> cmd_analyze(const ExperimentConfig& config);

// Trains one model; writes its checkpoint and JSON-lines log (flushed per
// epoch, so a divergent run keeps its partial log).
langmodel::TrainReport cmd_train(const ExperimentConfig& config, double lambda);

// Samples text from a trained checkpoint and writes it.
langmodel::GeneratedText cmd_generate(const ExperimentConfig& config, double lambda);

// Scores a generated stream against the stored training-corpus tables.
LambdaRow score_generated(const ExperimentConfig& config, double lambda,
                          const corpus::TokenStream& generated, double ppl);

// Generates, scores and writes one λ row; needs cmd_analyze and cmd_train outputs.
LambdaRow cmd_evaluate_lambda(const ExperimentConfig& config, double lambda);

// Every λ of the sweep, then the assembled report. Missing checkpoints are
// reported together before any work starts.
ExperimentReport cmd_evaluate(const ExperimentConfig& config);

// Reduces stored per-λ evaluations into report.json and report.csv.
ExperimentReport cmd_report(const ExperimentConfig& config);

// Test perplexity recorded at the end of a training log.
double read_logged_perplexity(const fs::path& log_path);

// Text corpus with planted gender skew: designated occupation words co-occur
// with one gender at the configured ratio.
struct SyntheticCorpusConfig {
  std::size_t train_tokens = 50000;
  std::size_t heldout_tokens = 5000;
  double skew = 0.8;  // probability of the occupation's favoured gender (4:1)
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::string train;
  std::string valid;
  std::string test;
  std::vector<std::pair<std::string, std::string>> defining_pairs;
  std::vector<std::string> male_occupations;
  std::vector<std::string> female_occupations;
  std::vector<std::string> stop_words;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config);

// Writes train/valid/test text, defining sets JSON and stop words to `dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const fs::path& dir);

}  // namespace biaslab::pipeline
