#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "biaslab/corpus.hpp"
#include "biaslab/genderspace.hpp"
#include "biaslab/rng.hpp"

namespace biaslab::langmodel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class DebiasTarget { Input, Output, Both };

std::string_view target_name(DebiasTarget target);
DebiasTarget parse_target(std::string_view name);

struct RegularizerConfig {
  double lambda = 0.0;
  DebiasTarget target = DebiasTarget::Input;
  double variance_threshold = 0.5;
  // Recompute C and B before every optimizer step; otherwise once per epoch.
  bool refresh_every_step = true;
};

struct LMConfig {
  int layers = 3;
  int hidden = 64;
  int embed_dim = 32;
  bool tie_weights = false;
  double learning_rate = 1.5;
  int batch_size = 10;
  int bptt_len = 20;
  int epochs = 20;
  double dropout = 0.1;  // drop probability on embeddings and on the top LSTM output
  double clip_norm = 0.25;
  double lr_anneal = 4.0;  // divide the step size by this when validation perplexity fails to improve; 1 disables
  int early_stopping_patience = 10;  // epochs without validation gain; 0 disables
  // Total step loss above this aborts training; 0 means 100 * ln(V).
  double divergence_loss = 0.0;
  std::uint64_t seed = 1;
  RegularizerConfig reg;

  // Dimensions of the three-layer AWD-LSTM setup (PTB batch size).
  static LMConfig paper_scale();
  static LMConfig desk_scale();
  void validate() const;
  // Output size of LSTM layer `l`; the top layer matches embed_dim when tied.
  int layer_output(int l) const;
  int layer_input(int l) const;
};

void to_json(nlohmann::json& j, const LMConfig& c);
void from_json(const nlohmann::json& j, LMConfig& c);

// Gate rows are stacked input, forget, cell, output.
struct LstmLayer {
  Matrix w_input;   // 4H x I
  Matrix w_hidden;  // 4H x H
  Matrix bias;      // 4H x 1
};

struct Parameters {
  Matrix embedding;     // V x d
  std::vector<LstmLayer> layers;
  Matrix decoder;       // V x H_top, empty when tied
  Matrix decoder_bias;  // V x 1

  // Every tensor in checkpoint order.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::vector<std::string> tensor_names() const;
  void set_zero_like(const Parameters& other);
};

// Per-layer (h, c), each H x batch.
struct HiddenState {
  std::vector<Matrix> h;
  std::vector<Matrix> c;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::uint64_t step) : NumericalError(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

class LanguageModel {
 public:
  LanguageModel(LMConfig config, std::shared_ptr<const corpus::Vocabulary> vocab);

  const LMConfig& config() const { return config_; }
  LMConfig& mutable_config() { return config_; }
  const corpus::Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const corpus::Vocabulary>& vocab_ptr() const { return vocab_; }
  Eigen::Index vocab_size() const { return static_cast<Eigen::Index>(vocab_->size()); }

  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  const Matrix& input_embedding() const { return params_.embedding; }
  // Alias of the input embedding when weights are tied.
  const Matrix& output_embedding() const {
    return config_.tie_weights ? params_.embedding : params_.decoder;
  }
  Matrix& output_embedding_mut() { return config_.tie_weights ? params_.embedding : params_.decoder; }
  genderspace::EmbeddingMatrix embedding(genderspace::EmbeddingRole role) const;

  HiddenState zero_state(Eigen::Index batch) const;

  // Next-token distributions (V x batch) for one time step; advances `state`.
  Matrix step_probabilities(std::span<const corpus::TokenId> tokens, HiddenState& state) const;

 private:
  LMConfig config_;
  std::shared_ptr<const corpus::Vocabulary> vocab_;
  Parameters params_;
};

// Parameters uniform in +-1/sqrt(hidden), embeddings in +-0.1, decoder bias 0.
LanguageModel init_model(const LMConfig& config, std::shared_ptr<const corpus::Vocabulary> vocab,
                         std::uint64_t seed);

// A (T x batch) window of inputs and next-token targets.
struct Segment {
  Eigen::Index length = 0;
  Eigen::Index batch = 0;
  std::vector<corpus::TokenId> inputs;   // index t * batch + b
  std::vector<corpus::TokenId> targets;  // index t * batch + b
};

// Mean cross-entropy of the segment. With `grads`, also accumulates its
// gradient. `state` carries over and is updated to the segment's end.
// `dropout_rng` enables dropout masks.
double forward_backward(const LanguageModel& model, const Segment& segment, HiddenState& state,
                        Parameters* grads, Rng* dropout_rng = nullptr);

// Column-major batching: column b holds tokens [b*len, (b+1)*len).
struct BatchedStream {
  Eigen::Index columns = 0;
  Eigen::Index length = 0;
  std::vector<corpus::TokenId> data;  // index t * columns + b

  static BatchedStream make(std::span<const corpus::TokenId> ids, Eigen::Index columns);
  Segment segment(Eigen::Index start, Eigen::Index max_len) const;
};

// The embedding matrices a regularizer config acts on.
std::vector<genderspace::EmbeddingRole> debias_roles(DebiasTarget target);

struct RegularizerTerm {
  double weighted = 0.0;    // lambda * ||NB||^2 summed over targets
  double frobenius = 0.0;   // ||NB||^2 summed over targets
  int k = 0;                // subspace size of the first target
};

// Evaluates the regularizer on the current model, recomputing each target's
// subspace unless `frozen` supplies them. Adds the gradient when `grads` is set.
RegularizerTerm regularizer_term(const LanguageModel& model, const corpus::DefiningSets& sets,
                                 const RegularizerConfig& reg, Parameters* grads,
                                 const std::vector<genderspace::GenderSubspace>* frozen = nullptr);

std::vector<genderspace::GenderSubspace> current_subspaces(const LanguageModel& model,
                                                           const corpus::DefiningSets& sets,
                                                           const RegularizerConfig& reg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean cross-entropy per step
  double val_ppl = 0.0;
  double reg_value = 0.0;   // ||NB||_F^2 at epoch end
  double learning_rate = 0.0;  // step size used during the epoch
  int k = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::uint64_t steps = 0;
  double test_ppl = 0.0;
  double wall_seconds = 0.0;
  bool stopped_early = false;
};

struct TrainOptions {
  const corpus::TokenStream* validation = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
  // Skips the regularizer code path entirely (reference for lambda = 0).
  bool disable_regularizer = false;
};

// Truncated-BPTT SGD on cross-entropy plus the bias regularizer.
TrainReport train(LanguageModel& model, const corpus::TokenStream& stream,
                  const corpus::DefiningSets& sets, const TrainOptions& options = {});

// exp(mean negative log-likelihood of tokens 2..n given their prefix).
double perplexity(const LanguageModel& model, const corpus::TokenStream& stream);
double perplexity_from_log_probs(std::span<const double> log_probs);

struct GenerationConfig {
  int num_seeds = 2000;
  int max_len = 500;
  std::uint64_t total_tokens_target = 1000000;
  double temperature = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenerationConfig& c);
void from_json(const nlohmann::json& j, GenerationConfig& c);

// Each continuation: one seed word sampled from the corpus unigram counts,
// then up to max_len sampled tokens. Continuations are joined with <eos>
// boundary markers and truncated at total_tokens_target.
struct GeneratedText {
  std::vector<std::vector<corpus::TokenId>> continuations;

  corpus::TokenStream stream(std::shared_ptr<const corpus::Vocabulary> vocab) const;
  // One continuation per line.
  std::string text(const corpus::Vocabulary& vocab) const;
  std::size_t token_count() const;
};

GeneratedText generate(const LanguageModel& model, const GenerationConfig& config);

// Parses text written by GeneratedText::text back into a stream.
corpus::TokenStream read_generated(std::string_view text, std::shared_ptr<const corpus::Vocabulary> vocab,
                                   std::string source_name);

// Magic, version, JSON block (config, vocabulary, tensor table), then every
// tensor row-major as little-endian float32.
void save_checkpoint(const LanguageModel& model, const std::filesystem::path& path);
LanguageModel load_checkpoint(const std::filesystem::path& path);

}  // namespace biaslab::langmodel
