#include <algorithm>
#include <cmath>

#include "biaslab/langmodel.hpp"

namespace biaslab::langmodel {

namespace {

// Seeds are decoded together in fixed-size column blocks.
constexpr int kGenerationBlock = 64;

corpus::TokenId sample_index(std::span<const double> weights, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    cumulative += weights[i];
    last_positive = i;
    if (u < cumulative) return static_cast<corpus::TokenId>(i);
  }
  return static_cast<corpus::TokenId>(last_positive);
}

}  // namespace

GeneratedText generate(const LanguageModel& model, const GenerationConfig& config) {
  config.validate();
  const auto& vocab = model.vocab();
  std::vector<double> unigram(vocab.counts().begin(), vocab.counts().end());
  const double unigram_total = static_cast<double>(vocab.total_count());
  if (unigram_total <= 0.0) throw InputError("vocabulary has no counts to sample seed words from");

  const std::uint64_t per_seed = 1 + static_cast<std::uint64_t>(config.max_len);
  const auto seeds_needed = static_cast<int>(std::min<std::uint64_t>(
      static_cast<std::uint64_t>(config.num_seeds),
      (config.total_tokens_target + per_seed - 1) / per_seed));

  GeneratedText out;
  out.continuations.resize(static_cast<std::size_t>(seeds_needed));
  for (int block = 0; block < seeds_needed; block += kGenerationBlock) {
    const int width = std::min(kGenerationBlock, seeds_needed - block);
    std::vector<Rng> rngs;
    std::vector<corpus::TokenId> current(static_cast<std::size_t>(width));
    for (int j = 0; j < width; ++j) {
      rngs.emplace_back(derive_seed(config.seed, "generate", static_cast<std::uint64_t>(block + j)));
      current[static_cast<std::size_t>(j)] = sample_index(unigram, unigram_total, rngs.back());
      auto& cont = out.continuations[static_cast<std::size_t>(block + j)];
      cont.reserve(per_seed);
      cont.push_back(current[static_cast<std::size_t>(j)]);
    }
    HiddenState state = model.zero_state(width);
    std::vector<double> column(static_cast<std::size_t>(model.vocab_size()));
    for (int step = 0; step < config.max_len; ++step) {
      Matrix probs = model.step_probabilities(current, state);
      for (int j = 0; j < width; ++j) {
        double total = 0.0;
        for (Eigen::Index v = 0; v < probs.rows(); ++v) {
          double p = probs(v, j);
          if (config.temperature != 1.0) p = std::pow(p, 1.0 / config.temperature);
          column[static_cast<std::size_t>(v)] = p;
          total += p;
        }
        const auto next = sample_index(column, total, rngs[static_cast<std::size_t>(j)]);
        current[static_cast<std::size_t>(j)] = next;
        out.continuations[static_cast<std::size_t>(block + j)].push_back(next);
      }
    }
  }

  std::uint64_t budget = config.total_tokens_target;
  std::size_t kept = 0;
  for (auto& cont : out.continuations) {
    if (budget == 0) break;
    if (cont.size() > budget) cont.resize(static_cast<std::size_t>(budget));
    budget -= cont.size();
    ++kept;
  }
  out.continuations.resize(kept);
  return out;
}

std::size_t GeneratedText::token_count() const {
  std::size_t n = 0;
  for (const auto& c : continuations) n += c.size();
  return n;
}

corpus::TokenStream GeneratedText::stream(std::shared_ptr<const corpus::Vocabulary> vocab) const {
  std::vector<corpus::TokenId> ids;
  ids.reserve(token_count() + continuations.size());
  for (std::size_t i = 0; i < continuations.size(); ++i) {
    if (i > 0) ids.push_back(vocab->eos_id());
    ids.insert(ids.end(), continuations[i].begin(), continuations[i].end());
  }
  return corpus::TokenStream(std::move(vocab), std::move(ids), "generated");
}

std::string GeneratedText::text(const corpus::Vocabulary& vocab) const {
  std::string out;
  for (const auto& cont : continuations) {
    for (std::size_t i = 0; i < cont.size(); ++i) {
      if (i) out.push_back(' ');
      out += vocab.token(cont[i]);
    }
    out.push_back('\n');
  }
  return out;
}

corpus::TokenStream read_generated(std::string_view text, std::shared_ptr<const corpus::Vocabulary> vocab,
                                   std::string source_name) {
  std::vector<corpus::TokenId> ids;
  std::size_t begin = 0;
  bool first = true;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    if (!first) ids.push_back(vocab->eos_id());
    first = false;
    for (const auto& tok : corpus::tokenize(line, corpus::Scheme::Raw)) {
      ids.push_back(vocab->id_or_unknown(tok));
    }
  }
  return corpus::TokenStream(std::move(vocab), std::move(ids), std::move(source_name));
}

}  // namespace biaslab::langmodel
