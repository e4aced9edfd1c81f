#include <algorithm>
#include <numeric>

#include "biaslab/corpus.hpp"

namespace biaslab::corpus {

Vocabulary Vocabulary::build(std::span<const std::string> tokens) {
  if (tokens.empty()) throw InputError("cannot build a vocabulary from empty input");

  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& t : tokens) ++freq[t];

  std::vector<std::pair<std::string, std::uint64_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.id_to_token_.reserve(entries.size() + 2);
  v.counts_.reserve(entries.size() + 2);
  for (auto& [tok, n] : entries) {
    v.id_to_token_.push_back(std::move(tok));
    v.counts_.push_back(n);
  }
  for (std::string_view special : {kUnknownToken, kEosToken}) {
    if (!freq.contains(std::string(special))) {
      v.id_to_token_.emplace_back(special);
      v.counts_.push_back(0);
    }
  }
  v.index();
  return v;
}

Vocabulary Vocabulary::from_entries(std::vector<std::string> tokens,
                                    std::vector<std::uint64_t> counts) {
  if (tokens.empty() || tokens.size() != counts.size()) {
    throw InputError("vocabulary entries and counts must be non-empty and of equal length");
  }
  Vocabulary v;
  v.id_to_token_ = std::move(tokens);
  v.counts_ = std::move(counts);
  v.index();
  if (v.token_to_id_.size() != v.id_to_token_.size()) {
    throw InputError("vocabulary entries contain duplicates");
  }
  if (v.unknown_id_ < 0 || v.eos_id_ < 0) {
    throw InputError("vocabulary entries lack <unk> or <eos>");
  }
  return v;
}

void Vocabulary::index() {
  token_to_id_.clear();
  token_to_id_.reserve(id_to_token_.size());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
  auto special = [&](std::string_view s) {
    auto it = token_to_id_.find(std::string(s));
    return it == token_to_id_.end() ? TokenId{-1} : it->second;
  };
  unknown_id_ = special(kUnknownToken);
  eos_id_ = special(kEosToken);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::occurs(std::string_view token) const {
  auto id = find(token);
  return id && count(*id) > 0;
}

TokenId Vocabulary::id_or_unknown(std::string_view token) const {
  auto id = find(token);
  return id ? *id : unknown_id_;
}

TokenStream::TokenStream(std::shared_ptr<const Vocabulary> vocab, std::vector<TokenId> ids,
                         std::string source_name)
    : vocab_(std::move(vocab)), ids_(std::move(ids)), source_name_(std::move(source_name)) {
  if (!vocab_) throw InputError("token stream needs a vocabulary");
  if (ids_.empty()) throw InputError("token stream '" + source_name_ + "' is empty");
  const auto v = static_cast<TokenId>(vocab_->size());
  for (TokenId id : ids_) {
    if (id < 0 || id >= v) {
      throw InputError("token id " + std::to_string(id) + " outside vocabulary");
    }
  }
}

TokenStream TokenStream::encode(std::shared_ptr<const Vocabulary> vocab,
                                std::span<const std::string> tokens, std::string source_name) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab->id_or_unknown(t));
  return TokenStream(std::move(vocab), std::move(ids), std::move(source_name));
}

std::string TokenStream::detokenize() const {
  std::string out;
  bool line_start = true;
  for (TokenId id : ids_) {
    if (id == vocab_->eos_id()) {
      out.push_back('\n');
      line_start = true;
      continue;
    }
    if (!line_start) out.push_back(' ');
    out += vocab_->token(id);
    line_start = false;
  }
  return out;
}

}  // namespace biaslab::corpus
