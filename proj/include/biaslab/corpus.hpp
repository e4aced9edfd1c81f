#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biaslab/errors.hpp"

namespace biaslab::corpus {

using TokenId = std::int32_t;

inline constexpr std::string_view kUnknownToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

// How raw text is turned into tokens.
//   Ptb          lowercase, whitespace split, <eos> at every line end
//   WikiText     as-is case, whitespace split, <eos> at every line end
//   CnnDailyMail as WikiText; each line is one sentence
//   Raw          whitespace split only, newlines are plain separators
enum class Scheme { Ptb, WikiText, CnnDailyMail, Raw };

Scheme parse_scheme(std::string_view name);
std::string_view scheme_name(Scheme scheme);

class IngestError : public InputError {
 public:
  IngestError(const std::string& what, std::size_t byte_offset)
      : InputError(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Thrown for defining-set and stop-word files that cannot be used.
class ConfigurationError : public InputError {
 public:
  using InputError::InputError;
};

std::vector<std::string> tokenize(std::string_view raw_text, Scheme scheme);
std::vector<std::string> read_tokens(const std::filesystem::path& path, Scheme scheme);
std::string read_text_file(const std::filesystem::path& path);

// Token inventory of a corpus. Ids are assigned by descending frequency with
// a byte-wise lexicographic tie-break; <unk> and <eos> always have ids (they
// are appended with count 0 when the text does not contain them).
class Vocabulary {
 public:
  static Vocabulary build(std::span<const std::string> tokens);
  // Restores a vocabulary from stored (token, count) entries in id order.
  static Vocabulary from_entries(std::vector<std::string> tokens,
                                 std::vector<std::uint64_t> counts);

  std::size_t size() const { return id_to_token_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  // True when the token occurs in the corpus the vocabulary was built from.
  bool occurs(std::string_view token) const;
  TokenId id_or_unknown(std::string_view token) const;

  const std::string& token(TokenId id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  std::uint64_t count(TokenId id) const { return counts_.at(static_cast<std::size_t>(id)); }
  std::uint64_t total_count() const { return total_; }
  std::span<const std::string> tokens() const { return id_to_token_; }
  std::span<const std::uint64_t> counts() const { return counts_; }

  TokenId unknown_id() const { return unknown_id_; }
  TokenId eos_id() const { return eos_id_; }
  bool is_special(TokenId id) const { return id == unknown_id_ || id == eos_id_; }

  bool operator==(const Vocabulary& other) const {
    return id_to_token_ == other.id_to_token_ && counts_ == other.counts_;
  }

 private:
  void index();

  std::vector<std::string> id_to_token_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::uint64_t total_ = 0;
  TokenId unknown_id_ = -1;
  TokenId eos_id_ = -1;
};

inline Vocabulary build_vocab(std::span<const std::string> tokens) {
  return Vocabulary::build(tokens);
}

// Non-empty sequence of ids, each valid in the shared vocabulary.
class TokenStream {
 public:
  TokenStream(std::shared_ptr<const Vocabulary> vocab, std::vector<TokenId> ids,
              std::string source_name);

  // Maps tokens through the vocabulary; unknown tokens become <unk>.
  static TokenStream encode(std::shared_ptr<const Vocabulary> vocab,
                            std::span<const std::string> tokens, std::string source_name);

  const Vocabulary& vocab() const { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocab_ptr() const { return vocab_; }
  std::span<const TokenId> ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  const std::string& source_name() const { return source_name_; }

  // Space-separated tokens; <eos> becomes a line break.
  std::string detokenize() const;

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<TokenId> ids_;
  std::string source_name_;
};

struct GenderPair {
  std::string male;
  std::string female;
  TokenId male_id = -1;
  TokenId female_id = -1;

  bool operator==(const GenderPair&) const = default;
};

// Gender-opposing word pairs whose members both occur in the training corpus.
class DefiningSets {
 public:
  // Drops pairs with a member missing from `vocab` (logged) and duplicate pairs
  // (warned). Throws ConfigurationError when nothing survives or a word is
  // listed on both sides.
  static DefiningSets filter(const std::vector<std::pair<std::string, std::string>>& pairs,
                             const Vocabulary& vocab);
  // JSON array of [male, female] string pairs.
  static DefiningSets load(const std::filesystem::path& path, const Vocabulary& vocab);

  const std::vector<GenderPair>& pairs() const { return pairs_; }
  std::vector<std::pair<std::string, std::string>> word_pairs() const;
  const std::set<std::string>& male_set() const { return male_set_; }
  const std::set<std::string>& female_set() const { return female_set_; }
  bool is_male(TokenId id) const;
  bool is_female(TokenId id) const;
  bool is_gendered(TokenId id) const { return is_male(id) || is_female(id); }
  // Sorted, deduplicated ids of every defining-set word.
  const std::vector<TokenId>& member_ids() const { return member_ids_; }

  bool operator==(const DefiningSets& other) const { return pairs_ == other.pairs_; }

 private:
  std::vector<GenderPair> pairs_;
  std::set<std::string> male_set_;
  std::set<std::string> female_set_;
  std::vector<TokenId> male_ids_;
  std::vector<TokenId> female_ids_;
  std::vector<TokenId> member_ids_;
};

class StopWordList {
 public:
  StopWordList() = default;
  explicit StopWordList(std::set<std::string> tokens) : tokens_(std::move(tokens)) {}
  // One token per line; blank lines and lines starting with '#' are ignored.
  static StopWordList load(const std::filesystem::path& path);

  // Removes gendered words, which are excluded from scoring separately.
  StopWordList without(const DefiningSets& sets) const;

  bool contains(std::string_view token) const { return tokens_.contains(std::string(token)); }
  const std::set<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::set<std::string> tokens_;
};

// Keeps each <eos>-terminated sentence independently with probability
// 1/factor. Throws InputError for factor 0 or an empty outcome.
TokenStream subsample(const TokenStream& stream, std::uint32_t factor, std::uint64_t seed);

}  // namespace biaslab::corpus
