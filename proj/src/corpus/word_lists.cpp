#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "biaslab/corpus.hpp"

namespace biaslab::corpus {

DefiningSets DefiningSets::filter(const std::vector<std::pair<std::string, std::string>>& pairs,
                                  const Vocabulary& vocab) {
  DefiningSets out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [male, female] : pairs) {
    if (!seen.insert({male, female}).second) {
      spdlog::warn("duplicate defining pair ({}, {}) ignored", male, female);
      continue;
    }
    if (!vocab.occurs(male) || !vocab.occurs(female)) {
      spdlog::info("defining pair ({}, {}) dropped: not in training vocabulary", male, female);
      continue;
    }
    out.pairs_.push_back({male, female, *vocab.find(male), *vocab.find(female)});
    out.male_set_.insert(male);
    out.female_set_.insert(female);
  }
  if (out.pairs_.empty()) {
    throw ConfigurationError("no defining pair has both words in the training vocabulary");
  }
  for (const auto& w : out.male_set_) {
    if (out.female_set_.contains(w)) {
      throw ConfigurationError("word '" + w + "' appears on both sides of the defining sets");
    }
  }
  for (const auto& p : out.pairs_) {
    out.male_ids_.push_back(p.male_id);
    out.female_ids_.push_back(p.female_id);
  }
  auto sort_unique = [](std::vector<TokenId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  sort_unique(out.male_ids_);
  sort_unique(out.female_ids_);
  out.member_ids_ = out.male_ids_;
  out.member_ids_.insert(out.member_ids_.end(), out.female_ids_.begin(), out.female_ids_.end());
  sort_unique(out.member_ids_);
  return out;
}

DefiningSets DefiningSets::load(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open defining sets '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError("defining sets '" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) {
    throw ConfigurationError("defining sets '" + path.string() + "' must be a JSON array");
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& item : doc) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
      throw ConfigurationError("defining sets '" + path.string() +
                               "': every entry must be a [male, female] string pair");
    }
    pairs.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
  }
  return filter(pairs, vocab);
}

std::vector<std::pair<std::string, std::string>> DefiningSets::word_pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(pairs_.size());
  for (const auto& p : pairs_) out.emplace_back(p.male, p.female);
  return out;
}

bool DefiningSets::is_male(TokenId id) const {
  return std::binary_search(male_ids_.begin(), male_ids_.end(), id);
}

bool DefiningSets::is_female(TokenId id) const {
  return std::binary_search(female_ids_.begin(), female_ids_.end(), id);
}

StopWordList StopWordList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open stop words '" + path.string() + "'");
  std::set<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    tokens.insert(line.substr(b, e - b + 1));
  }
  return StopWordList(std::move(tokens));
}

StopWordList StopWordList::without(const DefiningSets& sets) const {
  std::set<std::string> kept;
  for (const auto& t : tokens_) {
    if (sets.male_set().contains(t) || sets.female_set().contains(t)) {
      spdlog::debug("stop word '{}' is gendered; scored as a gendered word instead", t);
      continue;
    }
    kept.insert(t);
  }
  return StopWordList(std::move(kept));
}

}  // namespace biaslab::corpus
