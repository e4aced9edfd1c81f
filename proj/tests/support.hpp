#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biaslab/biasmeter.hpp"
#include "biaslab/corpus.hpp"
#include "biaslab/rng.hpp"

namespace testsupport {

namespace fs = std::filesystem;
using biaslab::corpus::TokenId;

inline std::shared_ptr<const biaslab::corpus::Vocabulary> vocab_of(const std::vector<std::string>& tokens) {
  return std::make_shared<const biaslab::corpus::Vocabulary>(biaslab::corpus::Vocabulary::build(tokens));
}

inline biaslab::corpus::TokenStream stream_of(const std::vector<std::string>& tokens) {
  return biaslab::corpus::TokenStream::encode(vocab_of(tokens), tokens, "test");
}

inline fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("biaslab_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Word-keyed cooccurrence counts from a quadratic scan over every
// (target position, gendered position) pair.
struct OracleCounts {
  std::map<std::string, double> cwf;
  std::map<std::string, double> cwm;
  double cf = 0.0;
  double cm = 0.0;
  double total_targets = 0.0;
};

inline OracleCounts brute_force_counts(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& male,
                                       const std::set<std::string>& female,
                                       const std::set<std::string>& stops, bool fixed, int k,
                                       double adjacent = 0.05, double decay = 0.95) {
  OracleCounts o;
  auto is_target = [&](const std::string& t) {
    return !male.contains(t) && !female.contains(t) && !stops.contains(t) && t != "<unk>" && t != "<eos>";
  };
  for (const auto& t : tokens) {
    if (male.contains(t)) o.cm += 1;
    if (female.contains(t)) o.cf += 1;
    if (is_target(t)) o.total_targets += 1;
  }
  const long n = static_cast<long>(tokens.size());
  for (long i = 0; i < n; ++i) {
    if (!is_target(tokens[static_cast<std::size_t>(i)])) continue;
    for (long j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& g = tokens[static_cast<std::size_t>(j)];
      const bool m = male.contains(g), f = female.contains(g);
      if (!m && !f) continue;
      const long d = std::labs(i - j);
      double w;
      if (fixed) {
        w = d <= k ? 1.0 : 0.0;
      } else {
        w = adjacent * std::pow(decay, static_cast<double>(d - 1));
        if (w < biaslab::biasmeter::kExponentialCutoff) w = 0.0;
      }
      if (w == 0.0) continue;
      (m ? o.cwm : o.cwf)[tokens[static_cast<std::size_t>(i)]] += w;
    }
  }
  return o;
}

// Random corpus over a small alphabet with a few gendered and stop words.
struct RandomCorpus {
  std::vector<std::string> tokens;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::string> stops;
};

inline RandomCorpus random_corpus(biaslab::Rng& rng, std::size_t max_len = 200, int max_vocab = 20) {
  RandomCorpus rc;
  rc.pairs = {{"he", "she"}, {"man", "woman"}};
  rc.stops = {"the", "of"};
  std::vector<std::string> alphabet{"he", "she", "man", "woman", "the", "of", "<eos>"};
  const int extra = 1 + static_cast<int>(biaslab::uniform01(rng) * (max_vocab - static_cast<int>(alphabet.size())));
  for (int i = 0; i < extra; ++i) alphabet.push_back("w" + std::to_string(i));
  const auto len = 1 + static_cast<std::size_t>(biaslab::uniform01(rng) * static_cast<double>(max_len));
  // Guarantee both genders appear.
  rc.tokens = {"he", "she"};
  while (rc.tokens.size() < std::max<std::size_t>(len, 2)) {
    rc.tokens.push_back(alphabet[static_cast<std::size_t>(biaslab::uniform01(rng) * static_cast<double>(alphabet.size()))]);
  }
  std::shuffle(rc.tokens.begin(), rc.tokens.end(), rng);
  return rc;
}

}  // namespace testsupport
