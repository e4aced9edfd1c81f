#include <fstream>

#include "biaslab/pipeline.hpp"
#include "biaslab/rng.hpp"

namespace biaslab::pipeline {

namespace {

struct Lexicon {
  std::vector<std::pair<std::string, std::string>> nouns{
      {"man", "woman"},       {"father", "mother"}, {"son", "daughter"}, {"boy", "girl"},
      {"brother", "sister"},  {"king", "queen"},    {"uncle", "aunt"},   {"husband", "wife"}};
  std::pair<std::string, std::string> subject{"he", "she"};
  std::pair<std::string, std::string> possessive{"his", "hers"};
  std::vector<std::string> male_jobs{"engineer", "pilot", "surgeon", "captain",
                                     "banker", "mechanic", "farmer", "lawyer"};
  std::vector<std::string> female_jobs{"nurse", "teacher", "dancer", "secretary",
                                       "librarian", "designer", "baker", "singer"};
  std::vector<std::string> verbs{"met", "saw", "called", "helped", "visited", "thanked", "praised", "hired"};
  std::vector<std::string> places{"city", "house", "river", "market", "garden",
                                  "school", "station", "office", "park", "village"};
  std::vector<std::string> adjectives{"old", "new", "busy", "quiet", "small", "large", "bright", "young"};
  std::vector<std::string> stops{"the", "a", "at", "near", "and", "was", "said", "that", "of", "to"};
};

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(items.size())) % items.size()];
}

class SentenceMaker {
 public:
  SentenceMaker(const Lexicon& lex, double skew, std::uint64_t seed) : lex_(lex), skew_(skew), rng_(seed) {}

  // One sentence without the line break.
  std::vector<std::string> next() {
    const double u = uniform01(rng_);
    if (u < 0.55) return occupation_sentence();
    if (u < 0.8) return gendered_sentence(uniform01(rng_) < 0.5);
    return neutral_sentence();
  }

 private:
  const std::string& gendered(const std::pair<std::string, std::string>& pair, bool female) {
    return female ? pair.second : pair.first;
  }

  std::vector<std::string> occupation_sentence() {
    const bool female_job = uniform01(rng_) < 0.5;
    const auto& job = pick(female_job ? lex_.female_jobs : lex_.male_jobs, rng_);
    const bool female = uniform01(rng_) < skew_ ? female_job : !female_job;
    const auto& noun = gendered(pick(lex_.nouns, rng_), female);
    switch (static_cast<int>(uniform01(rng_) * 3.0)) {
      case 0:
        return {"the", job, "said", "that", gendered(lex_.subject, female), pick(lex_.verbs, rng_),
                "the", pick(lex_.adjectives, rng_), pick(lex_.places, rng_)};
      case 1:
        return {"the", noun, pick(lex_.verbs, rng_), "a", job, "at", "the", pick(lex_.places, rng_)};
      default:
        return {"the", job, "was", gendered(lex_.possessive, female),
                "and", gendered(lex_.subject, female), pick(lex_.verbs, rng_), "the", noun};
    }
  }

  std::vector<std::string> gendered_sentence(bool female) {
    return {gendered(lex_.subject, female), pick(lex_.verbs, rng_), "the",
            gendered(pick(lex_.nouns, rng_), female), "near", "the", pick(lex_.adjectives, rng_),
            pick(lex_.places, rng_)};
  }

  std::vector<std::string> neutral_sentence() {
    return {"the", pick(lex_.adjectives, rng_), pick(lex_.places, rng_), "was", "near",
            "a", pick(lex_.adjectives, rng_), pick(lex_.places, rng_)};
  }

  const Lexicon& lex_;
  double skew_;
  Rng rng_;
};

// Sentences until at least `tokens` tokens, counting one <eos> per line.
std::string make_split(SentenceMaker& maker, std::size_t tokens) {
  std::string out;
  std::size_t count = 0;
  while (count < tokens) {
    const auto sentence = maker.next();
    for (std::size_t i = 0; i < sentence.size(); ++i) {
      if (i) out.push_back(' ');
      out += sentence[i];
    }
    out.push_back('\n');
    count += sentence.size() + 1;
  }
  return out;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config) {
  if (!(config.skew >= 0.0 && config.skew <= 1.0)) {
    throw corpus::ConfigurationError("synthetic skew must lie in [0, 1]");
  }
  if (config.train_tokens == 0 || config.heldout_tokens == 0) {
    throw corpus::ConfigurationError("synthetic corpus sizes must be positive");
  }
  const Lexicon lex;
  SyntheticCorpus out;
  SentenceMaker train(lex, config.skew, derive_seed(config.seed, "synthetic", 0));
  SentenceMaker valid(lex, config.skew, derive_seed(config.seed, "synthetic", 1));
  SentenceMaker test(lex, config.skew, derive_seed(config.seed, "synthetic", 2));
  out.train = make_split(train, config.train_tokens);
  out.valid = make_split(valid, config.heldout_tokens);
  out.test = make_split(test, config.heldout_tokens);
  out.defining_pairs = lex.nouns;
  out.defining_pairs.push_back(lex.subject);
  out.defining_pairs.push_back(lex.possessive);
  out.male_occupations = lex.male_jobs;
  out.female_occupations = lex.female_jobs;
  out.stop_words = lex.stops;
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [&dir](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + (dir / name).string() + "'");
    out << content;
  };
  write("train.txt", corpus.train);
  write("valid.txt", corpus.valid);
  write("test.txt", corpus.test);
  write("defining_sets.json", nlohmann::json(corpus.defining_pairs).dump(1) + "\n");
  std::string stops;
  for (const auto& s : corpus.stop_words) stops += s + "\n";
  write("stopwords.txt", stops);
}

}  // namespace biaslab::pipeline
