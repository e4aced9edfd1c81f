#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "biaslab/corpus.hpp"

namespace biaslab::biasmeter {

enum class Gender { Male, Female };

struct FixedContext {
  int radius = 10;  // k tokens on each side
};

// Weight adjacent_weight * decay^(d-1) at token distance d.
struct ExponentialContext {
  double adjacent_weight = 0.05;
  double decay = 0.95;
};

// Contributions below this weight are not counted.
inline constexpr double kExponentialCutoff = 1e-9;

class ContextScheme {
 public:
  static ContextScheme fixed(int radius = 10);
  static ContextScheme exponential(double adjacent_weight = 0.05, double decay = 0.95);

  bool is_fixed() const { return std::holds_alternative<FixedContext>(variant_); }
  const FixedContext& as_fixed() const { return std::get<FixedContext>(variant_); }
  const ExponentialContext& as_exponential() const { return std::get<ExponentialContext>(variant_); }
  // Largest token distance that still contributes.
  int reach() const;
  // Weight of a gendered token at distance d >= 1 (0 beyond reach).
  double weight(int distance) const;
  // "fixed" or "exponential"
  std::string name() const;

 private:
  explicit ContextScheme(std::variant<FixedContext, ExponentialContext> v) : variant_(v) {}
  std::variant<FixedContext, ExponentialContext> variant_;
};

// Gendered co-occurrence counts c(w,g) and the marginals of P(w|g).
// Cells are indexed by vocabulary id.
struct CooccurrenceTable {
  std::shared_ptr<const corpus::Vocabulary> vocab;
  ContextScheme scheme = ContextScheme::fixed();
  std::vector<double> cwf;
  std::vector<double> cwm;
  std::vector<std::uint64_t> target_count;  // occurrences of each candidate word
  std::vector<bool> is_target;
  double sum_cwf = 0.0;
  double sum_cwm = 0.0;
  std::uint64_t cf = 0;
  std::uint64_t cm = 0;
  std::uint64_t total_targets = 0;

  double c(corpus::TokenId w, Gender g) const {
    return g == Gender::Female ? cwf[static_cast<std::size_t>(w)] : cwm[static_cast<std::size_t>(w)];
  }
};

class UndefinedProbability : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

// `threads` > 1 splits the gendered positions into contiguous chunks whose
// partial tables are merged in chunk order.
CooccurrenceTable count_cooccurrences(const corpus::TokenStream& stream,
                                      const corpus::DefiningSets& sets,
                                      const corpus::StopWordList& stops,
                                      const ContextScheme& scheme, unsigned threads = 1);

// (c(w,g) / sum_i c(w_i,g)) / (c(g) / sum_i c(w_i))
double conditional_probability(const CooccurrenceTable& table, corpus::TokenId w, Gender g);

struct ScoredWord {
  double c_wf = 0.0;
  double c_wm = 0.0;
  double score = 0.0;
};

struct BiasScoreTable {
  std::map<std::string, ScoredWord> scores;  // ordered by word for stable output
  std::set<std::string> excluded;
  ContextScheme scheme = ContextScheme::fixed();
  std::string source;
};

// ln(P(w|f) / P(w|m)) for every candidate word seen with both genders.
BiasScoreTable bias_scores(const CooccurrenceTable& table);

struct BiasSummary {
  double mu = 0.0;     // mean |score|
  double sigma = 0.0;  // population standard deviation of signed scores
  std::size_t n = 0;
};

BiasSummary summarize(const BiasScoreTable& scores);

struct AmplificationFit {
  double beta = 0.0;
  double intercept = 0.0;
  std::size_t n_used = 0;
  std::size_t n_outliers = 0;
  double r_squared = 0.0;
};

// Points whose internally studentized residual exceeds this are dropped
// before the single refit.
inline constexpr double kOutlierThreshold = 3.0;

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Ordinary least squares y = slope * x + intercept.
LinearFit ordinary_least_squares(std::span<const double> x, std::span<const double> y);

// One OLS fit, removal of |studentized residual| > 3, one refit.
AmplificationFit fit_with_outlier_removal(std::span<const double> x, std::span<const double> y);

// Regresses generated-text scores on training scores over common words.
AmplificationFit fit_amplification(const BiasScoreTable& train, const BiasScoreTable& generated);

// word,c_wf,c_wm,bias_score
void write_scores_csv(const BiasScoreTable& table, const std::filesystem::path& path);
BiasScoreTable read_scores_csv(const std::filesystem::path& path, const ContextScheme& scheme);

struct SummaryReport {
  std::string scheme;
  BiasSummary summary;
  std::optional<AmplificationFit> fit;
};

std::string summary_json(const SummaryReport& report);

}  // namespace biaslab::biasmeter
