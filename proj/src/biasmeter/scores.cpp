#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "biaslab/biasmeter.hpp"

namespace biaslab::biasmeter {

BiasScoreTable bias_scores(const CooccurrenceTable& table) {
  if (table.cf == 0 || table.cm == 0) {
    throw MetricError(fmt::format("bias scores need both genders in the corpus (c(f)={}, c(m)={})",
                                  table.cf, table.cm));
  }
  BiasScoreTable out;
  out.scheme = table.scheme;
  const auto& vocab = *table.vocab;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (!table.is_target[id] || table.target_count[id] == 0) continue;
    const auto tid = static_cast<corpus::TokenId>(id);
    const std::string& word = vocab.token(tid);
    if (table.cwf[id] > 0.0 && table.cwm[id] > 0.0) {
      const double pf = conditional_probability(table, tid, Gender::Female);
      const double pm = conditional_probability(table, tid, Gender::Male);
      // difference of logs so that a gender swap negates the score bit-exactly
      out.scores.emplace(word, ScoredWord{table.cwf[id], table.cwm[id], std::log(pf) - std::log(pm)});
    } else {
      out.excluded.insert(word);
    }
  }
  return out;
}

BiasSummary summarize(const BiasScoreTable& scores) {
  if (scores.scores.empty()) throw MetricError("cannot summarize an empty bias score table");
  BiasSummary s;
  s.n = scores.scores.size();
  const double n = static_cast<double>(s.n);
  double abs_sum = 0.0;
  double sum = 0.0;
  for (const auto& [word, entry] : scores.scores) {
    abs_sum += std::abs(entry.score);
    sum += entry.score;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& [word, entry] : scores.scores) ss += (entry.score - mean) * (entry.score - mean);
  s.mu = abs_sum / n;
  s.sigma = std::sqrt(ss / n);
  return s;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back().push_back(c);
    }
  }
  return fields;
}

}  // namespace

void write_scores_csv(const BiasScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << "word,c_wf,c_wm,bias_score\n";
  for (const auto& [word, e] : table.scores) {
    out << fmt::format("{},{},{},{}\n", csv_field(word), e.c_wf, e.c_wm, e.score);
  }
}

BiasScoreTable read_scores_csv(const std::filesystem::path& path, const ContextScheme& scheme) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
                                     std::vector<std::string>{"word", "c_wf", "c_wm", "bias_score"}) {
    throw InputError("'" + path.string() + "' is not a bias score CSV");
  }
  BiasScoreTable table;
  table.scheme = scheme;
  table.source = path.stem().string();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw InputError(fmt::format("{}:{}: expected 4 fields", path.string(), line_no));
    }
    try {
      table.scores.emplace(f[0], ScoredWord{std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw InputError(fmt::format("{}:{}: malformed number", path.string(), line_no));
    }
  }
  return table;
}

std::string summary_json(const SummaryReport& report) {
  nlohmann::ordered_json j;
  j["scheme"] = report.scheme;
  j["mu"] = report.summary.mu;
  j["sigma"] = report.summary.sigma;
  j["n"] = report.summary.n;
  if (report.fit) {
    j["beta"] = report.fit->beta;
    j["intercept"] = report.fit->intercept;
    j["n_outliers"] = report.fit->n_outliers;
  }
  return j.dump(2) + "\n";
}

}  // namespace biaslab::biasmeter
