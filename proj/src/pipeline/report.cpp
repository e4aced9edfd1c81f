#include <fmt/format.h>

#include "biaslab/pipeline.hpp"

namespace biaslab::pipeline {

namespace {

// Report columns follow the table layout: fixed context, then infinite context.
constexpr std::pair<const char*, const char*> kReportSchemes[] = {{"fixed", "fixed"},
                                                                   {"exponential", "infinite"}};

std::string number(double x) { return fmt::format("{}", x); }

}  // namespace

nlohmann::ordered_json ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json train_row = nlohmann::ordered_json::object();
  for (const auto& [scheme, column] : kReportSchemes) {
    const auto it = train.find(scheme);
    if (it == train.end()) continue;
    train_row[column] = {{"mu", it->second.mu}, {"sigma", it->second.sigma}, {"n", it->second.n}};
  }
  j["train"] = train_row;
  auto rows_json = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["lambda"] = row.lambda;
    for (const auto& [scheme, column] : kReportSchemes) {
      const auto it = row.schemes.find(scheme);
      if (it == row.schemes.end()) continue;
      const auto& s = it->second;
      nlohmann::ordered_json cell;
      cell["mu"] = s.summary.mu;
      cell["sigma"] = s.summary.sigma;
      cell["beta"] = s.fit ? nlohmann::ordered_json(s.fit->beta) : nlohmann::ordered_json(nullptr);
      cell["n"] = s.summary.n;
      if (s.fit) {
        cell["intercept"] = s.fit->intercept;
        cell["n_outliers"] = s.fit->n_outliers;
      }
      r[column] = cell;
    }
    r["ppl"] = row.ppl;
    rows_json.push_back(r);
  }
  j["rows"] = rows_json;
  return j;
}

std::string ExperimentReport::to_csv() const {
  std::string out = "lambda,fixed_mu,fixed_sigma,fixed_beta,infinite_mu,infinite_sigma,infinite_beta,ppl\n";
  out += "train";
  for (const auto& [scheme, column] : kReportSchemes) {
    const auto it = train.find(scheme);
    if (it == train.end()) {
      out += ",,,";
    } else {
      out += "," + number(it->second.mu) + "," + number(it->second.sigma) + ",";
    }
  }
  out += ",\n";
  for (const auto& row : rows) {
    out += number(row.lambda);
    for (const auto& [scheme, column] : kReportSchemes) {
      const auto it = row.schemes.find(scheme);
      if (it == row.schemes.end()) {
        out += ",,,";
        continue;
      }
      const auto& s = it->second;
      out += "," + number(s.summary.mu) + "," + number(s.summary.sigma) + "," +
             (s.fit ? number(s.fit->beta) : std::string());
    }
    out += "," + number(row.ppl) + "\n";
  }
  return out;
}

}  // namespace biaslab::pipeline
