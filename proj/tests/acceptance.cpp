// Acceptance runner: `acceptance [N ...]` checks the listed criteria (all when
// none are given) and prints one PASS/FAIL line for each.
// Exit status: 0 all passed, 1 a criterion failed, 77 a corpus is missing.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>

#include <Eigen/QR>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "biaslab/genderspace.hpp"
#include "biaslab/langmodel.hpp"
#include "biaslab/pipeline.hpp"
#include "support.hpp"

using namespace biaslab;
namespace fs = std::filesystem;
using biasmeter::ContextScheme;
using Matrix = Eigen::MatrixXd;

namespace {

constexpr int kMissingData = 77;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool missing_data = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path corpora_dir() {
  if (const char* env = std::getenv("BIASLAB_CORPORA")) return env;
  return BIASLAB_DATA_DIR;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / fmt::format("biaslab_acceptance_{}_{}", name, ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

// ---- 1-3: training-corpus summaries --------------------------------------

struct TrainSummary {
  biasmeter::BiasSummary fixed;
  biasmeter::BiasSummary exponential;
};

TrainSummary summarize_corpus(const fs::path& text, corpus::Scheme scheme, const std::string& sets_name,
                              const std::string& stops_name, bool with_exponential) {
  const auto tokens = corpus::read_tokens(text, scheme);
  auto vocab = std::make_shared<const corpus::Vocabulary>(corpus::Vocabulary::build(tokens));
  const auto stream = corpus::TokenStream::encode(vocab, tokens, text.filename().string());
  const fs::path data = BIASLAB_DATA_DIR;
  const auto sets = corpus::DefiningSets::load(data / "defining_sets" / sets_name, *vocab);
  const auto stops = corpus::StopWordList::load(data / "stopwords" / stops_name).without(sets);
  TrainSummary s;
  s.fixed = biasmeter::summarize(biasmeter::bias_scores(
      biasmeter::count_cooccurrences(stream, sets, stops, ContextScheme::fixed(10))));
  if (with_exponential) {
    s.exponential = biasmeter::summarize(biasmeter::bias_scores(
        biasmeter::count_cooccurrences(stream, sets, stops, ContextScheme::exponential())));
  }
  return s;
}

Outcome missing(const fs::path& path) {
  return {false, fmt::format("corpus not found at {} (set BIASLAB_CORPORA)", path.string()), true};
}

Outcome criterion_1() {
  const auto path = corpora_dir() / "ptb" / "ptb.train.txt";
  if (!fs::exists(path)) return missing(path);
  const auto start = Clock::now();
  const auto s = summarize_corpus(path, corpus::Scheme::Ptb, "ptb.json", "ptb.txt", false);
  const double t = seconds_since(start);
  const bool ok = within(s.fixed.mu, 0.83, 0.08) && within(s.fixed.sigma, 1.00, 0.10) && t < 60.0;
  return {ok, fmt::format("PTB fixed mu={:.4f} (0.83+-0.08) sigma={:.4f} (1.00+-0.10) n={} in {:.1f}s",
                          s.fixed.mu, s.fixed.sigma, s.fixed.n, t)};
}

Outcome criterion_2() {
  const auto path = corpora_dir() / "wikitext-2" / "wiki.train.tokens";
  if (!fs::exists(path)) return missing(path);
  const auto start = Clock::now();
  const auto s = summarize_corpus(path, corpus::Scheme::WikiText, "wikitext2.json", "wikitext.txt", false);
  const double t = seconds_since(start);
  const bool ok = within(s.fixed.mu, 0.80, 0.08) && within(s.fixed.sigma, 1.00, 0.10) && t < 180.0;
  return {ok, fmt::format("WikiText-2 fixed mu={:.4f} (0.80+-0.08) sigma={:.4f} (1.00+-0.10) n={} in {:.1f}s",
                          s.fixed.mu, s.fixed.sigma, s.fixed.n, t)};
}

Outcome criterion_3() {
  const auto path = corpora_dir() / "ptb" / "ptb.train.txt";
  if (!fs::exists(path)) return missing(path);
  const auto s = summarize_corpus(path, corpus::Scheme::Ptb, "ptb.json", "ptb.txt", true);
  const bool ok = within(s.exponential.mu, 3.81, 0.4) && within(s.exponential.sigma, 4.65, 0.5);
  return {ok, fmt::format("PTB infinite mu={:.4f} (3.81+-0.4) sigma={:.4f} (4.65+-0.5) n={}", s.exponential.mu,
                          s.exponential.sigma, s.exponential.n)};
}

// ---- 4: counting oracle --------------------------------------------------

Outcome criterion_4() {
  const auto start = Clock::now();
  Rng rng(20240);
  int fixed_bad = 0;
  double worst_exp = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto rc = testsupport::random_corpus(rng);
    const auto stream = testsupport::stream_of(rc.tokens);
    const auto sets = corpus::DefiningSets::filter(rc.pairs, stream.vocab());
    const corpus::StopWordList stops(rc.stops);
    const int k = 1 + static_cast<int>(uniform01(rng) * 12);
    for (bool fixed : {true, false}) {
      const auto scheme = fixed ? ContextScheme::fixed(k) : ContextScheme::exponential();
      const auto table = biasmeter::count_cooccurrences(stream, sets, stops, scheme);
      const auto oracle =
          testsupport::brute_force_counts(rc.tokens, sets.male_set(), sets.female_set(), rc.stops, fixed, k);
      const auto& vocab = stream.vocab();
      for (std::size_t id = 0; id < vocab.size(); ++id) {
        const auto& word = vocab.token(static_cast<corpus::TokenId>(id));
        const double of = oracle.cwf.contains(word) ? oracle.cwf.at(word) : 0.0;
        const double om = oracle.cwm.contains(word) ? oracle.cwm.at(word) : 0.0;
        if (fixed) {
          if (table.cwf[id] != of || table.cwm[id] != om) ++fixed_bad;
        } else {
          for (auto [got, want] : {std::pair{table.cwf[id], of}, std::pair{table.cwm[id], om}}) {
            const double rel = want == 0.0 ? std::abs(got) : std::abs(got - want) / want;
            worst_exp = std::max(worst_exp, rel);
          }
        }
      }
      if (static_cast<double>(table.cf) != oracle.cf || static_cast<double>(table.cm) != oracle.cm) ++fixed_bad;
    }
  }
  const double t = seconds_since(start);
  const bool ok = fixed_bad == 0 && worst_exp <= 1e-9 && t < 30.0;
  return {ok, fmt::format("500 corpora: {} fixed mismatches, worst exponential rel err {:.2e}, {:.1f}s", fixed_bad,
                          worst_exp, t)};
}

// ---- 5: gradients --------------------------------------------------------

Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  }
  return m;
}

Matrix orthonormal(Eigen::Index d, Eigen::Index k, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, k, rng));
  return qr.householderQ() * Matrix::Identity(d, k);
}

double regularizer_gradient_error(Rng& rng) {
  const auto rows = 1 + static_cast<Eigen::Index>(uniform01(rng) * 10);
  const auto d = 2 + static_cast<Eigen::Index>(uniform01(rng) * 10);
  const auto k = 1 + static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(d - 1));
  const double lambda = std::exp(6 * uniform01(rng) - 4);
  Matrix n = gaussian(rows, d, rng);
  genderspace::GenderSubspace s;
  s.basis = orthonormal(d, k, rng);
  s.k = static_cast<int>(k);
  const Matrix g = genderspace::regularizer_gradient(n, s, lambda);
  const double h = 1e-5;
  Matrix fd(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double keep = n(i, j);
      n(i, j) = keep + h;
      const double up = genderspace::regularizer_value(n, s, lambda);
      n(i, j) = keep - h;
      const double down = genderspace::regularizer_value(n, s, lambda);
      n(i, j) = keep;
      fd(i, j) = (up - down) / (2 * h);
    }
  }
  return (g - fd).norm() / std::max(g.norm(), 1e-8);
}

langmodel::Segment random_segment(Eigen::Index len, Eigen::Index batch, Eigen::Index v, Rng& rng) {
  langmodel::Segment s;
  s.length = len;
  s.batch = batch;
  for (Eigen::Index i = 0; i < len * batch; ++i) {
    s.inputs.push_back(static_cast<corpus::TokenId>(uniform01(rng) * static_cast<double>(v)));
    s.targets.push_back(static_cast<corpus::TokenId>(uniform01(rng) * static_cast<double>(v)));
  }
  return s;
}

// Worst per-entry relative error of the full loss gradient of one random tiny model.
double model_gradient_error(Rng& rng, std::uint64_t instance) {
  using namespace langmodel;
  static const auto vocab =
      testsupport::vocab_of({"he", "she", "man", "woman", "a", "b", "a", "b", "<eos>"});
  static const auto sets = corpus::DefiningSets::filter({{"he", "she"}, {"man", "woman"}}, *vocab);
  LMConfig cfg;
  cfg.layers = 1 + static_cast<int>(uniform01(rng) * 3);
  cfg.hidden = 2 + static_cast<int>(uniform01(rng) * 4);
  cfg.embed_dim = 2 + static_cast<int>(uniform01(rng) * 4);
  cfg.tie_weights = uniform01(rng) < 0.5;
  cfg.bptt_len = 1 + static_cast<int>(uniform01(rng) * 4);
  cfg.batch_size = 1 + static_cast<int>(uniform01(rng) * 3);
  cfg.dropout = 0.0;
  cfg.reg.lambda = uniform01(rng);
  cfg.reg.target = static_cast<DebiasTarget>(static_cast<int>(uniform01(rng) * 3));
  auto model = init_model(cfg, vocab, derive_seed(instance, "init"));
  for (auto* m : model.params().tensors()) *m *= 3.0;
  const auto seg = random_segment(cfg.bptt_len, cfg.batch_size, model.vocab_size(), rng);
  HiddenState carried = model.zero_state(cfg.batch_size);
  forward_backward(model, random_segment(2, cfg.batch_size, model.vocab_size(), rng), carried, nullptr);
  const auto frozen = current_subspaces(model, sets, cfg.reg);
  auto total_loss = [&](Parameters* grads) {
    HiddenState s = carried;
    const double ce = forward_backward(model, seg, s, grads);
    return ce + regularizer_term(model, sets, cfg.reg, grads, &frozen).weighted;
  };
  Parameters grads;
  grads.set_zero_like(model.params());
  total_loss(&grads);
  const double h = 1e-5;
  auto params = model.params().tensors();
  const auto gtensors = grads.tensors();
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double keep = p.data()[k];
      p.data()[k] = keep + h;
      const double up = total_loss(nullptr);
      p.data()[k] = keep - h;
      const double down = total_loss(nullptr);
      p.data()[k] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = gtensors[i]->data()[k];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
    }
  }
  return worst;
}

Outcome criterion_5() {
  const auto start = Clock::now();
  Rng rng(5150);
  double reg_worst = 0.0, model_worst = 0.0;
  for (int i = 0; i < 100; ++i) reg_worst = std::max(reg_worst, regularizer_gradient_error(rng));
  for (std::uint64_t i = 0; i < 100; ++i) model_worst = std::max(model_worst, model_gradient_error(rng, i));
  const double t = seconds_since(start);
  const bool ok = reg_worst < 1e-5 && model_worst < 1e-4 && t < 60.0;
  return {ok, fmt::format("regularizer worst rel err {:.2e} (<1e-5), tiny model worst {:.2e} (<1e-4), {:.1f}s",
                          reg_worst, model_worst, t)};
}

// ---- 6: subspace ---------------------------------------------------------

// Matrix with prescribed singular values.
Matrix with_spectrum(const std::vector<double>& sv, Eigen::Index cols, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(sv.size());
  Matrix s = Matrix::Zero(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) s(i, i) = sv[static_cast<std::size_t>(i)];
  return orthonormal(n, n, rng) * s * orthonormal(cols, cols, rng).transpose();
}

Outcome criterion_6() {
  const auto start = Clock::now();
  Rng rng(66);
  double worst_orth = 0.0;
  int bad_k = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(uniform01(rng) * 8);
    const auto d = n + static_cast<Eigen::Index>(uniform01(rng) * 8);
    std::vector<double> sv(static_cast<std::size_t>(n));
    for (auto& v : sv) v = 0.1 + 3.0 * uniform01(rng);
    std::sort(sv.rbegin(), sv.rend());
    const double threshold = 0.1 + 0.8 * uniform01(rng);
    genderspace::DifferenceMatrix diff;
    diff.c = with_spectrum(sv, d, rng);
    const auto space = genderspace::gender_subspace(diff, threshold);
    const Matrix gram = space.basis.transpose() * space.basis;
    worst_orth = std::max(worst_orth, (gram - Matrix::Identity(space.k, space.k)).cwiseAbs().maxCoeff());
    // Expected k straight from the constructed spectrum.
    double total = 0.0, acc = 0.0;
    for (double v : sv) total += v * v;
    int expected = 0;
    while (acc < threshold * total * (1 - 1e-12)) {
      const double v = sv[static_cast<std::size_t>(expected++)];
      acc += v * v;
    }
    if (space.k != expected) ++bad_k;
  }

  double worst_ratio = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> tokens;
    std::vector<std::pair<std::string, std::string>> raw;
    for (int i = 0; i < 5; ++i) {
      raw.emplace_back(fmt::format("m{}", i), fmt::format("f{}", i));
      tokens.push_back(raw.back().first);
      tokens.push_back(raw.back().second);
    }
    for (int i = 0; i < 30; ++i) tokens.push_back(fmt::format("n{}", i));
    auto vocab = testsupport::vocab_of(tokens);
    const auto sets = corpus::DefiningSets::filter(raw, *vocab);
    genderspace::EmbeddingMatrix emb{gaussian(static_cast<Eigen::Index>(vocab->size()), 10, rng),
                                     genderspace::EmbeddingRole::Input};
    const auto space = genderspace::gender_subspace(genderspace::build_difference_matrix(emb, sets));
    const auto out = genderspace::hard_debias(emb, space, sets);
    const auto neutral = genderspace::neutral_rows(*vocab, sets);
    const double lambda = 0.5;
    const double bound = lambda * genderspace::gather_rows(emb.rows, neutral).squaredNorm();
    worst_ratio = std::max(
        worst_ratio, genderspace::regularizer_value(genderspace::gather_rows(out.rows, neutral), space, lambda) / bound);
  }
  const double t = seconds_since(start);
  const bool ok = worst_orth <= 1e-10 && bad_k == 0 && worst_ratio < 1e-10 && t < 10.0;
  return {ok, fmt::format("|B'B-I| {:.2e}, {} wrong k of 200, debiased reg / (lambda |N|^2) {:.2e}, {:.2f}s",
                          worst_orth, bad_k, worst_ratio, t)};
}

// ---- 7: regression -------------------------------------------------------

Outcome criterion_7() {
  Rng rng(77);
  double worst_beta = 0.0, worst_c = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double beta = 4 * uniform01(rng) - 2, c = 2 * uniform01(rng) - 1;
    const auto n = 3 + static_cast<std::size_t>(uniform01(rng) * 50);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 6 * uniform01(rng) - 3;
      y[i] = beta * x[i] + c;
    }
    const auto fit = biasmeter::ordinary_least_squares(x, y);
    worst_beta = std::max(worst_beta, std::abs(fit.slope - beta));
    worst_c = std::max(worst_c, std::abs(fit.intercept - c));
  }

  std::vector<double> x, y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(-1.5 + 0.1 * i);
    y.push_back(0.4 * x.back() + 0.1);
  }
  y[17] += 25.0;
  const auto robust = biasmeter::fit_with_outlier_removal(x, y);
  const bool ok = worst_beta < 1e-9 && worst_c < 1e-9 && robust.n_outliers == 1 && robust.n_used == 29 &&
                  std::abs(robust.beta - 0.4) < 1e-6;
  return {ok, fmt::format("noise-free |dbeta| {:.1e} |dc| {:.1e}; outlier pass removed {} point(s), beta={:.9f}",
                          worst_beta, worst_c, robust.n_outliers, robust.beta)};
}

// ---- 8: lambda sweep on the synthetic corpus -----------------------------

Outcome criterion_8() {
  const auto start = Clock::now();
  const auto dir = scratch("sweep");
  pipeline::SyntheticCorpusConfig sc;
  sc.train_tokens = 50000;
  sc.skew = 0.8;
  pipeline::write_synthetic_corpus(pipeline::make_synthetic_corpus(sc), dir / "corpus");

  const std::vector<double> lambdas{0.0, 0.1, 0.5};
  const int seeds = 3;
  std::vector<double> reg(lambdas.size(), 0.0), mu(lambdas.size(), 0.0), ppl(lambdas.size(), 0.0);
  for (int seed = 1; seed <= seeds; ++seed) {
    pipeline::ExperimentConfig cfg;
    cfg.train_path = dir / "corpus" / "train.txt";
    cfg.valid_path = dir / "corpus" / "valid.txt";
    cfg.test_path = dir / "corpus" / "test.txt";
    cfg.scheme = corpus::Scheme::WikiText;
    cfg.defining_sets = dir / "corpus" / "defining_sets.json";
    cfg.stop_words = dir / "corpus" / "stopwords.txt";
    cfg.use_exponential = false;
    cfg.lambdas = lambdas;
    cfg.model = langmodel::LMConfig::desk_scale();
    cfg.generation.num_seeds = 200;
    cfg.generation.max_len = 500;
    cfg.generation.total_tokens_target = 100000;
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.output_dir = dir / fmt::format("seed{}", seed);
    cfg.validate();
    pipeline::cmd_analyze(cfg);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const auto report = pipeline::cmd_train(cfg, lambdas[i]);
      const auto row = pipeline::cmd_evaluate_lambda(cfg, lambdas[i]);
      const double m = row.schemes.at("fixed").summary.mu;
      std::cout << fmt::format("  seed {} lambda {}: reg {:.4g} mu {:.4f} ppl {:.3f}\n", seed, lambdas[i],
                               report.epochs.back().reg_value, m, row.ppl);
      reg[i] += report.epochs.back().reg_value / seeds;
      mu[i] += m / seeds;
      ppl[i] += row.ppl / seeds;
    }
  }
  fs::remove_all(dir);
  const double t = seconds_since(start);
  const bool a = reg[0] > reg[1] && reg[1] > reg[2];
  const bool b = mu[2] < mu[0];
  const bool c = std::abs(ppl[2] - ppl[0]) <= 0.15 * ppl[0];
  const bool ok = a && b && c && t < 1800.0;
  return {ok, fmt::format("(a) reg {:.4g} > {:.4g} > {:.4g}: {}; (b) mu {:.4f} -> {:.4f}: {}; "
                          "(c) ppl {:.3f} vs {:.3f}: {}; {:.0f}s",
                          reg[0], reg[1], reg[2], a ? "ok" : "no", mu[0], mu[2], b ? "ok" : "no", ppl[0], ppl[2],
                          c ? "ok" : "no", t)};
}

// ---- 9: determinism ------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testsupport::slurp(e.path());
  }
  return files;
}

Outcome criterion_9() {
  const auto dir = scratch("determinism");
  const fs::path fixture = fs::path(BIASLAB_DATA_DIR) / "fixtures" / "tiny" / "experiment.toml";
  std::map<std::string, std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    auto cfg = pipeline::ExperimentConfig::load(fixture);
    cfg.output_dir = dir / fmt::format("run{}", r);
    cfg.validate();
    pipeline::cmd_analyze(cfg);
    for (double lambda : cfg.lambdas) pipeline::cmd_train(cfg, lambda);
    for (double lambda : cfg.lambdas) pipeline::cmd_generate(cfg, lambda);
    pipeline::cmd_evaluate(cfg);
    pipeline::cmd_report(cfg);
    runs[r] = snapshot(cfg.output_dir);
  }
  fs::remove_all(dir);
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : runs[0]) {
    if (!runs[1].contains(name) || runs[1].at(name) != bytes) differing.push_back(name);
  }
  if (runs[1].size() != runs[0].size()) differing.push_back("(file set)");
  std::string detail = fmt::format("{} output files compared across two runs", runs[0].size());
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty() && runs[0].size() > 10, detail};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}};
  std::vector<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.push_back(std::atoi(argv[i]));
  if (chosen.empty()) {
    for (const auto& [id, fn] : criteria) chosen.push_back(id);
  }
  bool any_fail = false, any_missing = false;
  for (int id : chosen) {
    if (!criteria.contains(id)) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = criteria.at(id)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << fmt::format("criterion {}: {}  {}", id, o.pass ? "PASS" : "FAIL", o.detail) << std::endl;
    if (!o.pass) (o.missing_data ? any_missing : any_fail) = true;
  }
  if (any_fail) return 1;
  return any_missing ? kMissingData : 0;
}
