#include <doctest.h>

#include "biaslab/langmodel.hpp"
#include "support.hpp"

using namespace biaslab;
using namespace biaslab::langmodel;
using corpus::DefiningSets;
using corpus::TokenId;

namespace {

struct Tiny {
  std::shared_ptr<const corpus::Vocabulary> vocab;
  DefiningSets sets;
};

// V = 8: six words plus <unk> and <eos>.
Tiny tiny_vocab() {
  auto vocab = testsupport::vocab_of({"he", "she", "man", "woman", "a", "b", "a", "b", "<eos>"});
  return {vocab, DefiningSets::filter({{"he", "she"}, {"man", "woman"}}, *vocab)};
}

LMConfig tiny_config() {
  LMConfig c;
  c.layers = 3;
  c.hidden = 4;
  c.embed_dim = 4;
  c.bptt_len = 3;
  c.batch_size = 2;
  c.dropout = 0.0;
  return c;
}

Segment random_segment(Eigen::Index len, Eigen::Index batch, Eigen::Index v, Rng& rng) {
  Segment s;
  s.length = len;
  s.batch = batch;
  for (Eigen::Index i = 0; i < len * batch; ++i) {
    s.inputs.push_back(static_cast<TokenId>(uniform01(rng) * static_cast<double>(v)));
    s.targets.push_back(static_cast<TokenId>(uniform01(rng) * static_cast<double>(v)));
  }
  return s;
}

// Teacher-forced mean cross-entropy through the inference path.
double reference_cross_entropy(const LanguageModel& model, const Segment& seg, HiddenState state) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < seg.length; ++t) {
    std::vector<TokenId> col(seg.inputs.begin() + t * seg.batch, seg.inputs.begin() + (t + 1) * seg.batch);
    const Matrix p = model.step_probabilities(col, state);
    for (Eigen::Index b = 0; b < seg.batch; ++b) {
      sum -= std::log(p(seg.targets[static_cast<std::size_t>(t * seg.batch + b)], b));
    }
  }
  return sum / static_cast<double>(seg.length * seg.batch);
}

double entropy(const Eigen::Ref<const Vector>& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

}  // namespace

TEST_CASE("config presets and validation") {
  const auto paper = LMConfig::paper_scale();
  CHECK(paper.layers == 3);
  CHECK(paper.hidden == 1150);
  CHECK(paper.embed_dim == 400);
  CHECK(paper.learning_rate == 30.0);
  const auto desk = LMConfig::desk_scale();
  CHECK(desk.layers == 3);
  CHECK(desk.hidden == 64);
  CHECK(desk.embed_dim == 32);

  auto bad = desk;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = desk;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = desk;
  bad.reg.lambda = -0.1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = desk;
  bad.reg.variance_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), InputError);

  nlohmann::json j = desk;
  const auto back = j.get<LMConfig>();
  CHECK(nlohmann::json(back) == j);

  GenerationConfig g;
  g.num_seeds = 0;
  CHECK_THROWS_AS(g.validate(), InputError);
}

TEST_CASE("init shapes, ranges and determinism") {
  std::vector<std::string> words;
  for (int i = 0; i < 98; ++i) words.push_back("w" + std::to_string(i));
  auto vocab = testsupport::vocab_of(words);
  REQUIRE(vocab->size() == 100);
  const auto cfg = LMConfig::desk_scale();
  const auto a = init_model(cfg, vocab, 5);
  const auto b = init_model(cfg, vocab, 5);
  CHECK(a.input_embedding().rows() == 100);
  CHECK(a.input_embedding().cols() == 32);
  CHECK(a.input_embedding().cwiseAbs().maxCoeff() <= 0.1);
  const double bound = 1.0 / std::sqrt(64.0);
  for (const auto& layer : a.params().layers) {
    CHECK(layer.w_input.cwiseAbs().maxCoeff() <= bound);
    CHECK(layer.w_hidden.cwiseAbs().maxCoeff() <= bound);
    CHECK(layer.bias.cwiseAbs().maxCoeff() <= bound);
  }
  const auto ta = a.params().tensors();
  const auto tb = b.params().tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
  const auto c = init_model(cfg, vocab, 6);
  CHECK(c.input_embedding() != a.input_embedding());
}

TEST_CASE("untrained model is close to uniform") {
  std::vector<std::string> words;
  for (int i = 0; i < 98; ++i) words.push_back("w" + std::to_string(i));
  auto vocab = testsupport::vocab_of(words);
  const auto model = init_model(LMConfig::desk_scale(), vocab, 3);
  auto state = model.zero_state(1);
  for (TokenId t : {3, 17, 42, 8, 99}) {
    const Matrix p = model.step_probabilities(std::vector<TokenId>{t}, state);
    CHECK(entropy(p.col(0)) >= 0.95 * std::log(100.0));
  }
}

TEST_CASE("softmax columns sum to one") {
  Rng rng(1);
  auto t = tiny_vocab();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto model = init_model(tiny_config(), t.vocab, seed);
    for (auto* m : model.params().tensors()) *m *= 5.0;
    auto state = model.zero_state(3);
    for (int step = 0; step < 10; ++step) {
      std::vector<TokenId> in;
      for (int b = 0; b < 3; ++b) in.push_back(static_cast<TokenId>(uniform01(rng) * 8));
      const Matrix p = model.step_probabilities(in, state);
      for (Eigen::Index b = 0; b < 3; ++b) CHECK(std::abs(p.col(b).sum() - 1.0) < 1e-6);
      CHECK(p.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("every gradient matches central differences") {
  auto t = tiny_vocab();
  Rng rng(11);
  for (bool tied : {false, true}) {
    auto cfg = tiny_config();
    cfg.tie_weights = tied;
    cfg.reg.lambda = 0.7;
    cfg.reg.target = DebiasTarget::Both;
    auto model = init_model(cfg, t.vocab, tied ? 21 : 20);
    // Larger weights than init so that every path carries signal.
    for (auto* m : model.params().tensors()) *m *= 3.0;
    const auto seg = random_segment(cfg.bptt_len, cfg.batch_size, model.vocab_size(), rng);
    HiddenState carried = model.zero_state(cfg.batch_size);
    forward_backward(model, random_segment(2, cfg.batch_size, model.vocab_size(), rng), carried, nullptr);
    const auto frozen = current_subspaces(model, t.sets, cfg.reg);

    auto total_loss = [&](Parameters* grads) {
      HiddenState s = carried;
      const double ce = forward_backward(model, seg, s, grads);
      return ce + regularizer_term(model, t.sets, cfg.reg, grads, &frozen).weighted;
    };

    Parameters grads;
    grads.set_zero_like(model.params());
    total_loss(&grads);

    const double h = 1e-5;
    auto params = model.params().tensors();
    const auto gtensors = grads.tensors();
    const auto names = model.params().tensor_names();
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix& p = *params[i];
      double worst = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double keep = p.data()[k];
        p.data()[k] = keep + h;
        const double up = total_loss(nullptr);
        p.data()[k] = keep - h;
        const double down = total_loss(nullptr);
        p.data()[k] = keep;
        const double fd = (up - down) / (2 * h);
        const double an = gtensors[i]->data()[k];
        // relative error with a floor for entries whose gradient is ~0
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
      }
      INFO(names[i], tied ? " (tied)" : "");
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("total loss decomposes into cross-entropy and the regularizer") {
  auto t = tiny_vocab();
  Rng rng(12);
  auto cfg = tiny_config();
  cfg.reg.lambda = 0.37;
  const auto model = init_model(cfg, t.vocab, 4);
  const auto seg = random_segment(3, 2, model.vocab_size(), rng);
  HiddenState state = model.zero_state(2);
  const double ce = forward_backward(model, seg, state, nullptr);
  CHECK(std::abs(ce - reference_cross_entropy(model, seg, model.zero_state(2))) < 1e-10);

  const auto term = regularizer_term(model, t.sets, cfg.reg, nullptr);
  const auto space = genderspace::gender_subspace(genderspace::build_difference_matrix(model.input_embedding(), t.sets));
  const auto n = genderspace::gather_rows(model.input_embedding(), genderspace::neutral_rows(*t.vocab, t.sets));
  CHECK(std::abs(term.weighted - genderspace::regularizer_value(n, space, 0.37)) < 1e-10);
  CHECK(std::abs(term.weighted - 0.37 * term.frobenius) < 1e-12);
  CHECK(term.frobenius >= 0.0);
}

TEST_CASE("perplexity of hand-built models") {
  auto t = tiny_vocab();
  auto model = init_model(tiny_config(), t.vocab, 1);
  model.params().decoder.setZero();
  model.params().decoder_bias.setZero();
  const auto stream = corpus::TokenStream::encode(t.vocab, std::vector<std::string>{"a", "b", "he", "she", "a"}, "u");
  CHECK(perplexity(model, stream) == doctest::Approx(8.0).epsilon(1e-12));

  // Fixed next-token distribution a:0.5, b:0.25, he:0.25 regardless of context.
  const auto a = *t.vocab->find("a");
  const auto b = *t.vocab->find("b");
  const auto he = *t.vocab->find("he");
  model.params().decoder_bias.setConstant(-1e3);
  model.params().decoder_bias(a, 0) = std::log(0.5);
  model.params().decoder_bias(b, 0) = std::log(0.25);
  model.params().decoder_bias(he, 0) = std::log(0.25);
  const auto three = corpus::TokenStream::encode(t.vocab, std::vector<std::string>{"she", "a", "b", "he"}, "h");
  const double by_hand = std::exp(-(std::log(0.5) + std::log(0.25) + std::log(0.25)) / 3.0);
  CHECK(perplexity(model, three) == doctest::Approx(by_hand).epsilon(1e-12));
  CHECK(by_hand == doctest::Approx(std::pow(2.0, 5.0 / 3.0)).epsilon(1e-14));

  const std::vector<double> certain{0.0, 0.0, 0.0};
  CHECK(perplexity_from_log_probs(certain) == 1.0);
  CHECK_THROWS_AS(perplexity_from_log_probs(std::vector<double>{}), InputError);
}

TEST_CASE("minimal generation") {
  auto t = tiny_vocab();
  const auto model = init_model(tiny_config(), t.vocab, 1);
  GenerationConfig g;
  g.num_seeds = 1;
  g.max_len = 1;
  const auto out = generate(model, g);
  REQUIRE(out.continuations.size() == 1);
  CHECK(out.continuations[0].size() == 2);
  CHECK(out.stream(t.vocab).size() == 2);
}

TEST_CASE("generation budget and determinism") {
  auto t = tiny_vocab();
  const auto model = init_model(tiny_config(), t.vocab, 1);
  GenerationConfig g;
  g.num_seeds = 70;
  g.max_len = 9;
  g.total_tokens_target = 345;
  const auto a = generate(model, g);
  const auto b = generate(model, g);
  CHECK(a.continuations == b.continuations);
  CHECK(a.token_count() == 345);
  g.seed = 2;
  CHECK(generate(model, g).continuations != a.continuations);

  // Text form round-trips through the reader.
  const auto s1 = a.stream(t.vocab);
  const auto s2 = read_generated(a.text(*t.vocab), t.vocab, "g");
  CHECK(std::equal(s1.ids().begin(), s1.ids().end(), s2.ids().begin(), s2.ids().end()));
}

TEST_CASE("one-hot softmax makes sampling deterministic") {
  auto t = tiny_vocab();
  auto model = init_model(tiny_config(), t.vocab, 1);
  const auto b = *t.vocab->find("b");
  model.params().decoder.setZero();
  model.params().decoder_bias.setConstant(-1e4);
  model.params().decoder_bias(b, 0) = 0.0;
  GenerationConfig g;
  g.num_seeds = 5;
  g.max_len = 20;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    g.seed = seed;
    for (const auto& cont : generate(model, g).continuations) {
      for (std::size_t i = 1; i < cont.size(); ++i) CHECK(cont[i] == b);
    }
  }
}

TEST_CASE("checkpoint round-trip") {
  auto t = tiny_vocab();
  auto cfg = tiny_config();
  cfg.reg.lambda = 0.25;
  cfg.reg.target = DebiasTarget::Output;
  const auto model = init_model(cfg, t.vocab, 9);
  const auto dir = testsupport::temp_dir("ckpt");
  save_checkpoint(model, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(nlohmann::json(back.config()) == nlohmann::json(model.config()));
  CHECK(back.vocab() == model.vocab());
  const auto a = model.params().tensors();
  const auto b = back.params().tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Matrix expected = a[i]->cast<float>().cast<double>();
    CHECK(*b[i] == expected);
  }
  testsupport::write_text(dir / "bad.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), InputError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("batched stream layout") {
  std::vector<TokenId> ids(23);
  for (int i = 0; i < 23; ++i) ids[static_cast<std::size_t>(i)] = i;
  const auto bs = BatchedStream::make(ids, 4);
  CHECK(bs.length == 5);
  const auto seg = bs.segment(0, 3);
  CHECK(seg.length == 3);
  // column b starts at token b * 5
  CHECK(seg.inputs[0 * 4 + 2] == 10);
  CHECK(seg.targets[0 * 4 + 2] == 11);
  CHECK(seg.inputs[2 * 4 + 3] == 17);
  const auto tail = bs.segment(3, 3);
  CHECK(tail.length == 1);
  CHECK(tail.targets[1] == 9);
}
