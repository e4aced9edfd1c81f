#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "biaslab/langmodel.hpp"

namespace biaslab::langmodel {

namespace gs = genderspace;

std::vector<gs::EmbeddingRole> debias_roles(DebiasTarget target) {
  switch (target) {
    case DebiasTarget::Input: return {gs::EmbeddingRole::Input};
    case DebiasTarget::Output: return {gs::EmbeddingRole::Output};
    case DebiasTarget::Both: return {gs::EmbeddingRole::Input, gs::EmbeddingRole::Output};
  }
  return {};
}

namespace {

const Matrix& role_matrix(const LanguageModel& model, gs::EmbeddingRole role) {
  return role == gs::EmbeddingRole::Input ? model.input_embedding() : model.output_embedding();
}

Matrix& role_gradient(const LanguageModel& model, Parameters& grads, gs::EmbeddingRole role) {
  if (role == gs::EmbeddingRole::Input || model.config().tie_weights) return grads.embedding;
  return grads.decoder;
}

}  // namespace

std::vector<gs::GenderSubspace> current_subspaces(const LanguageModel& model,
                                                  const corpus::DefiningSets& sets,
                                                  const RegularizerConfig& reg) {
  std::vector<gs::GenderSubspace> out;
  for (auto role : debias_roles(reg.target)) {
    const auto diff = gs::build_difference_matrix(role_matrix(model, role), sets);
    out.push_back(gs::gender_subspace(diff, reg.variance_threshold));
  }
  return out;
}

RegularizerTerm regularizer_term(const LanguageModel& model, const corpus::DefiningSets& sets,
                                 const RegularizerConfig& reg, Parameters* grads,
                                 const std::vector<gs::GenderSubspace>* frozen) {
  const auto roles = debias_roles(reg.target);
  std::vector<gs::GenderSubspace> fresh;
  if (!frozen) fresh = current_subspaces(model, sets, reg);
  const auto& spaces = frozen ? *frozen : fresh;
  const auto neutral = gs::neutral_rows(model.vocab(), sets);

  RegularizerTerm term;
  for (std::size_t r = 0; r < roles.size(); ++r) {
    const Matrix& emb = role_matrix(model, roles[r]);
    const auto& space = spaces[r];
    if (grads) gs::accumulate_regularizer(emb, neutral, space, reg.lambda, role_gradient(model, *grads, roles[r]));
    const double fro = gs::regularizer_value(gs::gather_rows(emb, neutral), space, 1.0);
    term.frobenius += fro;
    term.weighted += reg.lambda * fro;
    if (r == 0) term.k = space.k;
  }
  return term;
}

double perplexity_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.empty()) throw InputError("perplexity needs at least one prediction");
  double sum = 0.0;
  for (double lp : log_probs) sum -= lp;
  return std::exp(sum / static_cast<double>(log_probs.size()));
}

double perplexity(const LanguageModel& model, const corpus::TokenStream& stream) {
  const auto ids = stream.ids();
  if (ids.size() < 2) throw InputError("perplexity needs a stream of at least two tokens");
  HiddenState state = model.zero_state(1);
  std::vector<double> log_probs;
  log_probs.reserve(ids.size() - 1);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    const Matrix probs = model.step_probabilities(ids.subspan(t, 1), state);
    log_probs.push_back(std::log(probs(ids[t + 1], 0)));
  }
  return perplexity_from_log_probs(log_probs);
}

namespace {

bool all_finite(const Parameters& p) {
  for (const Matrix* m : p.tensors()) {
    if (!m->allFinite()) return false;
  }
  return true;
}

double squared_norm(const Parameters& p) {
  double s = 0.0;
  for (const Matrix* m : p.tensors()) s += m->squaredNorm();
  return s;
}

}  // namespace

TrainReport train(LanguageModel& model, const corpus::TokenStream& stream,
                  const corpus::DefiningSets& sets, const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const LMConfig& cfg = model.config();
  cfg.validate();
  if (static_cast<long long>(stream.size()) <= static_cast<long long>(cfg.bptt_len) * cfg.batch_size) {
    throw InputError("training stream must be longer than bptt_len * batch_size tokens");
  }

  const auto batched = BatchedStream::make(stream.ids(), cfg.batch_size);
  const auto& reg = cfg.reg;
  const bool use_reg = !options.disable_regularizer;
  const auto neutral = gs::neutral_rows(model.vocab(), sets);
  const auto roles = debias_roles(reg.target);
  const double divergence_loss =
      cfg.divergence_loss > 0.0 ? cfg.divergence_loss
                                : 100.0 * std::log(static_cast<double>(model.vocab_size()));

  Rng dropout_rng(derive_seed(cfg.seed, "train"));
  Parameters grads;
  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_without_gain = 0;
  double lr = cfg.learning_rate;
  std::vector<gs::GenderSubspace> spaces;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    HiddenState state = model.zero_state(cfg.batch_size);
    double ce_sum = 0.0;
    std::uint64_t epoch_steps = 0;
    if (use_reg && !reg.refresh_every_step) spaces = current_subspaces(model, sets, reg);

    for (Eigen::Index start = 0; start < batched.length - 1; start += cfg.bptt_len) {
      const Segment seg = batched.segment(start, cfg.bptt_len);
      ++report.steps;
      grads.set_zero_like(model.params());

      const double ce = forward_backward(model, seg, state, &grads, cfg.dropout > 0.0 ? &dropout_rng : nullptr);
      double total = ce;
      if (use_reg) {
        if (reg.refresh_every_step) spaces = current_subspaces(model, sets, reg);
        for (std::size_t r = 0; r < roles.size(); ++r) {
          const Matrix& emb = role_matrix(model, roles[r]);
          Matrix& g = role_gradient(model, grads, roles[r]);
          total += gs::accumulate_regularizer(emb, neutral, spaces[r], reg.lambda, g);
        }
      }
      if (!std::isfinite(total) || total > divergence_loss) {
        throw DivergenceError(fmt::format("training diverged at step {} (epoch {}): loss {}",
                                          report.steps, epoch, total),
                              report.steps);
      }

      const double norm = std::sqrt(squared_norm(grads));
      if (!std::isfinite(norm)) {
        throw DivergenceError(fmt::format("non-finite gradient at step {}", report.steps), report.steps);
      }
      const double scale = cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      auto params = model.params().tensors();
      auto gtensors = grads.tensors();
      for (std::size_t i = 0; i < params.size(); ++i) {
        *params[i] -= (lr * scale) * *gtensors[i];
      }
      if (!all_finite(model.params())) {
        throw DivergenceError(fmt::format("non-finite parameters after step {}", report.steps),
                              report.steps);
      }
      ce_sum += ce;
      ++epoch_steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = ce_sum / static_cast<double>(std::max<std::uint64_t>(1, epoch_steps));
    const auto term = regularizer_term(model, sets, reg, nullptr);
    rec.reg_value = term.frobenius;
    rec.learning_rate = lr;
    rec.k = term.k;
    rec.val_ppl = options.validation ? perplexity(model, *options.validation) : std::exp(rec.train_loss);
    report.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (options.validation) {
      if (rec.val_ppl < best_val) {
        best_val = rec.val_ppl;
        epochs_without_gain = 0;
      } else {
        lr /= cfg.lr_anneal;
        if (cfg.early_stopping_patience > 0 && ++epochs_without_gain >= cfg.early_stopping_patience) {
          report.stopped_early = true;
          break;
        }
      }
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace biaslab::langmodel
