#include <fmt/format.h>

#include "biaslab/langmodel.hpp"

namespace biaslab::langmodel {

std::string_view target_name(DebiasTarget target) {
  switch (target) {
    case DebiasTarget::Input: return "input";
    case DebiasTarget::Output: return "output";
    case DebiasTarget::Both: return "both";
  }
  return "input";
}

DebiasTarget parse_target(std::string_view name) {
  if (name == "input") return DebiasTarget::Input;
  if (name == "output") return DebiasTarget::Output;
  if (name == "both") return DebiasTarget::Both;
  throw InputError("unknown debias target '" + std::string(name) + "'");
}

LMConfig LMConfig::paper_scale() {
  LMConfig c;
  c.layers = 3;
  c.hidden = 1150;
  c.embed_dim = 400;
  c.learning_rate = 30.0;
  c.batch_size = 40;
  c.bptt_len = 70;
  c.epochs = 750;
  c.dropout = 0.4;
  return c;
}

LMConfig LMConfig::desk_scale() {
  LMConfig c;
  c.layers = 3;
  c.hidden = 64;
  c.embed_dim = 32;
  return c;
}

void LMConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InputError(std::string("invalid model config: ") + what);
  };
  require(layers >= 1, "layers must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(bptt_len >= 1, "bptt_len must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(clip_norm >= 0.0, "clip_norm must be non-negative");
  require(lr_anneal >= 1.0, "lr_anneal must be >= 1");
  require(early_stopping_patience >= 0, "early_stopping_patience must be >= 0");
  require(reg.lambda >= 0.0, "lambda must be non-negative");
  require(reg.variance_threshold > 0.0 && reg.variance_threshold <= 1.0,
          "variance_threshold must lie in (0, 1]");
}

int LMConfig::layer_output(int l) const {
  return l == layers - 1 && tie_weights ? embed_dim : hidden;
}

int LMConfig::layer_input(int l) const { return l == 0 ? embed_dim : layer_output(l - 1); }

void to_json(nlohmann::json& j, const LMConfig& c) {
  j = nlohmann::json{{"layers", c.layers},
                     {"hidden", c.hidden},
                     {"embed_dim", c.embed_dim},
                     {"tie_weights", c.tie_weights},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"bptt_len", c.bptt_len},
                     {"epochs", c.epochs},
                     {"dropout", c.dropout},
                     {"clip_norm", c.clip_norm},
                     {"lr_anneal", c.lr_anneal},
                     {"early_stopping_patience", c.early_stopping_patience},
                     {"divergence_loss", c.divergence_loss},
                     {"seed", c.seed},
                     {"reg",
                      {{"lambda", c.reg.lambda},
                       {"target", target_name(c.reg.target)},
                       {"variance_threshold", c.reg.variance_threshold},
                       {"refresh_every_step", c.reg.refresh_every_step}}}};
}

void from_json(const nlohmann::json& j, LMConfig& c) {
  LMConfig d;
  c.layers = j.value("layers", d.layers);
  c.hidden = j.value("hidden", d.hidden);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.tie_weights = j.value("tie_weights", d.tie_weights);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.bptt_len = j.value("bptt_len", d.bptt_len);
  c.epochs = j.value("epochs", d.epochs);
  c.dropout = j.value("dropout", d.dropout);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.lr_anneal = j.value("lr_anneal", d.lr_anneal);
  c.early_stopping_patience = j.value("early_stopping_patience", d.early_stopping_patience);
  c.divergence_loss = j.value("divergence_loss", d.divergence_loss);
  c.seed = j.value("seed", d.seed);
  c.reg = d.reg;
  if (j.contains("reg")) {
    const auto& r = j.at("reg");
    c.reg.lambda = r.value("lambda", d.reg.lambda);
    c.reg.target = parse_target(r.value("target", std::string(target_name(d.reg.target))));
    c.reg.variance_threshold = r.value("variance_threshold", d.reg.variance_threshold);
    c.reg.refresh_every_step = r.value("refresh_every_step", d.reg.refresh_every_step);
  }
}

void GenerationConfig::validate() const {
  if (num_seeds < 1 || max_len < 1 || total_tokens_target < 1) {
    throw InputError("generation counts must be >= 1");
  }
  if (!(temperature > 0.0)) throw InputError("generation temperature must be positive");
}

void to_json(nlohmann::json& j, const GenerationConfig& c) {
  j = nlohmann::json{{"num_seeds", c.num_seeds},
                     {"max_len", c.max_len},
                     {"total_tokens_target", c.total_tokens_target},
                     {"temperature", c.temperature},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GenerationConfig& c) {
  GenerationConfig d;
  c.num_seeds = j.value("num_seeds", d.num_seeds);
  c.max_len = j.value("max_len", d.max_len);
  c.total_tokens_target = j.value("total_tokens_target", d.total_tokens_target);
  c.temperature = j.value("temperature", d.temperature);
  c.seed = j.value("seed", d.seed);
}

}  // namespace biaslab::langmodel
