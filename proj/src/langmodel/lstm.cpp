#include <cmath>

#include <fmt/format.h>

#include "biaslab/langmodel.hpp"

namespace biaslab::langmodel {

namespace {

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = uniform01(rng) >= p ? keep_scale : 0.0;
  }
  return mask;
}

struct LayerCache {
  Matrix input;  // I x TB
  Matrix gates;  // 4H x TB, activated (i, f, g, o)
  Matrix c;      // H x TB
  Matrix h;      // H x TB
  Matrix h0;
  Matrix c0;
};

}  // namespace

std::vector<Matrix*> Parameters::tensors() {
  std::vector<Matrix*> out{&embedding};
  for (auto& l : layers) {
    out.push_back(&l.w_input);
    out.push_back(&l.w_hidden);
    out.push_back(&l.bias);
  }
  if (decoder.size() > 0) out.push_back(&decoder);
  out.push_back(&decoder_bias);
  return out;
}

std::vector<const Matrix*> Parameters::tensors() const {
  auto mut = const_cast<Parameters*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Parameters::tensor_names() const {
  std::vector<std::string> out{"embedding"};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.push_back(fmt::format("lstm.{}.w_input", l));
    out.push_back(fmt::format("lstm.{}.w_hidden", l));
    out.push_back(fmt::format("lstm.{}.bias", l));
  }
  if (decoder.size() > 0) out.emplace_back("decoder");
  out.emplace_back("decoder_bias");
  return out;
}

void Parameters::set_zero_like(const Parameters& other) {
  embedding = Matrix::Zero(other.embedding.rows(), other.embedding.cols());
  layers.resize(other.layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& o = other.layers[l];
    layers[l].w_input = Matrix::Zero(o.w_input.rows(), o.w_input.cols());
    layers[l].w_hidden = Matrix::Zero(o.w_hidden.rows(), o.w_hidden.cols());
    layers[l].bias = Matrix::Zero(o.bias.rows(), o.bias.cols());
  }
  decoder = Matrix::Zero(other.decoder.rows(), other.decoder.cols());
  decoder_bias = Matrix::Zero(other.decoder_bias.rows(), other.decoder_bias.cols());
}

LanguageModel::LanguageModel(LMConfig config, std::shared_ptr<const corpus::Vocabulary> vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  if (!vocab_ || vocab_->size() == 0) throw InputError("language model needs a non-empty vocabulary");
  const Eigen::Index v = vocab_size();
  params_.embedding = Matrix::Zero(v, config_.embed_dim);
  for (int l = 0; l < config_.layers; ++l) {
    const int h = config_.layer_output(l);
    const int in = config_.layer_input(l);
    params_.layers.push_back({Matrix::Zero(4 * h, in), Matrix::Zero(4 * h, h), Matrix::Zero(4 * h, 1)});
  }
  if (!config_.tie_weights) params_.decoder = Matrix::Zero(v, config_.layer_output(config_.layers - 1));
  params_.decoder_bias = Matrix::Zero(v, 1);
}

genderspace::EmbeddingMatrix LanguageModel::embedding(genderspace::EmbeddingRole role) const {
  return {role == genderspace::EmbeddingRole::Input ? input_embedding() : output_embedding(), role};
}

HiddenState LanguageModel::zero_state(Eigen::Index batch) const {
  HiddenState s;
  for (int l = 0; l < config_.layers; ++l) {
    s.h.push_back(Matrix::Zero(config_.layer_output(l), batch));
    s.c.push_back(Matrix::Zero(config_.layer_output(l), batch));
  }
  return s;
}

LanguageModel init_model(const LMConfig& config, std::shared_ptr<const corpus::Vocabulary> vocab,
                         std::uint64_t seed) {
  LanguageModel model(config, std::move(vocab));
  Rng rng(seed);
  auto fill = [&rng](Matrix& m, double range) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = (2.0 * uniform01(rng) - 1.0) * range;
    }
  };
  auto& p = model.params();
  fill(p.embedding, 0.1);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const double range = 1.0 / std::sqrt(static_cast<double>(config.layer_output(static_cast<int>(l))));
    fill(p.layers[l].w_input, range);
    fill(p.layers[l].w_hidden, range);
    fill(p.layers[l].bias, range);
  }
  if (p.decoder.size() > 0) fill(p.decoder, 0.1);
  p.decoder_bias.setZero();
  return model;
}

Matrix LanguageModel::step_probabilities(std::span<const corpus::TokenId> tokens,
                                         HiddenState& state) const {
  const auto b = static_cast<Eigen::Index>(tokens.size());
  Matrix x(config_.embed_dim, b);
  for (Eigen::Index j = 0; j < b; ++j) x.col(j) = params_.embedding.row(tokens[static_cast<std::size_t>(j)]).transpose();
  for (int l = 0; l < config_.layers; ++l) {
    const auto& layer = params_.layers[static_cast<std::size_t>(l)];
    const Eigen::Index h = config_.layer_output(l);
    Matrix z = layer.w_input * x + layer.w_hidden * state.h[static_cast<std::size_t>(l)];
    z.colwise() += layer.bias.col(0);
    const Matrix i = sigmoid(z.topRows(h));
    const Matrix f = sigmoid(z.middleRows(h, h));
    const Matrix g = z.middleRows(2 * h, h).array().tanh().matrix();
    const Matrix o = sigmoid(z.bottomRows(h));
    auto& c = state.c[static_cast<std::size_t>(l)];
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    state.h[static_cast<std::size_t>(l)] = o.cwiseProduct(c.array().tanh().matrix());
    x = state.h[static_cast<std::size_t>(l)];
  }
  Matrix logits = output_embedding() * x;
  logits.colwise() += params_.decoder_bias.col(0);
  for (Eigen::Index j = 0; j < b; ++j) {
    auto col = logits.col(j);
    const double m = col.maxCoeff();
    col = (col.array() - m).exp().matrix();
    col /= col.sum();
  }
  return logits;
}

double forward_backward(const LanguageModel& model, const Segment& seg, HiddenState& state,
                        Parameters* grads, Rng* dropout_rng) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const Eigen::Index batch = seg.batch;
  const Eigen::Index tb = seg.length * batch;
  const double p_drop = dropout_rng ? cfg.dropout : 0.0;

  Matrix x0(cfg.embed_dim, tb);
  for (Eigen::Index j = 0; j < tb; ++j) {
    x0.col(j) = p.embedding.row(seg.inputs[static_cast<std::size_t>(j)]).transpose();
  }
  Matrix mask_in;
  if (p_drop > 0.0) {
    mask_in = dropout_mask(x0.rows(), tb, p_drop, *dropout_rng);
    x0 = x0.cwiseProduct(mask_in);
  }

  std::vector<LayerCache> caches(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto& layer = p.layers[ul];
    auto& cache = caches[ul];
    const Eigen::Index h = cfg.layer_output(l);
    cache.input = l == 0 ? std::move(x0) : caches[ul - 1].h;
    Matrix zx = layer.w_input * cache.input;
    zx.colwise() += layer.bias.col(0);
    cache.gates.resize(4 * h, tb);
    cache.c.resize(h, tb);
    cache.h.resize(h, tb);
    cache.h0 = state.h[ul];
    cache.c0 = state.c[ul];
    Matrix h_prev = cache.h0;
    Matrix c_prev = cache.c0;
    for (Eigen::Index t = 0; t < seg.length; ++t) {
      Matrix z = zx.middleCols(t * batch, batch) + layer.w_hidden * h_prev;
      auto gates = cache.gates.middleCols(t * batch, batch);
      gates.topRows(h) = sigmoid(z.topRows(h));
      gates.middleRows(h, h) = sigmoid(z.middleRows(h, h));
      gates.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
      gates.bottomRows(h) = sigmoid(z.bottomRows(h));
      c_prev = gates.middleRows(h, h).cwiseProduct(c_prev) +
               gates.topRows(h).cwiseProduct(gates.middleRows(2 * h, h));
      h_prev = gates.bottomRows(h).cwiseProduct(c_prev.array().tanh().matrix());
      cache.c.middleCols(t * batch, batch) = c_prev;
      cache.h.middleCols(t * batch, batch) = h_prev;
    }
    state.h[ul] = h_prev;
    state.c[ul] = c_prev;
  }

  const Matrix& top = caches.back().h;
  Matrix mask_out;
  Matrix y;
  if (p_drop > 0.0) {
    mask_out = dropout_mask(top.rows(), tb, p_drop, *dropout_rng);
    y = top.cwiseProduct(mask_out);
  } else {
    y = top;
  }
  const Matrix& dec = model.output_embedding();
  Matrix logits = dec * y;
  logits.colwise() += p.decoder_bias.col(0);

  double loss = 0.0;
  for (Eigen::Index j = 0; j < tb; ++j) {
    auto col = logits.col(j);
    const double m = col.maxCoeff();
    col = (col.array() - m).exp().matrix();
    const double sum = col.sum();
    const auto target = seg.targets[static_cast<std::size_t>(j)];
    loss -= std::log(col[target] / sum);
    col /= sum;
  }
  loss /= static_cast<double>(tb);
  if (!grads) return loss;

  // logits now hold probabilities; turn them into d(loss)/d(logits)
  for (Eigen::Index j = 0; j < tb; ++j) logits(seg.targets[static_cast<std::size_t>(j)], j) -= 1.0;
  logits /= static_cast<double>(tb);
  Matrix& d_logits = logits;

  Matrix& d_dec = cfg.tie_weights ? grads->embedding : grads->decoder;
  d_dec.noalias() += d_logits * y.transpose();
  grads->decoder_bias += d_logits.rowwise().sum();
  Matrix d_above = dec.transpose() * d_logits;
  if (p_drop > 0.0) d_above = d_above.cwiseProduct(mask_out);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto& layer = p.layers[ul];
    auto& g_layer = grads->layers[ul];
    const auto& cache = caches[ul];
    const Eigen::Index h = cfg.layer_output(l);

    Matrix dz(4 * h, tb);
    Matrix dh_next = Matrix::Zero(h, batch);
    Matrix dc_next = Matrix::Zero(h, batch);
    for (Eigen::Index t = seg.length - 1; t >= 0; --t) {
      const auto gates = cache.gates.middleCols(t * batch, batch);
      const auto i = gates.topRows(h).array();
      const auto f = gates.middleRows(h, h).array();
      const auto g = gates.middleRows(2 * h, h).array();
      const auto o = gates.bottomRows(h).array();
      const auto c = cache.c.middleCols(t * batch, batch).array();
      const Matrix& c_prev_src = cache.c0;
      const auto c_prev = t > 0 ? cache.c.middleCols((t - 1) * batch, batch).array()
                                : c_prev_src.middleCols(0, batch).array();
      const Eigen::ArrayXXd tc = c.tanh();
      const Eigen::ArrayXXd dh = d_above.middleCols(t * batch, batch).array() + dh_next.array();
      const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
      auto dzt = dz.middleCols(t * batch, batch);
      dzt.topRows(h) = (dc * g * i * (1.0 - i)).matrix();
      dzt.middleRows(h, h) = (dc * c_prev * f * (1.0 - f)).matrix();
      dzt.middleRows(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
      dzt.bottomRows(h) = (dh * tc * o * (1.0 - o)).matrix();
      dh_next.noalias() = layer.w_hidden.transpose() * dzt;
      dc_next = (dc * f).matrix();
    }

    Matrix h_prev_all(h, tb);
    h_prev_all.leftCols(batch) = cache.h0;
    if (seg.length > 1) h_prev_all.rightCols(tb - batch) = cache.h.leftCols(tb - batch);
    g_layer.w_input.noalias() += dz * cache.input.transpose();
    g_layer.w_hidden.noalias() += dz * h_prev_all.transpose();
    g_layer.bias += dz.rowwise().sum();
    d_above = layer.w_input.transpose() * dz;
  }

  if (p_drop > 0.0) d_above = d_above.cwiseProduct(mask_in);
  for (Eigen::Index j = 0; j < tb; ++j) {
    grads->embedding.row(seg.inputs[static_cast<std::size_t>(j)]) += d_above.col(j).transpose();
  }
  return loss;
}

BatchedStream BatchedStream::make(std::span<const corpus::TokenId> ids, Eigen::Index columns) {
  if (columns < 1) throw InputError("batch size must be >= 1");
  BatchedStream out;
  out.columns = columns;
  out.length = static_cast<Eigen::Index>(ids.size()) / columns;
  if (out.length < 2) throw InputError("stream too short for the requested batch size");
  out.data.resize(static_cast<std::size_t>(out.length * columns));
  for (Eigen::Index b = 0; b < columns; ++b) {
    for (Eigen::Index t = 0; t < out.length; ++t) {
      out.data[static_cast<std::size_t>(t * columns + b)] = ids[static_cast<std::size_t>(b * out.length + t)];
    }
  }
  return out;
}

Segment BatchedStream::segment(Eigen::Index start, Eigen::Index max_len) const {
  Segment s;
  s.batch = columns;
  s.length = std::min(max_len, length - 1 - start);
  const auto begin = static_cast<std::ptrdiff_t>(start * columns);
  const auto count = static_cast<std::ptrdiff_t>(s.length * columns);
  s.inputs.assign(data.begin() + begin, data.begin() + begin + count);
  s.targets.assign(data.begin() + begin + columns, data.begin() + begin + columns + count);
  return s;
}

}  // namespace biaslab::langmodel
