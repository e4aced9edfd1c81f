#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "biaslab/genderspace.hpp"

namespace biaslab::genderspace {

std::string_view role_name(EmbeddingRole role) {
  return role == EmbeddingRole::Input ? "input" : "output";
}

EmbeddingRole parse_role(std::string_view name) {
  if (name == "input") return EmbeddingRole::Input;
  if (name == "output") return EmbeddingRole::Output;
  throw InputError("unknown embedding role '" + std::string(name) + "'");
}

DifferenceMatrix build_difference_matrix(const Matrix& embedding, const corpus::DefiningSets& sets) {
  if (sets.pairs().empty()) throw DegenerateSubspace("no defining pairs");
  DifferenceMatrix diff;
  diff.c.resize(static_cast<Eigen::Index>(sets.pairs().size()), embedding.cols());
  Eigen::Index i = 0;
  for (const auto& pair : sets.pairs()) {
    if (pair.male_id < 0 || pair.female_id < 0 || pair.male_id >= embedding.rows() ||
        pair.female_id >= embedding.rows()) {
      throw DimensionMismatch("defining pair (" + pair.male + ", " + pair.female +
                              ") is outside the embedding matrix");
    }
    diff.c.row(i++) = (embedding.row(pair.male_id) - embedding.row(pair.female_id)) / 2.0;
    diff.pair_ids.emplace_back(pair.male_id, pair.female_id);
  }
  return diff;
}

GenderSubspace gender_subspace(const DifferenceMatrix& diff, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw InputError("variance threshold must lie in (0, 1]");
  }
  const auto svd = jacobi_svd(diff.c);
  const Vector energy = svd.singular_values.array().square();
  const double total = energy.sum();
  if (!(total > 0.0)) throw DegenerateSubspace("degenerate gender direction: C is all zeros");

  GenderSubspace space;
  space.singular_values = svd.singular_values;
  double prefix = 0.0;
  int k = 0;
  while (k < energy.size()) {
    prefix += energy[k];
    ++k;
    if (prefix >= threshold * total * (1.0 - kThresholdSlack)) break;
  }
  space.k = k;
  space.captured_variance = prefix / total;
  space.basis = svd.right_vectors.leftCols(k);
  return space;
}

namespace {

void check_dims(Eigen::Index cols, const GenderSubspace& space) {
  if (cols != space.basis.rows()) {
    throw DimensionMismatch(fmt::format("embedding rows have length {} but the subspace lives in {} dims",
                                        cols, space.basis.rows()));
  }
}

}  // namespace

double regularizer_value(const Eigen::Ref<const Matrix>& n_matrix, const GenderSubspace& space,
                         double lambda) {
  check_dims(n_matrix.cols(), space);
  return lambda * (n_matrix * space.basis).squaredNorm();
}

Matrix regularizer_gradient(const Eigen::Ref<const Matrix>& n_matrix, const GenderSubspace& space,
                            double lambda) {
  check_dims(n_matrix.cols(), space);
  return 2.0 * lambda * (n_matrix * space.basis) * space.basis.transpose();
}

std::vector<corpus::TokenId> neutral_rows(const corpus::Vocabulary& vocab,
                                          const corpus::DefiningSets& sets) {
  std::vector<corpus::TokenId> rows;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<corpus::TokenId>(i);
    if (!vocab.is_special(id) && !sets.is_gendered(id)) rows.push_back(id);
  }
  return rows;
}

Matrix gather_rows(const Matrix& m, std::span<const corpus::TokenId> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
  return out;
}

double accumulate_regularizer(const Matrix& embedding, std::span<const corpus::TokenId> neutral,
                              const GenderSubspace& space, double lambda, Matrix& gradient) {
  check_dims(embedding.cols(), space);
  const Matrix projected = gather_rows(embedding, neutral) * space.basis;
  const Matrix grad = (2.0 * lambda) * projected * space.basis.transpose();
  for (std::size_t i = 0; i < neutral.size(); ++i) {
    gradient.row(neutral[i]) += grad.row(static_cast<Eigen::Index>(i));
  }
  return lambda * projected.squaredNorm();
}

EmbeddingMatrix hard_debias(const EmbeddingMatrix& emb, const GenderSubspace& space,
                            const corpus::DefiningSets& sets) {
  check_dims(emb.dim(), space);
  EmbeddingMatrix out = emb;
  for (Eigen::Index r = 0; r < out.rows.rows(); ++r) {
    if (sets.is_gendered(static_cast<corpus::TokenId>(r))) continue;
    const Eigen::RowVectorXd proj = out.rows.row(r) * space.basis;
    out.rows.row(r) -= proj * space.basis.transpose();
  }
  return out;
}

void save_embedding(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << emb.vocab_size() << ' ' << emb.dim() << ' ' << role_name(emb.role) << '\n';
  for (Eigen::Index r = 0; r < emb.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < emb.rows.cols(); ++c) {
      if (c) out << ' ';
      out << fmt::format("{:.9g}", emb.rows(r, c));
    }
    out << '\n';
  }
}

EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  Eigen::Index v = 0;
  Eigen::Index d = 0;
  std::string role;
  if (!(in >> v >> d >> role) || v <= 0 || d <= 0) {
    throw InputError("'" + path.string() + "': malformed embedding header");
  }
  EmbeddingMatrix emb;
  emb.role = parse_role(role);
  emb.rows.resize(v, d);
  for (Eigen::Index r = 0; r < v; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      if (!(in >> emb.rows(r, c))) {
        throw InputError(fmt::format("'{}': expected {}x{} values", path.string(), v, d));
      }
    }
  }
  return emb;
}

std::string subspace_json(const GenderSubspace& space) {
  nlohmann::ordered_json j;
  j["k"] = space.k;
  j["captured_variance"] = space.captured_variance;
  j["singular_values"] = std::vector<double>(space.singular_values.begin(), space.singular_values.end());
  auto basis = nlohmann::json::array();
  for (Eigen::Index r = 0; r < space.basis.rows(); ++r) {
    std::vector<double> row(space.basis.row(r).begin(), space.basis.row(r).end());
    basis.push_back(row);
  }
  j["basis"] = basis;
  return j.dump(2) + "\n";
}

}  // namespace biaslab::genderspace
