#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "biaslab/corpus.hpp"

namespace biaslab::genderspace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class EmbeddingRole { Input, Output };

std::string_view role_name(EmbeddingRole role);
EmbeddingRole parse_role(std::string_view name);

// One row per vocabulary id.
struct EmbeddingMatrix {
  Matrix rows;
  EmbeddingRole role = EmbeddingRole::Input;

  Eigen::Index vocab_size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }
};

class DegenerateSubspace : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Row i is (u_i - v_i) / 2 for the i-th defining pair.
struct DifferenceMatrix {
  Matrix c;
  std::vector<std::pair<corpus::TokenId, corpus::TokenId>> pair_ids;
};

DifferenceMatrix build_difference_matrix(const Matrix& embedding, const corpus::DefiningSets& sets);
inline DifferenceMatrix build_difference_matrix(const EmbeddingMatrix& emb,
                                                const corpus::DefiningSets& sets) {
  return build_difference_matrix(emb.rows, sets);
}

struct SingularValueDecomposition {
  Vector singular_values;  // descending, min(rows, cols) entries
  Matrix right_vectors;    // cols x min(rows, cols), column j pairs with singular_values[j]
};

// One-sided Jacobi on the transpose: orthogonalizes the rows of `a`, so the
// rotations act on vectors of length a.cols() and there are
// rows*(rows-1)/2 of them per sweep. Each right singular vector has its
// largest-magnitude entry positive.
SingularValueDecomposition jacobi_svd(const Matrix& a);

struct GenderSubspace {
  Matrix basis;  // d x k, orthonormal columns
  Vector singular_values;
  int k = 0;
  double captured_variance = 0.0;
};

// Relative slack in the cumulative-energy comparison so that spectra such as
// (1, 1) at threshold 0.5 select k = 1 despite rounding in the SVD.
inline constexpr double kThresholdSlack = 1e-12;

GenderSubspace gender_subspace(const DifferenceMatrix& diff, double threshold = 0.5);

// lambda * ||N B||_F^2
double regularizer_value(const Eigen::Ref<const Matrix>& n_matrix, const GenderSubspace& space,
                         double lambda);
// 2 * lambda * N B B^T
Matrix regularizer_gradient(const Eigen::Ref<const Matrix>& n_matrix, const GenderSubspace& space,
                            double lambda);

// Ids of the rows that make up N: every id except defining-set members and
// special tokens.
std::vector<corpus::TokenId> neutral_rows(const corpus::Vocabulary& vocab,
                                          const corpus::DefiningSets& sets);

Matrix gather_rows(const Matrix& m, std::span<const corpus::TokenId> ids);

// Adds the regularizer gradient for rows `neutral` of `embedding` into
// `gradient` (same shape) and returns the regularizer value.
double accumulate_regularizer(const Matrix& embedding, std::span<const corpus::TokenId> neutral,
                              const GenderSubspace& space, double lambda, Matrix& gradient);

// Removes the subspace component from every row outside the defining sets.
EmbeddingMatrix hard_debias(const EmbeddingMatrix& emb, const GenderSubspace& space,
                            const corpus::DefiningSets& sets);

// "V d role" header, then V rows of d floats at 9 significant digits.
void save_embedding(const EmbeddingMatrix& emb, const std::filesystem::path& path);
EmbeddingMatrix load_embedding(const std::filesystem::path& path);

// {k, captured_variance, singular_values[], basis: d x k row-major}
std::string subspace_json(const GenderSubspace& space);

}  // namespace biaslab::genderspace
