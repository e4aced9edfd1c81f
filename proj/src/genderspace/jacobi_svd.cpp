#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biaslab/genderspace.hpp"

namespace biaslab::genderspace {

SingularValueDecomposition jacobi_svd(const Matrix& a) {
  // Columns of w are the rows of a. Rotating pairs of columns until they are
  // mutually orthogonal leaves w = V * diag(sigma) * Q^T, so the normalized
  // columns are the right singular vectors of a.
  Matrix w = a.transpose();
  const Eigen::Index n = w.cols();
  const Eigen::Index r = std::min(a.rows(), a.cols());
  constexpr double tol = 1e-15;
  constexpr int max_sweeps = 80;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector norms(n);
  for (Eigen::Index j = 0; j < n; ++j) norms[j] = w.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return norms[x] > norms[y]; });

  SingularValueDecomposition out;
  out.singular_values.resize(r);
  out.right_vectors = Matrix::Zero(a.cols(), r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    const double sigma = norms[src];
    out.singular_values[j] = sigma;
    if (sigma == 0.0) continue;
    Vector v = w.col(src) / sigma;
    Eigen::Index largest = 0;
    v.cwiseAbs().maxCoeff(&largest);
    if (v[largest] < 0.0) v = -v;
    out.right_vectors.col(j) = v;
  }
  return out;
}

}  // namespace biaslab::genderspace
