#include <cmath>

#include "biaslab/biasmeter.hpp"

namespace biaslab::biasmeter {

namespace {

struct Moments {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
  Moments m;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.sxx += dx * dx;
    m.sxy += dx * dy;
    m.syy += dy * dy;
  }
  return m;
}

}  // namespace

LinearFit ordinary_least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("regression inputs differ in length");
  if (x.size() < 2) throw MetricError("regression needs at least two points");
  const Moments m = moments(x, y);
  if (m.sxx == 0.0) throw MetricError("degenerate regressor: training scores have zero variance");

  LinearFit fit;
  fit.slope = m.sxy / m.sxx;
  fit.intercept = m.mean_y - fit.slope * m.mean_x;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.slope * x[i] + fit.intercept);
    sse += e * e;
  }
  fit.r_squared = m.syy > 0.0 ? 1.0 - sse / m.syy : 1.0;
  return fit;
}

AmplificationFit fit_with_outlier_removal(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MetricError("regression inputs differ in length");
  if (x.size() < 3) throw MetricError("amplification fit needs at least three common words");

  const std::size_t n = x.size();
  const LinearFit first = ordinary_least_squares(x, y);
  const Moments m = moments(x, y);

  std::vector<double> residuals(n);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    residuals[i] = y[i] - (first.slope * x[i] + first.intercept);
    sse += residuals[i] * residuals[i];
  }
  const double s2 = sse / static_cast<double>(n - 2);

  std::vector<double> kept_x;
  std::vector<double> kept_y;
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - m.mean_x;
    const double leverage = 1.0 / static_cast<double>(n) + dx * dx / m.sxx;
    const double scale = std::sqrt(s2 * (1.0 - leverage));
    const bool outlier = scale > 0.0 && std::abs(residuals[i] / scale) > kOutlierThreshold;
    if (outlier) {
      ++outliers;
    } else {
      kept_x.push_back(x[i]);
      kept_y.push_back(y[i]);
    }
  }

  AmplificationFit result;
  LinearFit final_fit = first;
  if (outliers > 0) {
    const Moments km = kept_x.size() >= 2 ? moments(kept_x, kept_y) : Moments{};
    if (kept_x.size() >= 2 && km.sxx > 0.0) {
      final_fit = ordinary_least_squares(kept_x, kept_y);
    } else {
      // the refit would be degenerate; keep every point
      outliers = 0;
    }
  }
  result.beta = final_fit.slope;
  result.intercept = final_fit.intercept;
  result.r_squared = final_fit.r_squared;
  result.n_outliers = outliers;
  result.n_used = n - outliers;
  return result;
}

AmplificationFit fit_amplification(const BiasScoreTable& train, const BiasScoreTable& generated) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [word, g] : generated.scores) {
    auto it = train.scores.find(word);
    if (it == train.scores.end()) continue;
    x.push_back(it->second.score);
    y.push_back(g.score);
  }
  if (x.size() < 3) {
    throw MetricError("amplification fit needs at least three words scored in both tables (found " +
                      std::to_string(x.size()) + ")");
  }
  return fit_with_outlier_removal(x, y);
}

}  // namespace biaslab::biasmeter
