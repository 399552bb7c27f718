#pragma once

// Joint softmax + center + git objective:
//
//   L = L_S + lambda_c * L_C + lambda_g * L_G
//   L_S = sum_i -log softmax(logits_i)[y_i]
//   L_C = 1/2 sum_i |x_i - c_{y_i}|^2
//   L_G = sum_{(i,j): y_i != y_j} 1 / (1 + |x_i - c_{y_j}|^2)
//
// All terms are batch sums. Centers are constants for the gradients and
// move only through update_centers().

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gitloss/errors.hpp"
#include "gitloss/matrix.hpp"

namespace gitloss {

using Label = std::size_t;

struct LossWeights {
  double lambda_c = 0.0;
  double lambda_g = 0.0;
  double alpha = 0.5;  // center update rate

  void validate() const {
    if (!(lambda_c >= 0.0) || !(lambda_g >= 0.0)) {
      throw ParameterError("loss weights must be >= 0 (lambda_c=" + std::to_string(lambda_c) +
                           ", lambda_g=" + std::to_string(lambda_g) + ")");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw ParameterError("center update rate alpha must lie in (0, 1], got " +
                           std::to_string(alpha));
    }
  }
};

/// Per-class centers; row j holds c_j.
struct CenterBank {
  Matrix centers;

  CenterBank() = default;
  explicit CenterBank(Matrix c) : centers(std::move(c)) {}
  CenterBank(std::size_t n_classes, std::size_t dim) : centers(n_classes, dim) {}

  std::size_t n_classes() const noexcept { return centers.rows(); }
  std::size_t dim() const noexcept { return centers.cols(); }
};

/// Scalar loss plus gradients. Terms that do not differentiate w.r.t. an
/// input leave the corresponding gradient empty.
struct LossOutput {
  double value = 0.0;
  Matrix grad_features;
  Matrix grad_logits;
};

namespace detail {

inline void check_labels(std::span<const Label> labels, std::size_t rows, std::size_t n_classes,
                         const char* op) {
  if (labels.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw LabelError(std::string(op) + ": label " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

inline void check_bank(const Matrix& features, const CenterBank& bank, const char* op) {
  if (bank.dim() != features.cols()) {
    throw DimensionError(std::string(op) + ": features " + features.shape() +
                         " incompatible with centers " + bank.centers.shape());
  }
}

}  // namespace detail

/// One git pair term 1 / (1 + s) for squared distance s. Lies in (0, 1].
inline double git_pair_term(double squared_dist) noexcept { return 1.0 / (1.0 + squared_dist); }

inline LossOutput softmax_cross_entropy(const Matrix& logits, std::span<const Label> labels) {
  detail::check_labels(labels, logits.rows(), logits.cols(), "softmax_cross_entropy");
  if (!logits.all_finite()) throw NumericError("softmax_cross_entropy: non-finite logit");

  LossOutput out;
  out.grad_logits = Matrix(logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    auto g = out.grad_logits.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    const double zmax = z[top];
    // log(1 + rest) keeps its digits when one class dominates
    double rest = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      g[k] = std::exp(z[k] - zmax);
      if (k != top) rest += g[k];
    }
    total += std::log1p(rest) - (z[labels[i]] - zmax);
    const double denom = 1.0 + rest;
    for (double& p : g) p /= denom;
    g[labels[i]] -= 1.0;
  }
  out.value = total;
  return out;
}

inline LossOutput center_loss(const Matrix& features, std::span<const Label> labels,
                              const CenterBank& bank) {
  detail::check_bank(features, bank, "center_loss");
  detail::check_labels(labels, features.rows(), bank.n_classes(), "center_loss");

  LossOutput out;
  out.grad_features = Matrix(features.rows(), features.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto x = features.row(i);
    auto c = bank.centers.row(labels[i]);
    auto g = out.grad_features.row(i);
    for (std::size_t k = 0; k < x.size(); ++k) {
      g[k] = x[k] - c[k];
      total += g[k] * g[k];
    }
  }
  out.value = 0.5 * total;
  return out;
}

/// Git term over ordered divergent-label sample pairs.
///
/// Pair (i, j) contributes 1/(1 + |x_i - c_{y_j}|^2), which depends on j only
/// through y_j, so the pairs are grouped per class: sample i meets center
/// c_k once for every batch sample labelled k != y_i.
inline LossOutput git_term(const Matrix& features, std::span<const Label> labels,
                           const CenterBank& bank) {
  detail::check_bank(features, bank, "git_term");
  detail::check_labels(labels, features.rows(), bank.n_classes(), "git_term");

  std::vector<std::size_t> class_count(bank.n_classes(), 0);
  for (Label y : labels) ++class_count[y];

  const std::size_t d = features.cols();
  LossOutput out;
  out.grad_features = Matrix(features.rows(), d);
  std::vector<double> diff(d);
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto x = features.row(i);
    auto g = out.grad_features.row(i);
    for (std::size_t k = 0; k < bank.n_classes(); ++k) {
      if (k == labels[i] || class_count[k] == 0) continue;
      auto c = bank.centers.row(k);
      double sq = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        diff[t] = x[t] - c[t];
        sq += diff[t] * diff[t];
      }
      const double u = 1.0 + sq;
      const double count = static_cast<double>(class_count[k]);
      total += count / u;
      const double coef = -2.0 * count / (u * u);
      for (std::size_t t = 0; t < d; ++t) g[t] += coef * diff[t];
    }
  }
  out.value = total;
  return out;
}

/// Full objective. grad_features carries lambda_c*dL_C + lambda_g*dL_G; the
/// softmax path reaches the features through grad_logits and the
/// classifier's backward pass.
///
/// With WithGitTerm = false the git term is compiled out entirely; with
/// lambda_g == 0 it is skipped at run time. Both give the same bits.
template <bool WithGitTerm = true>
LossOutput joint_loss(const Matrix& features, std::span<const Label> labels,
                      const Matrix& logits, const CenterBank& bank, const LossWeights& w) {
  if (features.rows() != logits.rows()) {
    throw DimensionError("joint_loss: features " + features.shape() + " vs logits " +
                         logits.shape());
  }
  LossOutput soft = softmax_cross_entropy(logits, labels);
  LossOutput center = center_loss(features, labels, bank);

  LossOutput out;
  out.value = soft.value + w.lambda_c * center.value;
  out.grad_logits = std::move(soft.grad_logits);
  out.grad_features = std::move(center.grad_features);
  for (double& v : out.grad_features.values()) v *= w.lambda_c;

  if constexpr (WithGitTerm) {
    if (w.lambda_g != 0.0) {
      LossOutput git = git_term(features, labels, bank);
      out.value += w.lambda_g * git.value;
      auto dst = out.grad_features.values();
      auto src = git.grad_features.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w.lambda_g * src[k];
    }
  }
  return out;
}

/// Moves each center present in the batch toward its samples:
///   c_j <- c_j - alpha * sum_{y_i = j}(c_j - x_i) / (1 + n_j)
inline CenterBank update_centers(const CenterBank& bank, const Matrix& features,
                                 std::span<const Label> labels, double alpha) {
  detail::check_bank(features, bank, "update_centers");
  detail::check_labels(labels, features.rows(), bank.n_classes(), "update_centers");

  const std::size_t d = bank.dim();
  Matrix delta(bank.n_classes(), d);
  std::vector<std::size_t> count(bank.n_classes(), 0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Label j = labels[i];
    auto c = bank.centers.row(j);
    auto x = features.row(i);
    auto acc = delta.row(j);
    for (std::size_t t = 0; t < d; ++t) acc[t] += c[t] - x[t];
    ++count[j];
  }
  CenterBank next = bank;
  for (std::size_t j = 0; j < bank.n_classes(); ++j) {
    if (count[j] == 0) continue;
    const double denom = 1.0 + static_cast<double>(count[j]);
    auto c = next.centers.row(j);
    auto acc = delta.row(j);
    for (std::size_t t = 0; t < d; ++t) c[t] -= alpha * (acc[t] / denom);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

/// max_k |a_k - n_k| / max(1, |a_k|, |n_k|)
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("max_relative_error: " + std::to_string(analytic.size()) + " vs " +
                         std::to_string(numeric.size()) + " entries");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({1.0, std::abs(analytic[k]), std::abs(numeric[k])});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

/// Central differences of f with respect to every entry of x. x is
/// perturbed in place and restored.
inline Matrix central_difference(const std::function<double()>& f, Matrix& x, double h = 1e-5) {
  Matrix grad = Matrix::zeros_like(x);
  auto xs = x.values();
  auto gs = grad.values();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double saved = xs[k];
    xs[k] = saved + h;
    const double up = f();
    xs[k] = saved - h;
    const double down = f();
    xs[k] = saved;
    gs[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

enum class LossTerm { softmax, center, git, joint };

inline const char* to_string(LossTerm t) {
  switch (t) {
    case LossTerm::softmax: return "L_S";
    case LossTerm::center: return "L_C";
    case LossTerm::git: return "L_G";
    case LossTerm::joint: return "joint";
  }
  return "?";
}

/// Largest relative disagreement between the analytic gradient of `term`
/// and central differences (step h) over every input coordinate it
/// differentiates: logits for L_S, features for L_C and L_G, both for joint.
inline double finite_diff_check(LossTerm term, const Matrix& features,
                                std::span<const Label> labels, const Matrix& logits,
                                const CenterBank& bank, const LossWeights& w, double h = 1e-5) {
  if (features.size() > 10000 || logits.size() > 10000) {
    throw ParameterError("finite_diff_check: batch too large to perturb every coordinate");
  }
  Matrix x = features;
  Matrix z = logits;
  auto evaluate = [&]() -> LossOutput {
    switch (term) {
      case LossTerm::softmax: return softmax_cross_entropy(z, labels);
      case LossTerm::center: return center_loss(x, labels, bank);
      case LossTerm::git: return git_term(x, labels, bank);
      case LossTerm::joint: return joint_loss(x, labels, z, bank, w);
    }
    throw ParameterError("unknown loss term");
  };
  const LossOutput analytic = evaluate();
  auto value = [&] { return evaluate().value; };

  double worst = 0.0;
  if (term != LossTerm::softmax) {
    const Matrix numeric = central_difference(value, x, h);
    worst = std::max(worst, max_relative_error(analytic.grad_features.values(), numeric.values()));
  }
  if (term == LossTerm::softmax || term == LossTerm::joint) {
    const Matrix numeric = central_difference(value, z, h);
    worst = std::max(worst, max_relative_error(analytic.grad_logits.values(), numeric.values()));
  }
  return worst;
}

}  // namespace gitloss
