#pragma once

// Numerical verification of every analytic gradient in the library against
// central finite differences: the four loss terms on a small random batch,
// and the joint loss backpropagated through a tiny network.

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gitloss/losses.hpp"
#include "gitloss/matrix.hpp"
#include "gitloss/network.hpp"
#include "gitloss/rng.hpp"

namespace gitloss {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  double threshold = 1e-5;
  std::vector<GradcheckEntry> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

using GitGradient =
    std::function<Matrix(const Matrix& features, std::span<const Label>, const CenterBank&)>;

struct GradcheckOptions {
  double threshold = 1e-5;
  double step = 1e-5;
  // Replaces the analytic L_G gradient under test; used for negative controls.
  GitGradient git_gradient;
};

struct GradcheckBatch {
  Matrix features;
  Matrix logits;
  std::vector<Label> labels;
  std::vector<Label> distinct_labels;
  CenterBank bank;
  LossWeights weights{0.1, 0.1, 0.5};
};

/// m = 8 samples, d = 2, n = 10 classes. Everything is drawn from gaussians
/// so every term has a non-trivial gradient.
inline GradcheckBatch make_gradcheck_batch(std::uint64_t seed, std::size_t m = 8,
                                           std::size_t d = 2, std::size_t n = 10) {
  SeededRng rng = SeededRng(seed).split(0x67726164);
  GradcheckBatch b;
  b.features = rng_gaussian(rng, m, d, 0.0, 1.0);
  b.logits = rng_gaussian(rng, m, n, 0.0, 2.0);
  b.bank = CenterBank(rng_gaussian(rng, n, d, 0.0, 1.0));
  for (std::size_t i = 0; i < m; ++i) b.labels.push_back(rng.below(n));
  std::vector<Label> perm(n);
  std::iota(perm.begin(), perm.end(), Label{0});
  rng.shuffle(perm);
  b.distinct_labels.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(m, n)));
  return b;
}

/// End-to-end check: joint loss through a 784 -> 8 -> 2 -> 10 relu network
/// on 4 samples, against central differences over every parameter.
inline double network_gradcheck(std::uint64_t seed, double step = 1e-5) {
  SeededRng rng = SeededRng(seed).split(0x6e6574);
  MlpConfig cfg;
  cfg.input_dim = 784;
  cfg.hidden_dims = {8};
  cfg.feature_dim = 2;
  cfg.n_classes = 10;
  MlpState state = init(cfg, rng);
  // Non-zero biases so every bias gradient is exercised.
  for (std::size_t l = 0; l < state.n_layers(); ++l) state.bias(l) = rng_gaussian(rng, 1, state.bias(l).cols(), 0.0, 0.1);

  const std::size_t m = 4;
  Matrix input(m, cfg.input_dim);
  for (double& v : input.values()) v = rng.uniform();
  std::vector<Label> labels;
  for (std::size_t i = 0; i < m; ++i) labels.push_back(rng.below(cfg.n_classes));
  const CenterBank bank(rng_gaussian(rng, cfg.n_classes, cfg.feature_dim, 0.0, 1.0));
  const LossWeights w{0.1, 0.1, 0.5};

  const ForwardCache cache = forward(state, input);
  const LossOutput loss = joint_loss(cache.features, labels, cache.logits, bank, w);
  const ParamGrads analytic = backward(state, cache, loss.grad_logits, loss.grad_features);

  auto value = [&] {
    const ForwardCache c = forward(state, input);
    return joint_loss(c.features, labels, c.logits, bank, w).value;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    const Matrix numeric = central_difference(value, state.params[k], step);
    worst = std::max(worst, max_relative_error(analytic[k].values(), numeric.values()));
  }
  return worst;
}

/// The five named checks: L_S, L_C, L_G, joint, network.
inline GradcheckReport run_gradcheck(std::uint64_t seed, const GradcheckOptions& opt = {}) {
  GradcheckReport report;
  report.seed = seed;
  report.threshold = opt.threshold;
  const GradcheckBatch b = make_gradcheck_batch(seed);
  auto add = [&](std::string name, double err) {
    report.checks.push_back({std::move(name), err, err < opt.threshold});
  };

  add("L_S", finite_diff_check(LossTerm::softmax, b.features, b.labels, b.logits, b.bank, b.weights,
                               opt.step));
  add("L_C", finite_diff_check(LossTerm::center, b.features, b.labels, b.logits, b.bank, b.weights,
                               opt.step));
  if (opt.git_gradient) {
    Matrix x = b.features;
    const Matrix analytic = opt.git_gradient(x, b.distinct_labels, b.bank);
    const Matrix numeric = central_difference(
        [&] { return git_term(x, b.distinct_labels, b.bank).value; }, x, opt.step);
    add("L_G", max_relative_error(analytic.values(), numeric.values()));
  } else {
    add("L_G", finite_diff_check(LossTerm::git, b.features, b.distinct_labels, b.logits, b.bank,
                                 b.weights, opt.step));
  }
  add("joint", finite_diff_check(LossTerm::joint, b.features, b.labels, b.logits, b.bank, b.weights,
                                 opt.step));
  add("network", network_gradcheck(seed, opt.step));
  return report;
}

}  // namespace gitloss
