#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "gitloss/losses.hpp"
#include "gitloss/network.hpp"

using namespace gitloss;

namespace {

MlpConfig small_config(std::size_t d = 2) {
  MlpConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden_dims = {5, 4};
  cfg.feature_dim = d;
  cfg.n_classes = 3;
  return cfg;
}

// Random biases so no pre-activation sits exactly on the relu kink.
MlpState random_state(const MlpConfig& cfg, std::uint64_t seed) {
  SeededRng rng(seed);
  MlpState s = init(cfg, rng);
  for (std::size_t l = 0; l < s.n_layers(); ++l) s.bias(l) = rng_gaussian(rng, 1, s.bias(l).cols(), 0.0, 0.3);
  return s;
}

}  // namespace

TEST(Network, ShapesFollowConfig) {
  SeededRng rng(1);
  const MlpState s = init(MlpConfig{}, rng);
  ASSERT_EQ(s.n_layers(), 4u);
  EXPECT_EQ(s.weight(0).shape(), "(784x512)");
  EXPECT_EQ(s.weight(1).shape(), "(512x256)");
  EXPECT_EQ(s.weight(2).shape(), "(256x128)");
  EXPECT_EQ(s.classifier_weight().shape(), "(128x10)");
  EXPECT_EQ(s.classifier_bias().shape(), "(1x10)");
  EXPECT_EQ(s.parameter_count(), 784u * 512 + 512 + 512 * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10);

  const auto cache = forward(s, Matrix(3, 784, 0.5));
  EXPECT_EQ(cache.features.shape(), "(3x128)");
  EXPECT_EQ(cache.logits.shape(), "(3x10)");
}

TEST(Network, InitIsHeNormalWithZeroBiases) {
  SeededRng rng(2);
  const MlpState s = init(MlpConfig{}, rng);
  for (std::size_t l = 0; l < s.n_layers(); ++l) {
    for (double b : s.bias(l).values()) EXPECT_EQ(b, 0.0);
    const auto w = s.weight(l).values();
    double mean = 0.0, sq = 0.0;
    for (double v : w) mean += v;
    mean /= w.size();
    for (double v : w) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / (w.size() - 1));
    const double expected = std::sqrt(2.0 / s.weight(l).rows());
    EXPECT_NEAR(sd / expected, 1.0, 0.1) << "layer " << l;
  }
}

TEST(Network, InitIsDeterministicPerSeed) {
  SeededRng a(9), b(9), c(10);
  EXPECT_EQ(init(small_config(), a), init(small_config(), b));
  EXPECT_FALSE(init(small_config(), c) == init(small_config(), a));
}

TEST(Network, ForwardRejectsWrongWidth) {
  SeededRng rng(1);
  const MlpState s = init(small_config(), rng);
  EXPECT_THROW(forward(s, Matrix(2, 7)), DimensionError);
}

TEST(Network, InvalidConfig) {
  MlpConfig cfg = small_config();
  cfg.feature_dim = 0;
  SeededRng rng(1);
  EXPECT_THROW(init(cfg, rng), ParameterError);
  cfg = small_config();
  cfg.hidden_dims = {4, 0};
  EXPECT_THROW(init(cfg, rng), ParameterError);
}

TEST(Network, ForwardMatchesHandComputation) {
  MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_dims = {2};
  cfg.feature_dim = 1;
  cfg.n_classes = 2;
  MlpState s;
  s.config = cfg;
  s.params = {Matrix{{1, -1}, {2, 1}}, Matrix{{0, -5}},  // relu(x W + b)
              Matrix{{1}, {3}}, Matrix{{0.5}},
              Matrix{{2, -1}}, Matrix{{0, 1}}};
  // x = [1, 1]: z = [3, -5], a = [3, 0], f = 3.5, logits = [7, -2.5]
  const auto cache = forward(s, Matrix{{1, 1}});
  EXPECT_EQ(cache.features, (Matrix{{3.5}}));
  EXPECT_EQ(cache.logits, (Matrix{{7, -2.5}}));
}

TEST(Network, FeatureLayerIsLinear) {
  // Negative features must survive: no activation after the feature layer.
  MlpConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden_dims = {1};
  cfg.feature_dim = 1;
  cfg.n_classes = 1;
  MlpState s;
  s.config = cfg;
  s.params = {Matrix{{1}}, Matrix{{0}}, Matrix{{-2}}, Matrix{{0}}, Matrix{{1}}, Matrix{{0}}};
  EXPECT_EQ(forward(s, Matrix{{3}}).features(0, 0), -6.0);
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cfg = small_config();
    MlpState s = random_state(cfg, seed);
    SeededRng rng(seed + 50);
    const Matrix input = rng_gaussian(rng, 4, cfg.input_dim, 0.0, 1.0);
    const std::vector<Label> labels{0, 1, 2, 1};
    const CenterBank bank(rng_gaussian(rng, cfg.n_classes, cfg.feature_dim, 0.0, 1.0));
    const LossWeights w{0.1, 0.1, 0.5};

    auto loss = [&] {
      const auto c = forward(s, input);
      return joint_loss(c.features, labels, c.logits, bank, w).value;
    };
    const auto cache = forward(s, input);
    const auto out = joint_loss(cache.features, labels, cache.logits, bank, w);
    const auto grads = backward(s, cache, out.grad_logits, out.grad_features);
    ASSERT_EQ(grads.size(), s.params.size());
    for (std::size_t p = 0; p < s.params.size(); ++p) {
      const Matrix numeric = central_difference(loss, s.params[p]);
      EXPECT_LT(max_relative_error(grads[p].values(), numeric.values()), 1e-6) << "param " << p;
    }
  }
}

TEST(Network, LeakyReluBackward) {
  auto cfg = small_config();
  cfg.activation = Activation{ActivationKind::leaky_relu, 0.1};
  MlpState s = random_state(cfg, 3);
  SeededRng rng(4);
  const Matrix input = rng_gaussian(rng, 3, cfg.input_dim, 0.0, 1.0);
  const std::vector<Label> labels{2, 0, 1};
  auto loss = [&] { return softmax_cross_entropy(forward(s, input).logits, labels).value; };
  const auto cache = forward(s, input);
  const auto out = softmax_cross_entropy(cache.logits, labels);
  const auto grads = backward(s, cache, out.grad_logits, Matrix::zeros_like(cache.features));
  const Matrix numeric = central_difference(loss, s.params[0]);
  EXPECT_LT(max_relative_error(grads[0].values(), numeric.values()), 1e-6);
}

TEST(Network, BackwardShapeErrors) {
  const MlpState s = random_state(small_config(), 1);
  const auto cache = forward(s, Matrix(2, 6, 0.1));
  EXPECT_THROW(backward(s, cache, Matrix(2, 4), Matrix(2, 2)), DimensionError);
  EXPECT_THROW(backward(s, cache, Matrix(2, 3), Matrix(2, 3)), DimensionError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const MlpState s = random_state(small_config(3), 12);
  SeededRng rng(5);
  const CenterBank bank(rng_gaussian(rng, 3, 3, 0.0, 1.0));
  std::stringstream buf;
  write_checkpoint(buf, s, bank);
  const Checkpoint back = read_checkpoint(buf);
  EXPECT_EQ(back.state, s);
  EXPECT_EQ(back.bank.centers, bank.centers);
  const Matrix x = rng_gaussian(rng, 4, 6, 0.0, 1.0);
  EXPECT_EQ(forward(back.state, x).logits, forward(s, x).logits);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const MlpState s = random_state(small_config(), 1);
  std::stringstream buf;
  write_checkpoint(buf, s, CenterBank(3, 2));
  std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(read_checkpoint(a), FormatError);

  std::istringstream b(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint(b), Error);

  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST(Network, HiddenLayerInitSpread) {
  MlpConfig cfg;
  cfg.input_dim = 100;
  cfg.hidden_dims = {200};
  cfg.feature_dim = 2;
  cfg.n_classes = 3;
  SeededRng rng(31);
  const MlpState s = init(cfg, rng);
  const auto w = s.weight(0).values();
  double sq = 0.0;
  for (double v : w) sq += v * v;
  const double sd = std::sqrt(sq / w.size());
  EXPECT_NEAR(sd, std::sqrt(2.0 / 100.0), 0.15 * std::sqrt(2.0 / 100.0));
}

TEST(Network, ZeroInputPropagatesZeros) {
  SeededRng rng(1);
  const MlpState s = init(small_config(), rng);
  const auto cache = forward(s, Matrix(5, 6));
  EXPECT_EQ(cache.features, Matrix(5, 2));
  EXPECT_EQ(cache.logits, Matrix(5, 3));
}

TEST(Network, SingleUnitHandTrace) {
  MlpConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden_dims = {1};
  cfg.feature_dim = 1;
  cfg.n_classes = 2;
  MlpState s;
  s.config = cfg;
  s.params = {Matrix{{1}}, Matrix{{0}}, Matrix{{1}}, Matrix{{0}}, Matrix{{1, 1}}, Matrix{{0, 0}}};
  // [[2]] -> relu(2) = 2 -> feature 2 -> logits [2, 2]
  const auto cache = forward(s, Matrix{{2}});
  EXPECT_EQ(cache.pre_activations[0], (Matrix{{2}}));
  EXPECT_EQ(cache.features, (Matrix{{2}}));
  EXPECT_EQ(cache.logits, (Matrix{{2, 2}}));
  // label 0: dL/dz = [-0.5, 0.5]. Both classifier weights are 1, so the
  // gradient reaching the feature cancels and the first layer gets zero.
  const auto loss = softmax_cross_entropy(cache.logits, std::vector<Label>{0});
  const auto grads = backward(s, cache, loss.grad_logits, Matrix(1, 1));
  EXPECT_EQ(grads[4], (Matrix{{-1, 1}}));  // features^T * dz = 2 * [-0.5, 0.5]
  EXPECT_EQ(grads[5], (Matrix{{-0.5, 0.5}}));
  EXPECT_EQ(grads[0], (Matrix{{0}}));
}

TEST(Network, ZeroUpstreamGivesZeroGrads) {
  const MlpState s = random_state(small_config(), 8);
  SeededRng rng(8);
  const auto cache = forward(s, rng_gaussian(rng, 4, 6, 0.0, 1.0));
  const auto grads = backward(s, cache, Matrix(4, 3), Matrix(4, 2));
  for (std::size_t p = 0; p < grads.size(); ++p) EXPECT_EQ(grads[p], Matrix::zeros_like(s.params[p]));
}

TEST(Network, ClassifierGradsFollowClosedForm) {
  const MlpState s = random_state(small_config(), 9);
  SeededRng rng(9);
  const auto cache = forward(s, rng_gaussian(rng, 7, 6, 0.0, 1.0));
  const Matrix dz = rng_gaussian(rng, 7, 3, 0.0, 1.0);
  const auto grads = backward(s, cache, dz, Matrix(7, 2));
  const std::size_t w = 2 * (s.n_layers() - 1);
  // dW = features^T dz and db = column sums of dz, by explicit loops.
  const Matrix& f = cache.features;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < 3; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 7; ++i) acc += f(i, a) * dz(i, k);
      EXPECT_NEAR(grads[w](a, k), acc, 1e-12);
    }
  for (std::size_t k = 0; k < 3; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 7; ++i) acc += dz(i, k);
    EXPECT_NEAR(grads[w + 1](0, k), acc, 1e-12);
  }
}
