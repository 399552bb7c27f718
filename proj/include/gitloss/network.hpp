#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gitloss/binary_io.hpp"
#include "gitloss/errors.hpp"
#include "gitloss/losses.hpp"
#include "gitloss/matrix.hpp"
#include "gitloss/rng.hpp"

namespace gitloss {

enum class ActivationKind : std::uint32_t { relu = 0, leaky_relu = 1 };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.01;  // negative-side slope, leaky_relu only

  double apply(double z) const noexcept {
    if (z > 0.0) return z;
    return kind == ActivationKind::relu ? 0.0 : slope * z;
  }
  double derivative(double z) const noexcept {
    if (z > 0.0) return 1.0;
    return kind == ActivationKind::relu ? 0.0 : slope;
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

/// input -> hidden_dims (activated) -> feature_dim (linear) -> n_classes.
struct MlpConfig {
  std::size_t input_dim = 784;
  std::vector<std::size_t> hidden_dims{512, 256};
  std::size_t feature_dim = 128;
  std::size_t n_classes = 10;
  Activation activation;

  void validate() const {
    auto positive = [](std::size_t v) { return v >= 1; };
    bool ok = positive(input_dim) && positive(feature_dim) && positive(n_classes);
    for (auto h : hidden_dims) ok = ok && positive(h);
    if (!ok) throw ParameterError("MlpConfig: every layer width must be >= 1");
  }

  // Widths of every layer boundary, input first, logits last.
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(feature_dim);
    w.push_back(n_classes);
    return w;
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Parameters stored as [W_0, b_0, W_1, b_1, ...]: hidden layers, then the
/// feature layer, then the classifier (W: d x n, b: 1 x n).
struct MlpState {
  MlpConfig config;
  std::vector<Matrix> params;

  std::size_t n_layers() const noexcept { return params.size() / 2; }
  std::size_t n_hidden() const noexcept { return config.hidden_dims.size(); }

  Matrix& weight(std::size_t layer) { return params[2 * layer]; }
  const Matrix& weight(std::size_t layer) const { return params[2 * layer]; }
  Matrix& bias(std::size_t layer) { return params[2 * layer + 1]; }
  const Matrix& bias(std::size_t layer) const { return params[2 * layer + 1]; }

  const Matrix& classifier_weight() const { return weight(n_layers() - 1); }
  const Matrix& classifier_bias() const { return bias(n_layers() - 1); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  friend bool operator==(const MlpState&, const MlpState&) = default;
};

struct ForwardCache {
  // layer_inputs[l] is what layer l consumed; the last entry is the
  // feature matrix fed to the classifier.
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;  // hidden layers only
  Matrix features;
  Matrix logits;
};

using ParamGrads = std::vector<Matrix>;

/// He-normal weights N(0, 2/fan_in), zero biases.
inline MlpState init(const MlpConfig& config, SeededRng& rng) {
  config.validate();
  MlpState state;
  state.config = config;
  const auto widths = config.widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(widths[l]));
    state.params.push_back(rng_gaussian(rng, widths[l], widths[l + 1], 0.0, stddev));
    state.params.emplace_back(1, widths[l + 1]);
  }
  return state;
}

namespace detail {

inline Matrix affine(const Matrix& input, const Matrix& weight, const Matrix& bias) {
  Matrix out = matmul(input, weight);
  auto b = bias.row(0);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return out;
}

}  // namespace detail

inline ForwardCache forward(const MlpState& state, const Matrix& input) {
  if (input.cols() != state.config.input_dim) {
    throw DimensionError("forward: input " + input.shape() + " but network expects " +
                         std::to_string(state.config.input_dim) + " columns");
  }
  ForwardCache cache;
  const auto& act = state.config.activation;
  Matrix current = input;
  for (std::size_t l = 0; l < state.n_hidden(); ++l) {
    Matrix z = detail::affine(current, state.weight(l), state.bias(l));
    Matrix a = z;
    for (double& v : a.values()) v = act.apply(v);
    cache.layer_inputs.push_back(std::move(current));
    cache.pre_activations.push_back(std::move(z));
    current = std::move(a);
  }
  const std::size_t feature_layer = state.n_hidden();
  cache.features = detail::affine(current, state.weight(feature_layer), state.bias(feature_layer));
  cache.layer_inputs.push_back(std::move(current));
  cache.logits = detail::affine(cache.features, state.classifier_weight(), state.classifier_bias());
  cache.layer_inputs.push_back(cache.features);
  return cache;
}

/// Gradients for every parameter, parallel to state.params. The two loss
/// paths merge at the features: upstream = grad_features + grad_logits * W^T.
inline ParamGrads backward(const MlpState& state, const ForwardCache& cache,
                           const Matrix& grad_logits, const Matrix& grad_features) {
  const std::size_t m = cache.features.rows();
  if (grad_logits.rows() != m || grad_logits.cols() != state.config.n_classes) {
    throw DimensionError("backward: grad_logits " + grad_logits.shape() + " vs logits " +
                         cache.logits.shape());
  }
  if (!grad_features.same_shape(cache.features)) {
    throw DimensionError("backward: grad_features " + grad_features.shape() + " vs features " +
                         cache.features.shape());
  }
  ParamGrads grads(state.params.size());
  const std::size_t classifier = state.n_layers() - 1;
  grads[2 * classifier] = matmul_tn(cache.features, grad_logits);
  grads[2 * classifier + 1] = column_sums(grad_logits);

  Matrix upstream = matmul_nt(grad_logits, state.classifier_weight());
  {
    auto dst = upstream.values();
    auto src = grad_features.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }

  const auto& act = state.config.activation;
  for (std::size_t l = classifier; l-- > 0;) {
    if (l < state.n_hidden()) {
      auto g = upstream.values();
      auto z = cache.pre_activations[l].values();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] *= act.derivative(z[k]);
    }
    grads[2 * l] = matmul_tn(cache.layer_inputs[l], upstream);
    grads[2 * l + 1] = column_sums(upstream);
    if (l > 0) upstream = matmul_nt(upstream, state.weight(l));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint file
//
// Little-endian binary:
//   "GITLOSS\0" | u32 version (=1)
//   u64 input_dim | u64 n_hidden | u64 hidden[n_hidden] | u64 feature_dim
//   u64 n_classes | u32 activation kind | f64 activation slope
//   u64 n_params  | per param: u64 rows, u64 cols, f64 values[rows*cols]
//   u64 center rows | u64 center cols | f64 centers[...]
//
// Doubles are written as their IEEE-754 bit patterns, so a save/load
// round trip is bitwise exact.

inline constexpr char kCheckpointMagic[8] = {'G', 'I', 'T', 'L', 'O', 'S', 'S', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;


inline void write_checkpoint(std::ostream& os, const MlpState& state, const CenterBank& bank) {
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  binary::put_u32(os, kCheckpointVersion);
  const auto& cfg = state.config;
  binary::put_u64(os, cfg.input_dim);
  binary::put_u64(os, cfg.hidden_dims.size());
  for (auto h : cfg.hidden_dims) binary::put_u64(os, h);
  binary::put_u64(os, cfg.feature_dim);
  binary::put_u64(os, cfg.n_classes);
  binary::put_u32(os, static_cast<std::uint32_t>(cfg.activation.kind));
  binary::put_f64(os, cfg.activation.slope);
  binary::put_u64(os, state.params.size());
  for (const auto& p : state.params) binary::put_matrix(os, p);
  binary::put_matrix(os, bank.centers);
}

struct Checkpoint {
  MlpState state;
  CenterBank bank;
};

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError("not a gitloss checkpoint (bad magic)");
  }
  const auto version = binary::get_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  auto& cfg = ck.state.config;
  cfg.input_dim = binary::get_u64(is);
  const auto n_hidden = binary::get_u64(is);
  if (n_hidden > 1024) throw FormatError("implausible hidden layer count");
  cfg.hidden_dims.resize(n_hidden);
  for (auto& h : cfg.hidden_dims) h = binary::get_u64(is);
  cfg.feature_dim = binary::get_u64(is);
  cfg.n_classes = binary::get_u64(is);
  const auto kind = binary::get_u32(is);
  if (kind > 1) throw FormatError("unknown activation kind " + std::to_string(kind));
  cfg.activation.kind = static_cast<ActivationKind>(kind);
  cfg.activation.slope = binary::get_f64(is);
  cfg.validate();

  const auto n_params = binary::get_u64(is);
  const auto widths = cfg.widths();
  if (n_params != 2 * (widths.size() - 1)) {
    throw FormatError("checkpoint parameter count does not match its config");
  }
  for (std::size_t k = 0; k < n_params; ++k) {
    Matrix p = binary::get_matrix(is);
    const std::size_t layer = k / 2;
    const std::size_t rows = (k % 2 == 0) ? widths[layer] : 1;
    if (p.rows() != rows || p.cols() != widths[layer + 1]) {
      throw FormatError("checkpoint parameter " + std::to_string(k) + " has shape " + p.shape());
    }
    ck.state.params.push_back(std::move(p));
  }
  ck.bank.centers = binary::get_matrix(is);
  if (ck.bank.n_classes() != cfg.n_classes || ck.bank.dim() != cfg.feature_dim) {
    throw FormatError("checkpoint centers " + ck.bank.centers.shape() + " do not match config");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const MlpState& state, const CenterBank& bank) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_checkpoint(os, state, bank);
  if (!os) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  try {
    return read_checkpoint(is);
  } catch (const IoError&) {
    throw IoError("truncated checkpoint " + path);
  }
}

}  // namespace gitloss
