#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gitloss/binary_io.hpp"
#include "gitloss/errors.hpp"
#include "gitloss/matrix.hpp"

namespace gitloss {

namespace detail {

inline void check_param_grads(std::span<const Matrix> params, std::span<const Matrix> grads,
                              const char* op) {
  if (params.size() != grads.size()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].same_shape(grads[k])) {
      throw DimensionError(std::string(op) + ": parameter " + std::to_string(k) + " " +
                           params[k].shape() + " vs gradient " + grads[k].shape());
    }
    if (!grads[k].all_finite()) {
      throw NumericError(std::string(op) + ": non-finite gradient for parameter " + std::to_string(k));
    }
  }
}

// Lazily sizes optimizer buffers to mirror the parameter shapes.
inline void ensure_buffers(std::vector<Matrix>& buffers, std::span<const Matrix> params,
                           const char* op) {
  if (buffers.empty()) {
    for (const auto& p : params) buffers.push_back(Matrix::zeros_like(p));
    return;
  }
  check_param_grads(params, buffers, op);
}

}  // namespace detail

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;

  void validate() const {
    if (!(lr > 0.0)) throw ParameterError("sgd: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("sgd: momentum must be in [0, 1)");
  }
};

struct SgdState {
  std::vector<Matrix> velocity;
};

// v <- momentum * v + g;  theta <- theta - lr * v
inline void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, const SgdConfig& cfg,
                     SgdState& state) {
  cfg.validate();
  detail::check_param_grads(params, grads, "sgd_step");
  detail::ensure_buffers(state.velocity, params, "sgd_step");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].values();
    auto g = grads[k].values();
    auto v = state.velocity[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i];
      theta[i] -= cfg.lr * v[i];
    }
  }
}

struct AdamConfig {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ParameterError("adam: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ParameterError("adam: betas must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ParameterError("adam: epsilon must be > 0");
  }
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Adam with bias correction.
inline void adam_step(std::span<Matrix> params, std::span<const Matrix> grads,
                      const AdamConfig& cfg, AdamState& state) {
  cfg.validate();
  detail::check_param_grads(params, grads, "adam_step");
  detail::ensure_buffers(state.first_moment, params, "adam_step");
  detail::ensure_buffers(state.second_moment, params, "adam_step");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].values();
    auto g = grads[k].values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

inline void write_adam_state(std::ostream& os, const AdamState& state) {
  binary::put_u64(os, state.step);
  binary::put_u64(os, state.first_moment.size());
  for (const auto& m : state.first_moment) binary::put_matrix(os, m);
  for (const auto& v : state.second_moment) binary::put_matrix(os, v);
}

inline AdamState read_adam_state(std::istream& is) {
  AdamState state;
  state.step = binary::get_u64(is);
  const auto n = binary::get_u64(is);
  if (n > 4096) throw FormatError("implausible optimizer buffer count");
  for (std::uint64_t k = 0; k < n; ++k) state.first_moment.push_back(binary::get_matrix(is));
  for (std::uint64_t k = 0; k < n; ++k) state.second_moment.push_back(binary::get_matrix(is));
  return state;
}

/// Step decay: the initial rate divided by `factor` once for every decay
/// epoch already reached.
struct LrSchedule {
  double initial = 0.1;
  double factor = 10.0;
  std::vector<std::size_t> decay_epochs;
};

inline double schedule_lr(const LrSchedule& schedule, std::size_t epoch) {
  const auto passed = std::count_if(schedule.decay_epochs.begin(), schedule.decay_epochs.end(),
                                    [epoch](std::size_t e) { return e <= epoch; });
  double lr = schedule.initial;
  for (std::ptrdiff_t k = 0; k < passed; ++k) lr /= schedule.factor;
  return lr;
}

}  // namespace gitloss
