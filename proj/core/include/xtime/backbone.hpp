#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace xtime {

enum class BackboneKind : std::uint8_t { Linear, Mlp };

std::string_view to_string(BackboneKind kind);
BackboneKind backbone_from_string(std::string_view name);

struct BackboneShape {
  BackboneKind kind = BackboneKind::Linear;
  std::size_t history = 0;
  std::size_t horizon = 0;
  std::size_t hidden = 0;  // MLP only
};

/// Small per-band forecaster mapping a length-T history to H outputs.
///
/// Parameters live in one flat vector. Linear: W (H x T), b (H).
/// MLP: W1 (hidden x T), b1 (hidden), W2 (H x hidden), b2 (H), tanh hidden layer.
class Forecaster {
 public:
  Forecaster() = default;

  /// Zero-initialized parameters.
  explicit Forecaster(const BackboneShape& shape);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from `seed`.
  static Forecaster random(const BackboneShape& shape, std::uint64_t seed);

  const BackboneShape& shape() const noexcept { return shape_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  std::vector<double> forecast(std::span<const double> history) const;
  void forecast_into(std::span<const double> history, std::span<double> out) const;

  /// Accumulates dL/dparams into `grads` (size parameter_count()) given
  /// dL/doutput for the same history.
  void backward(std::span<const double> history, std::span<const double> output_grad,
                std::span<double> grads) const;
  std::vector<double> backward(std::span<const double> history, std::span<const double> output_grad) const;

 private:
  void check_history(std::span<const double> history) const;

  BackboneShape shape_;
  std::vector<double> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;

  OptimizerState() = default;
  OptimizerState(AdamConfig cfg, std::size_t parameter_count)
      : config(cfg), m(parameter_count, 0.0), v(parameter_count, 0.0) {}
};

/// One Adam update of `params` in place. Throws on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& opt);

inline void step(Forecaster& model, std::span<const double> grads, OptimizerState& opt) {
  adam_step(model.parameters(), grads, opt);
}

}  // namespace xtime
