#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xtime/dataset.hpp"
#include "xtime/expert.hpp"

namespace xtime {

/// Stacked expert forecasts, H rows by E columns, row-major.
struct ExpertOutputs {
  std::size_t horizon = 0;
  std::size_t experts = 0;
  std::vector<double> values;

  ExpertOutputs() = default;
  ExpertOutputs(std::size_t h, std::size_t e) : horizon(h), experts(e), values(h * e, 0.0) {}

  double& at(std::size_t step, std::size_t expert) { return values[step * experts + expert]; }
  double at(std::size_t step, std::size_t expert) const { return values[step * experts + expert]; }
  std::vector<double> column(std::size_t expert) const;
};

ExpertOutputs collect_expert_outputs(std::span<const ExpertModel> experts, std::span<const double> history);

struct RouterConfig {
  std::size_t k = 2;
  std::size_t hidden = 32;  // 0 = single linear layer
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool class_weights = false;
  bool standardize_inputs = true;
};

/// Gating network over flattened expert outputs:
/// logits = W2 tanh(W1 z + b1) + b2, or W z + b when hidden == 0,
/// where z = (x - shift) / scale per input feature.
class Router {
 public:
  Router() = default;
  Router(std::size_t horizon, std::size_t experts, std::size_t hidden, std::size_t k);

  static Router random(std::size_t horizon, std::size_t experts, std::size_t hidden, std::size_t k,
                       std::uint64_t seed);

  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t experts() const noexcept { return experts_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t k() const noexcept { return k_; }
  void set_k(std::size_t k);

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  std::span<const double> input_shift() const noexcept { return shift_; }
  std::span<const double> input_scale() const noexcept { return scale_; }
  /// Scales must be positive; sizes must equal H*E.
  void set_input_standardization(std::vector<double> shift, std::vector<double> scale);

  std::vector<double> logits(const ExpertOutputs& outputs) const;
  /// Accumulates d loss / d params given d loss / d logits.
  void backward(const ExpertOutputs& outputs, std::span<const double> dlogits, std::span<double> grads) const;

 private:
  void check_shape(const ExpertOutputs& outputs) const;
  std::vector<double> standardized(const ExpertOutputs& outputs) const;

  std::size_t horizon_ = 0;
  std::size_t experts_ = 0;
  std::size_t hidden_ = 0;
  std::size_t k_ = 1;
  std::vector<double> params_;
  std::vector<double> shift_;
  std::vector<double> scale_;
};

std::vector<double> softmax(std::span<const double> logits);

struct GateOutput {
  std::vector<double> logits;
  std::vector<double> alpha;
};

GateOutput gate_forward(const Router& router, const ExpertOutputs& outputs);

/// Keeps the k largest weights (ties to the lower index), renormalized to
/// sum to 1; all other weights are exactly 0.
std::vector<double> select_topk(std::span<const double> alpha, std::size_t k);

/// Per-step weighted sum over experts.
std::vector<double> fuse(const ExpertOutputs& outputs, std::span<const double> weights);

struct CrossEntropy {
  double value = 0.0;
  std::vector<double> dlogits;
};

/// -log softmax(logits)[label], with gradient softmax - onehot.
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label);

struct RouterEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct RouterTraining {
  Router router;
  std::vector<RouterEpoch> curve;  // epoch 0 is the untrained gate
};

/// Fits the gate with full-softmax cross-entropy against each window's
/// (clamped) rarity level. Experts are only read. With standardize_inputs,
/// the input shift/scale are the per-feature mean/std of the training inputs.
RouterTraining train_router(std::span<const ExpertModel> experts, std::span<const WindowSample> windows,
                            const RouterConfig& config);

/// Same, on precomputed expert outputs and class labels.
RouterTraining train_router(std::span<const ExpertOutputs> inputs, std::span<const std::size_t> labels,
                            std::size_t horizon, std::size_t experts, const RouterConfig& config);

struct RoutedPrediction {
  std::vector<double> forecast;
  std::vector<double> alpha;
  std::vector<double> weights;  // after top-k
};

RoutedPrediction route(const Router& router, const ExpertOutputs& outputs,
                       std::optional<std::size_t> k = std::nullopt);

/// Runs every expert, gates, keeps the top k and fuses.
RoutedPrediction pipeline_predict(std::span<const ExpertModel> experts, const Router& router,
                                  std::span<const double> history,
                                  std::optional<std::size_t> k = std::nullopt);

}  // namespace xtime
