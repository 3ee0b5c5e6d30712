#include "xtime/router.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xtime/error.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "router";

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

}  // namespace

std::vector<double> ExpertOutputs::column(std::size_t expert) const {
  std::vector<double> out(horizon);
  for (std::size_t h = 0; h < horizon; ++h) out[h] = at(h, expert);
  return out;
}

ExpertOutputs collect_expert_outputs(std::span<const ExpertModel> experts, std::span<const double> history) {
  if (experts.empty()) throw Error(kModule, "no experts");
  const std::size_t H = experts.front().horizon();
  ExpertOutputs out(H, experts.size());
  for (std::size_t e = 0; e < experts.size(); ++e) {
    if (experts[e].horizon() != H) throw Error(kModule, "experts disagree on the horizon");
    const auto y = expert_predict(experts[e], history);
    for (std::size_t h = 0; h < H; ++h) out.at(h, e) = y[h];
  }
  return out;
}

Router::Router(std::size_t horizon, std::size_t experts, std::size_t hidden, std::size_t k)
    : horizon_(horizon), experts_(experts), hidden_(hidden) {
  if (horizon == 0 || experts == 0) throw Error(kModule, "horizon and expert count must be positive");
  set_k(k);
  const std::size_t in = horizon * experts;
  params_.assign(hidden == 0 ? experts * in + experts : hidden * in + hidden + experts * hidden + experts, 0.0);
  shift_.assign(in, 0.0);
  scale_.assign(in, 1.0);
}

Router Router::random(std::size_t horizon, std::size_t experts, std::size_t hidden, std::size_t k,
                      std::uint64_t seed) {
  Router r(horizon, experts, hidden, k);
  Rng rng(seed, "router/init");
  const std::size_t in = horizon * experts;
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(in));
  if (hidden == 0) {
    for (double& v : r.params_) v = rng.uniform(-in_bound, in_bound);
  } else {
    const std::size_t first = hidden * in + hidden;
    const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < r.params_.size(); ++i) {
      const double bound = i < first ? in_bound : hid_bound;
      r.params_[i] = rng.uniform(-bound, bound);
    }
  }
  return r;
}

void Router::set_k(std::size_t k) {
  if (k < 1 || k > experts_) {
    throw Error(kModule, "k = " + std::to_string(k) + " outside 1.." + std::to_string(experts_));
  }
  k_ = k;
}

void Router::check_shape(const ExpertOutputs& outputs) const {
  if (outputs.horizon != horizon_ || outputs.experts != experts_ || outputs.values.size() != horizon_ * experts_) {
    throw Error(kModule, "expert outputs are " + std::to_string(outputs.horizon) + "x" +
                             std::to_string(outputs.experts) + ", gate expects " + std::to_string(horizon_) + "x" +
                             std::to_string(experts_));
  }
}

void Router::set_input_standardization(std::vector<double> shift, std::vector<double> scale) {
  const std::size_t D = horizon_ * experts_;
  if (shift.size() != D || scale.size() != D) throw Error(kModule, "standardization size does not match H*E");
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(kModule, "standardization scale must be positive");
  }
  shift_ = std::move(shift);
  scale_ = std::move(scale);
}

std::vector<double> Router::standardized(const ExpertOutputs& outputs) const {
  std::vector<double> z(outputs.values.size());
  for (std::size_t d = 0; d < z.size(); ++d) z[d] = (outputs.values[d] - shift_[d]) / scale_[d];
  return z;
}

std::vector<double> Router::logits(const ExpertOutputs& outputs) const {
  check_shape(outputs);
  const std::size_t D = horizon_ * experts_;
  const std::size_t E = experts_;
  const auto z = standardized(outputs);
  const double* x = z.data();
  std::vector<double> out(E);
  if (hidden_ == 0) {
    const double* w = params_.data();
    const double* b = w + E * D;
    for (std::size_t e = 0; e < E; ++e) {
      double acc = b[e];
      for (std::size_t d = 0; d < D; ++d) acc += w[e * D + d] * x[d];
      out[e] = acc;
    }
    return out;
  }
  const std::size_t W = hidden_;
  const double* w1 = params_.data();
  const double* b1 = w1 + W * D;
  const double* w2 = b1 + W;
  const double* b2 = w2 + E * W;
  std::vector<double> act(W);
  for (std::size_t j = 0; j < W; ++j) {
    double acc = b1[j];
    for (std::size_t d = 0; d < D; ++d) acc += w1[j * D + d] * x[d];
    act[j] = std::tanh(acc);
  }
  for (std::size_t e = 0; e < E; ++e) {
    double acc = b2[e];
    for (std::size_t j = 0; j < W; ++j) acc += w2[e * W + j] * act[j];
    out[e] = acc;
  }
  return out;
}

void Router::backward(const ExpertOutputs& outputs, std::span<const double> dlogits, std::span<double> grads) const {
  check_shape(outputs);
  if (dlogits.size() != experts_ || grads.size() != params_.size()) throw Error(kModule, "gradient shape mismatch");
  const std::size_t D = horizon_ * experts_;
  const std::size_t E = experts_;
  const auto z = standardized(outputs);
  const double* x = z.data();
  if (hidden_ == 0) {
    double* dw = grads.data();
    double* db = dw + E * D;
    for (std::size_t e = 0; e < E; ++e) {
      db[e] += dlogits[e];
      for (std::size_t d = 0; d < D; ++d) dw[e * D + d] += dlogits[e] * x[d];
    }
    return;
  }
  const std::size_t W = hidden_;
  const double* w1 = params_.data();
  const double* b1 = w1 + W * D;
  const double* w2 = b1 + W;
  double* dw1 = grads.data();
  double* db1 = dw1 + W * D;
  double* dw2 = db1 + W;
  double* db2 = dw2 + E * W;
  std::vector<double> act(W);
  for (std::size_t j = 0; j < W; ++j) {
    double acc = b1[j];
    for (std::size_t d = 0; d < D; ++d) acc += w1[j * D + d] * x[d];
    act[j] = std::tanh(acc);
  }
  std::vector<double> dact(W, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    db2[e] += dlogits[e];
    for (std::size_t j = 0; j < W; ++j) {
      dw2[e * W + j] += dlogits[e] * act[j];
      dact[j] += w2[e * W + j] * dlogits[e];
    }
  }
  for (std::size_t j = 0; j < W; ++j) {
    const double dz = dact[j] * (1.0 - act[j] * act[j]);
    db1[j] += dz;
    for (std::size_t d = 0; d < D; ++d) dw1[j * D + d] += dz * x[d];
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error(kModule, "softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

GateOutput gate_forward(const Router& router, const ExpertOutputs& outputs) {
  GateOutput g;
  g.logits = router.logits(outputs);
  g.alpha = softmax(g.logits);
  return g;
}

std::vector<double> select_topk(std::span<const double> alpha, std::size_t k) {
  if (k < 1 || k > alpha.size()) {
    throw Error(kModule, "k = " + std::to_string(k) + " outside 1.." + std::to_string(alpha.size()));
  }
  if (k == alpha.size()) return {alpha.begin(), alpha.end()};
  std::vector<std::size_t> idx(alpha.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
  std::vector<double> out(alpha.size(), 0.0);
  double kept = 0.0;
  double dropped = 0.0;
  for (std::size_t i = 0; i < k; ++i) kept += alpha[idx[i]];
  for (std::size_t i = k; i < idx.size(); ++i) dropped += alpha[idx[i]];
  if (!(kept > 0.0)) throw Error(kModule, "selected weights sum to zero");
  // Nothing dropped: already a valid selection, keep it bit-for-bit.
  const bool renormalize = dropped != 0.0;
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = renormalize ? alpha[idx[i]] / kept : alpha[idx[i]];
  return out;
}

std::vector<double> fuse(const ExpertOutputs& outputs, std::span<const double> weights) {
  if (weights.size() != outputs.experts || outputs.values.size() != outputs.horizon * outputs.experts) {
    throw Error(kModule, "fusion weights do not match the expert count");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw Error(kModule, "fusion weights must sum to 1");
  std::vector<double> out(outputs.horizon, 0.0);
  for (std::size_t e = 0; e < outputs.experts; ++e) {
    if (weights[e] == 0.0) continue;
    for (std::size_t h = 0; h < outputs.horizon; ++h) out[h] += weights[e] * outputs.at(h, e);
  }
  return out;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw Error(kModule, "label outside the expert range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_z = m + std::log(sum);
  CrossEntropy ce;
  ce.value = log_z - logits[label];
  ce.dlogits.resize(logits.size());
  for (std::size_t e = 0; e < logits.size(); ++e) ce.dlogits[e] = std::exp(logits[e] - log_z);
  ce.dlogits[label] -= 1.0;
  return ce;
}

RouterTraining train_router(std::span<const ExpertOutputs> inputs, std::span<const std::size_t> labels,
                            std::size_t horizon, std::size_t experts, const RouterConfig& config) {
  if (inputs.empty()) throw Error(kModule, "empty training set");
  if (inputs.size() != labels.size()) throw Error(kModule, "inputs and labels differ in length");
  if (config.batch_size == 0 || !(config.lr > 0.0)) throw Error(kModule, "invalid optimizer settings");

  std::vector<std::size_t> counts(experts, 0);
  for (std::size_t l : labels) {
    if (l >= experts) throw Error(kModule, "label outside the expert range");
    ++counts[l];
  }
  std::vector<double> class_weight(experts, 1.0);
  for (std::size_t e = 0; e < experts; ++e) {
    if (counts[e] == 0) spdlog::warn("router: no training windows of class {}", e);
    if (config.class_weights && counts[e] > 0) {
      class_weight[e] = static_cast<double>(labels.size()) / (static_cast<double>(experts) * counts[e]);
    }
  }

  RouterTraining result;
  result.router = Router::random(horizon, experts, config.hidden, config.k, config.seed);
  Router& router = result.router;
  if (config.standardize_inputs) {
    const std::size_t D = horizon * experts;
    std::vector<double> mean(D, 0.0), sq(D, 0.0);
    for (const auto& in : inputs) {
      if (in.values.size() != D) throw Error(kModule, "expert outputs do not match the gate shape");
      for (std::size_t d = 0; d < D; ++d) mean[d] += in.values[d];
    }
    for (double& m : mean) m /= static_cast<double>(inputs.size());
    for (const auto& in : inputs) {
      for (std::size_t d = 0; d < D; ++d) sq[d] += (in.values[d] - mean[d]) * (in.values[d] - mean[d]);
    }
    for (double& s : sq) {
      s = std::sqrt(s / static_cast<double>(inputs.size()));
      if (!(s > 1e-12)) s = 1.0;
    }
    router.set_input_standardization(std::move(mean), std::move(sq));
  }

  const auto epoch_stats = [&](std::size_t epoch) {
    RouterEpoch s;
    s.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto z = router.logits(inputs[i]);
      s.loss += cross_entropy(z, labels[i]).value;
      if (argmax(z) == labels[i]) ++correct;
    }
    s.loss /= static_cast<double>(inputs.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(inputs.size());
    return s;
  };

  result.curve.push_back(epoch_stats(0));
  OptimizerState opt(AdamConfig{.lr = config.lr}, router.parameters().size());
  std::vector<double> grads(router.parameters().size());
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed, "router/shuffle");

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t n = order[i];
        auto ce = cross_entropy(router.logits(inputs[n]), labels[n]);
        for (double& d : ce.dlogits) d *= class_weight[labels[n]];
        router.backward(inputs[n], ce.dlogits, grads);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& g : grads) g *= inv;
      adam_step(router.parameters(), grads, opt);
    }
    result.curve.push_back(epoch_stats(epoch));
    spdlog::debug("router: epoch {} loss={:.6g} acc={:.4f}", epoch, result.curve.back().loss,
                  result.curve.back().accuracy);
  }
  return result;
}

RouterTraining train_router(std::span<const ExpertModel> experts, std::span<const WindowSample> windows,
                            const RouterConfig& config) {
  if (windows.empty()) throw Error(kModule, "empty training set");
  if (experts.empty()) throw Error(kModule, "no experts");
  const std::size_t E = experts.size();
  std::vector<ExpertOutputs> inputs;
  std::vector<std::size_t> labels;
  inputs.reserve(windows.size());
  labels.reserve(windows.size());
  for (const auto& w : windows) {
    inputs.push_back(collect_expert_outputs(experts, w.history));
    labels.push_back(index_of(clamp_level(w.window_level, E)));
  }
  return train_router(inputs, labels, experts.front().horizon(), E, config);
}

RoutedPrediction route(const Router& router, const ExpertOutputs& outputs, std::optional<std::size_t> k) {
  const auto gate = gate_forward(router, outputs);
  RoutedPrediction r;
  r.alpha = gate.alpha;
  r.weights = select_topk(r.alpha, k.value_or(router.k()));
  r.forecast = fuse(outputs, r.weights);
  return r;
}

RoutedPrediction pipeline_predict(std::span<const ExpertModel> experts, const Router& router,
                                  std::span<const double> history, std::optional<std::size_t> k) {
  if (experts.size() != router.experts()) throw Error(kModule, "expert count does not match the gate");
  for (const auto& e : experts) {
    if (e.history() != history.size()) throw Error(kModule, "history length does not match the experts");
  }
  return route(router, collect_expert_outputs(experts, history), k);
}

}  // namespace xtime
