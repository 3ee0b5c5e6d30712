#include "xtime/backbone.hpp"

#include <cmath>

#include "xtime/error.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

constexpr std::string_view kModule = "backbone";

std::size_t parameter_count_for(const BackboneShape& s) {
  switch (s.kind) {
    case BackboneKind::Linear: return s.horizon * s.history + s.horizon;
    case BackboneKind::Mlp: return s.hidden * s.history + s.hidden + s.horizon * s.hidden + s.horizon;
  }
  return 0;
}

void fill_uniform(std::span<double> out, double bound, Rng& rng) {
  for (double& v : out) v = rng.uniform(-bound, bound);
}

}  // namespace

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::Linear ? "linear" : "mlp";
}

BackboneKind backbone_from_string(std::string_view name) {
  if (name == "linear") return BackboneKind::Linear;
  if (name == "mlp") return BackboneKind::Mlp;
  throw Error(kModule, "unknown backbone kind '" + std::string(name) + "'");
}

Forecaster::Forecaster(const BackboneShape& shape) : shape_(shape) {
  if (shape.history == 0 || shape.horizon == 0) throw Error(kModule, "history and horizon must be positive");
  if (shape.kind == BackboneKind::Mlp && shape.hidden == 0) throw Error(kModule, "MLP hidden width must be positive");
  params_.assign(parameter_count_for(shape), 0.0);
}

Forecaster Forecaster::random(const BackboneShape& shape, std::uint64_t seed) {
  Forecaster f(shape);
  Rng rng(seed, "init");
  std::span<double> p = f.params_;
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(shape.history));
  if (shape.kind == BackboneKind::Linear) {
    fill_uniform(p, in_bound, rng);
  } else {
    const std::size_t first = shape.hidden * shape.history + shape.hidden;
    fill_uniform(p.first(first), in_bound, rng);
    fill_uniform(p.subspan(first), 1.0 / std::sqrt(static_cast<double>(shape.hidden)), rng);
  }
  return f;
}

void Forecaster::check_history(std::span<const double> history) const {
  if (history.size() != shape_.history) {
    throw Error(kModule, "history length " + std::to_string(history.size()) + " != configured " +
                             std::to_string(shape_.history));
  }
}

std::vector<double> Forecaster::forecast(std::span<const double> history) const {
  std::vector<double> out(shape_.horizon);
  forecast_into(history, out);
  return out;
}

void Forecaster::forecast_into(std::span<const double> history, std::span<double> out) const {
  check_history(history);
  if (out.size() != shape_.horizon) throw Error(kModule, "output buffer has wrong length");
  const std::size_t T = shape_.history;
  const std::size_t H = shape_.horizon;
  const double* p = params_.data();

  if (shape_.kind == BackboneKind::Linear) {
    const double* bias = p + H * T;
    for (std::size_t h = 0; h < H; ++h) {
      const double* row = p + h * T;
      double acc = bias[h];
      for (std::size_t t = 0; t < T; ++t) acc += row[t] * history[t];
      out[h] = acc;
    }
    return;
  }

  const std::size_t W = shape_.hidden;
  const double* w1 = p;
  const double* b1 = w1 + W * T;
  const double* w2 = b1 + W;
  const double* b2 = w2 + H * W;
  std::vector<double> act(W);
  for (std::size_t j = 0; j < W; ++j) {
    double acc = b1[j];
    for (std::size_t t = 0; t < T; ++t) acc += w1[j * T + t] * history[t];
    act[j] = std::tanh(acc);
  }
  for (std::size_t h = 0; h < H; ++h) {
    double acc = b2[h];
    for (std::size_t j = 0; j < W; ++j) acc += w2[h * W + j] * act[j];
    out[h] = acc;
  }
}

void Forecaster::backward(std::span<const double> history, std::span<const double> output_grad,
                          std::span<double> grads) const {
  check_history(history);
  if (output_grad.size() != shape_.horizon) throw Error(kModule, "output gradient has wrong length");
  if (grads.size() != params_.size()) throw Error(kModule, "gradient buffer has wrong length");
  const std::size_t T = shape_.history;
  const std::size_t H = shape_.horizon;

  if (shape_.kind == BackboneKind::Linear) {
    double* dw = grads.data();
    double* db = dw + H * T;
    for (std::size_t h = 0; h < H; ++h) {
      const double g = output_grad[h];
      if (g == 0.0) continue;
      for (std::size_t t = 0; t < T; ++t) dw[h * T + t] += g * history[t];
      db[h] += g;
    }
    return;
  }

  const std::size_t W = shape_.hidden;
  const double* w1 = params_.data();
  const double* b1 = w1 + W * T;
  const double* w2 = b1 + W;
  double* dw1 = grads.data();
  double* db1 = dw1 + W * T;
  double* dw2 = db1 + W;
  double* db2 = dw2 + H * W;

  std::vector<double> act(W);
  for (std::size_t j = 0; j < W; ++j) {
    double acc = b1[j];
    for (std::size_t t = 0; t < T; ++t) acc += w1[j * T + t] * history[t];
    act[j] = std::tanh(acc);
  }
  std::vector<double> dact(W, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    const double g = output_grad[h];
    db2[h] += g;
    for (std::size_t j = 0; j < W; ++j) {
      dw2[h * W + j] += g * act[j];
      dact[j] += w2[h * W + j] * g;
    }
  }
  for (std::size_t j = 0; j < W; ++j) {
    const double dz = dact[j] * (1.0 - act[j] * act[j]);
    db1[j] += dz;
    for (std::size_t t = 0; t < T; ++t) dw1[j * T + t] += dz * history[t];
  }
}

std::vector<double> Forecaster::backward(std::span<const double> history, std::span<const double> output_grad) const {
  std::vector<double> grads(params_.size(), 0.0);
  backward(history, output_grad, grads);
  return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& opt) {
  if (grads.size() != params.size() || opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw Error(kModule, "optimizer shape mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error(kModule, "non-finite gradient at parameter " + std::to_string(i) + "; training aborted");
    }
  }
  const AdamConfig& c = opt.config;
  opt.steps += 1;
  const double t = static_cast<double>(opt.steps);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    opt.m[i] = c.beta1 * opt.m[i] + (1.0 - c.beta1) * g;
    opt.v[i] = c.beta2 * opt.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = opt.m[i] / bias1;
    const double v_hat = opt.v[i] / bias2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace xtime
