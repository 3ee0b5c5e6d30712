#include "xtime/losses.hpp"

#include <cmath>
#include <numbers>

#include "xtime/error.hpp"

namespace xtime::losses {
namespace {

constexpr std::string_view kModule = "losses";

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(kModule, "length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

PenaltyBranch penalty_branch(double delta, const PenaltyContext& ctx) noexcept {
  if (ctx.expert_level == RarityLevel::Normal || ctx.point_level != ctx.expert_level) {
    return PenaltyBranch::Quadratic;
  }
  if (delta <= 0.0) return PenaltyBranch::UnderExp;
  switch (ctx.expert_level) {
    case RarityLevel::VeryRare: return PenaltyBranch::OverLogCosh;
    case RarityLevel::ExtremeRare: return PenaltyBranch::OverScaledExp;
    default: return PenaltyBranch::Quadratic;  // moderate over-prediction
  }
}

LossValueGrad rare_penalty(double delta, const PenaltyContext& ctx) noexcept {
  if (delta == 0.0) return {0.0, 0.0};
  switch (penalty_branch(delta, ctx)) {
    case PenaltyBranch::Quadratic:
      return {delta * delta, 2.0 * delta};
    case PenaltyBranch::UnderExp: {
      const double e = std::exp(-delta);
      return {std::expm1(-delta), -e};
    }
    case PenaltyBranch::OverLogCosh: {
      // log cosh d = |d| + log1p(e^{-2|d|}) - log 2, stable for large |d|.
      const double a = std::abs(delta);
      return {a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2, std::tanh(delta)};
    }
    case PenaltyBranch::OverScaledExp: {
      const double scale = 1.0 / static_cast<double>(ctx.horizon + 1);
      return {std::expm1(delta * scale), scale * std::exp(delta * scale)};
    }
  }
  return {delta * delta, 2.0 * delta};
}

VectorLoss rare_loss(std::span<const double> pred, std::span<const double> truth,
                     std::span<const RarityLevel> point_levels, RarityLevel expert_level,
                     std::size_t horizon) {
  check_lengths(pred.size(), truth.size());
  check_lengths(pred.size(), point_levels.size());
  if (pred.empty()) throw Error(kModule, "empty prediction window");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  VectorLoss out;
  out.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = rare_penalty(pred[i] - truth[i], {expert_level, point_levels[i], horizon});
    out.value += r.value;
    out.grad[i] = inv_n * r.d_dpred;
  }
  out.value *= inv_n;
  return out;
}

VectorLoss kd_loss(std::span<const double> student, std::span<const double> teacher) {
  check_lengths(student.size(), teacher.size());
  if (student.empty()) throw Error(kModule, "empty prediction window");
  const double inv_n = 1.0 / static_cast<double>(student.size());
  VectorLoss out;
  out.grad.resize(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double d = student[i] - teacher[i];
    const double temp = 1.0 + std::abs(d);
    const double scaled = d / temp;
    out.value += scaled * scaled;
    out.grad[i] = inv_n * 2.0 * d / (temp * temp * temp);
  }
  out.value *= inv_n;
  return out;
}

CombinedLoss combined_loss(std::span<const double> pred, std::span<const double> truth,
                           std::optional<std::span<const double>> teacher_pred,
                           std::span<const RarityLevel> point_levels, RarityLevel expert_level,
                           double beta, std::size_t horizon) {
  if (!(beta >= 0.0)) throw Error(kModule, "beta must be non-negative");
  auto rare = rare_loss(pred, truth, point_levels, expert_level, horizon);
  CombinedLoss out;
  out.rare = rare.value;
  out.value = rare.value;
  out.grad = std::move(rare.grad);
  if (expert_level == RarityLevel::Normal) return out;
  if (beta == 0.0) {
    // Reported for training curves only; contributes nothing.
    if (teacher_pred) out.kd = kd_loss(pred, *teacher_pred).value;
    return out;
  }
  if (!teacher_pred) {
    throw Error(kModule, "teacher prediction required for the " + std::string(to_string(expert_level)) +
                             " expert when beta > 0");
  }
  const auto kd = kd_loss(pred, *teacher_pred);
  out.kd = kd.value;
  out.value += beta * kd.value;
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += beta * kd.grad[i];
  return out;
}

}  // namespace xtime::losses
