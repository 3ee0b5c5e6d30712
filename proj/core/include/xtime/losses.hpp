#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xtime/dataset.hpp"

namespace xtime::losses {

struct PenaltyContext {
  RarityLevel expert_level = RarityLevel::Normal;
  RarityLevel point_level = RarityLevel::Normal;
  std::size_t horizon = 1;
};

struct LossValueGrad {
  double value = 0.0;
  double d_dpred = 0.0;
};

/// Which closed form a (context, delta) pair evaluates.
enum class PenaltyBranch { Quadratic, UnderExp, OverLogCosh, OverScaledExp };

PenaltyBranch penalty_branch(double delta, const PenaltyContext& ctx) noexcept;

/// Hierarchical rare penalty f(delta), delta = prediction - truth, with its
/// derivative in delta. The expert's level selects the family; the rare
/// branches apply only to points of exactly that level. At delta = 0 the
/// derivative is 0.
LossValueGrad rare_penalty(double delta, const PenaltyContext& ctx) noexcept;

struct VectorLoss {
  double value = 0.0;
  std::vector<double> grad;  // d value / d prediction
};

/// Mean penalty over the window's points.
VectorLoss rare_loss(std::span<const double> pred, std::span<const double> truth,
                     std::span<const RarityLevel> point_levels, RarityLevel expert_level,
                     std::size_t horizon);

/// Adaptive-temperature distillation: mean of (d / (1 + |d|))^2 with
/// d = student - teacher. Gradient is taken w.r.t. the student only.
VectorLoss kd_loss(std::span<const double> student, std::span<const double> teacher);

struct CombinedLoss {
  double value = 0.0;
  double rare = 0.0;
  double kd = 0.0;
  std::vector<double> grad;
};

/// L = L_rare + beta * L_KD. The KD term never applies to the Normal
/// expert; for other experts a teacher prediction is required when beta > 0.
CombinedLoss combined_loss(std::span<const double> pred, std::span<const double> truth,
                           std::optional<std::span<const double>> teacher_pred,
                           std::span<const RarityLevel> point_levels, RarityLevel expert_level,
                           double beta, std::size_t horizon);

}  // namespace xtime::losses
