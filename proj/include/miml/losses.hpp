#pragma once

#include <cstddef>

#include "miml/data.hpp"
#include "miml/matrix.hpp"
#include "miml/rng.hpp"

namespace miml {

// How the slack stream's output enters the privileged regularizer: per_label
// compares a length-C slack output against the per-label squared errors (the
// only reading consistent with privileged pooling, which is per category);
// scalar sums the slack outputs and compares against the summed loss.
enum class SlackMode { per_label, scalar };

// Joint objective value: total = base_term + lambda * pi_term, with exact
// gradients with respect to both streams' bag-level outputs.
struct LossValue {
  double total = 0.0;
  double base_term = 0.0;
  double pi_term = 0.0;
  Vector grad_F;      // d total / d F, length C
  Vector grad_Fstar;  // d total / d F*, length C (per_label/ranking) or 1 (scalar)
};

struct SquareLoss {
  double value = 0.0;
  Vector grad;       // -2 (Y - F)
  Vector per_label;  // (Y(k) - F(k))^2
};
SquareLoss square_loss(const LabelVector& labels, const Vector& bag_scores);

// ||Y - F||^2 + lambda * || ||Y - F||^2 - F* ||^2, in the chosen slack mode.
LossValue pi_square_objective(const LabelVector& labels, const Vector& bag_scores,
                              const Vector& slack_scores, double lambda, SlackMode mode);

struct RankingLoss {
  double value = 0.0;
  Vector grad;  // nonzero only at y (-S) and ybar (+S) when violated
  bool violated = false;
};

// Hinge on the margin between a relevant and an irrelevant label:
// S * (1 + F(ybar) - F(y)) when > 0, else 0. Violation is strict so the
// zero-loss boundary carries zero gradient.
RankingLoss ranking_loss(const Vector& bag_scores, std::size_t y, std::size_t ybar, double weight);

// WARP-style rank-estimate weight: S = sum_{i=1}^{floor(n/trials)} 1/i, where
// n counts the irrelevant labels and trials is how many draws it took to find
// a violator. A violator found immediately implies a badly ranked label and a
// large weight.
double warp_weight(std::size_t num_irrelevant, std::size_t trials_to_violation);

// L_r(F,y,ybar) + lambda * (L_r(F,y,ybar) - slack)^2 where slack is the slack
// stream's own margin hinge S * (1 + F*(ybar) - F*(y)) clamped below at 0.
LossValue pi_ranking_objective(const Vector& bag_scores, const Vector& slack_scores,
                               std::size_t y, std::size_t ybar, double lambda, double weight);

// One sampled (y, ybar) pair per SGD iteration. y is uniform over positive
// labels; irrelevant labels are drawn without replacement until one violates
// the margin, recording the trial count for warp_weight.
struct Quadruplet {
  bool skip = false;      // bag had no positive or no negative label
  bool violated = false;  // false: no violator exists, zero loss contribution
  std::size_t y = 0;
  std::size_t ybar = 0;
  std::size_t trials = 0;
};
Quadruplet sample_quadruplet(const LabelVector& labels, const Vector& bag_scores, Rng& rng);

}  // namespace miml
