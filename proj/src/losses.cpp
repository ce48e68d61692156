#include "miml/losses.hpp"

#include <stdexcept>
#include <string>

namespace miml {

SquareLoss square_loss(const LabelVector& labels, const Vector& bag_scores) {
  if (labels.size() != bag_scores.size())
    throw std::invalid_argument("square_loss: label / score length mismatch");
  SquareLoss out;
  const std::size_t c = labels.size();
  out.grad.assign(c, 0.0);
  out.per_label.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double r = static_cast<double>(labels[k]) - bag_scores[k];
    out.per_label[k] = r * r;
    out.grad[k] = -2.0 * r;
    out.value += r * r;
  }
  return out;
}

LossValue pi_square_objective(const LabelVector& labels, const Vector& bag_scores,
                              const Vector& slack_scores, double lambda, SlackMode mode) {
  if (lambda < 0.0) throw std::invalid_argument("pi_square_objective: lambda must be >= 0");
  const std::size_t c = labels.size();
  const std::size_t want = mode == SlackMode::scalar ? 1 : c;
  if (slack_scores.size() != want)
    throw std::invalid_argument("pi_square_objective: slack output length " +
                                std::to_string(slack_scores.size()) + " != expected " +
                                std::to_string(want));
  SquareLoss base = square_loss(labels, bag_scores);

  LossValue out;
  out.base_term = base.value;
  out.grad_F.assign(c, 0.0);
  out.grad_Fstar.assign(want, 0.0);

  if (mode == SlackMode::per_label) {
    for (std::size_t k = 0; k < c; ++k) {
      const double diff = base.per_label[k] - slack_scores[k];
      out.pi_term += diff * diff;
      out.grad_F[k] = base.grad[k] * (1.0 + 2.0 * lambda * diff);
      out.grad_Fstar[k] = -2.0 * lambda * diff;
    }
  } else {
    const double diff = base.value - slack_scores[0];
    out.pi_term = diff * diff;
    for (std::size_t k = 0; k < c; ++k)
      out.grad_F[k] = base.grad[k] * (1.0 + 2.0 * lambda * diff);
    out.grad_Fstar[0] = -2.0 * lambda * diff;
  }
  out.total = out.base_term + lambda * out.pi_term;
  return out;
}

RankingLoss ranking_loss(const Vector& bag_scores, std::size_t y, std::size_t ybar,
                         double weight) {
  if (y == ybar) throw std::invalid_argument("ranking_loss: y and ybar must differ");
  if (y >= bag_scores.size() || ybar >= bag_scores.size())
    throw std::invalid_argument("ranking_loss: label index out of range");
  RankingLoss out;
  out.grad.assign(bag_scores.size(), 0.0);
  const double margin = 1.0 + bag_scores[ybar] - bag_scores[y];
  if (margin > 0.0) {
    out.violated = true;
    out.value = weight * margin;
    out.grad[y] = -weight;
    out.grad[ybar] = weight;
  }
  return out;
}

double warp_weight(std::size_t num_irrelevant, std::size_t trials_to_violation) {
  if (trials_to_violation < 1 || trials_to_violation > num_irrelevant)
    throw std::invalid_argument("warp_weight: need 1 <= trials <= num_irrelevant");
  const std::size_t rank_estimate = num_irrelevant / trials_to_violation;
  double s = 0.0;
  for (std::size_t i = 1; i <= rank_estimate; ++i) s += 1.0 / static_cast<double>(i);
  return s;
}

LossValue pi_ranking_objective(const Vector& bag_scores, const Vector& slack_scores,
                               std::size_t y, std::size_t ybar, double lambda, double weight) {
  if (lambda < 0.0) throw std::invalid_argument("pi_ranking_objective: lambda must be >= 0");
  if (slack_scores.size() != bag_scores.size())
    throw std::invalid_argument("pi_ranking_objective: slack output length mismatch");
  RankingLoss base = ranking_loss(bag_scores, y, ybar, weight);

  // slack models the same margin quantity the base loss measures, clamped at
  // 0 so a comfortable slack margin predicts zero loss
  const double raw_slack = weight * (1.0 + slack_scores[ybar] - slack_scores[y]);
  const bool slack_active = raw_slack > 0.0;
  const double slack = slack_active ? raw_slack : 0.0;
  const double diff = base.value - slack;

  LossValue out;
  out.base_term = base.value;
  out.pi_term = diff * diff;
  out.total = out.base_term + lambda * out.pi_term;
  out.grad_F.assign(bag_scores.size(), 0.0);
  out.grad_Fstar.assign(slack_scores.size(), 0.0);
  const double base_scale = 1.0 + 2.0 * lambda * diff;
  for (std::size_t k = 0; k < bag_scores.size(); ++k) out.grad_F[k] = base.grad[k] * base_scale;
  if (slack_active) {
    out.grad_Fstar[ybar] = -2.0 * lambda * diff * weight;
    out.grad_Fstar[y] = 2.0 * lambda * diff * weight;
  }
  return out;
}

Quadruplet sample_quadruplet(const LabelVector& labels, const Vector& bag_scores, Rng& rng) {
  if (labels.size() != bag_scores.size())
    throw std::invalid_argument("sample_quadruplet: label / score length mismatch");
  std::vector<std::size_t> pos, neg;
  for (std::size_t k = 0; k < labels.size(); ++k) (labels[k] == 1 ? pos : neg).push_back(k);

  Quadruplet q;
  if (pos.empty() || neg.empty()) {
    q.skip = true;
    return q;
  }
  q.y = pos[rng.uniform_int(pos.size())];
  while (!neg.empty()) {
    const std::size_t pick = rng.uniform_int(neg.size());
    const std::size_t candidate = neg[pick];
    ++q.trials;
    if (1.0 + bag_scores[candidate] - bag_scores[q.y] > 0.0) {
      q.ybar = candidate;
      q.violated = true;
      return q;
    }
    neg[pick] = neg.back();
    neg.pop_back();
  }
  return q;  // violated == false: nothing to push down
}

}  // namespace miml
