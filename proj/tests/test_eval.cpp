#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "miml/errors.hpp"
#include "miml/eval.hpp"
#include "test_util.hpp"

using namespace miml;
using doctest::Approx;

namespace {

// quadratic-time oracle straight from the definition: the precision at each
// positive's rank, averaged over positives; same tie rule (original index)
double brute_force_ap(const Vector& s, const std::vector<int>& labels) {
  const std::size_t n = s.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    rank[i] = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (s[j] > s[i]) ++rank[i];
      if (s[j] == s[i] && j < i) ++rank[i];
    }
  }
  double ap = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 1) continue;
    ++npos;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j] == 1 && rank[j] <= rank[i]) ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank[i]);
  }
  return ap / static_cast<double>(npos);
}

TrainedModel identity_model(std::size_t d) {
  TrainedModel m;
  m.loss_spec.layer_pairs = 0;
  m.loss_spec.hidden_width = 0;
  m.loss_spec.input_dim = d;
  m.loss_spec.num_labels = d;
  m.loss_params.classify.weights = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) m.loss_params.classify.weights(i, i) = 1.0;
  m.loss_params.classify.bias.assign(d, 0.0);
  return m;
}

}  // namespace

TEST_CASE("average_precision closed forms") {
  SUBCASE("perfect ranking with two positives") {
    CHECK(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, -1, -1}) == 1.0);
  }
  SUBCASE("single positive ranked last") {
    CHECK(average_precision({0.9, 0.8, 0.7, 0.1}, {-1, -1, -1, 1}) == Approx(0.25));
    CHECK(average_precision({0.9, 0.1}, {-1, 1}) == Approx(0.5));
  }
  SUBCASE("no positives is an error") {
    CHECK_THROWS_AS(average_precision({0.5}, {-1}), std::invalid_argument);
  }
  SUBCASE("ties broken by original index") {
    // identical scores: order of appearance decides; positive first wins
    CHECK(average_precision({0.5, 0.5}, {1, -1}) == 1.0);
    CHECK(average_precision({0.5, 0.5}, {-1, 1}) == Approx(0.5));
  }
}

TEST_CASE("average_precision equals the brute-force oracle") {
  Rng rng(61);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.uniform_int(12);
    Vector s(n);
    std::vector<int> labels(n, -1);
    const bool discrete = rng.uniform() < 0.4;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = discrete ? static_cast<double>(rng.uniform_int(4)) : rng.normal();
      labels[i] = rng.uniform() < 0.4 ? 1 : -1;
    }
    labels[rng.uniform_int(n)] = 1;
    CHECK(std::fabs(average_precision(s, labels) - brute_force_ap(s, labels)) < 1e-12);
  }
}

TEST_CASE("average_precision invariants") {
  Rng rng(62);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 3 + rng.uniform_int(9);
    Vector s(n);
    std::vector<int> labels(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      labels[i] = rng.uniform() < 0.5 ? 1 : -1;
    }
    labels[rng.uniform_int(n)] = 1;
    const double ap = average_precision(s, labels);

    // invariant under strictly monotone transformations of the scores
    Vector warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::atan(2.0 * s[i]) + 3.0;
    CHECK(average_precision(warped, labels) == ap);

    // ap is 1 iff every positive outranks every negative
    double min_pos = 1e300, max_neg = -1e300;
    for (std::size_t i = 0; i < n; ++i)
      (labels[i] == 1 ? min_pos : max_neg) =
          labels[i] == 1 ? std::min(min_pos, s[i]) : std::max(max_neg, s[i]);
    const bool separated = min_pos > max_neg;
    CHECK((ap == 1.0) == separated);
  }
}

TEST_CASE("predict applies the test-time rule") {
  TrainedModel model = identity_model(3);
  Bag bag;
  bag.instances = Matrix::from_rows({{0.1, 0.9, 0.3}, {0.7, 0.2, 0.4}});
  bag.labels.values = {1, 1, -1};

  SUBCASE("identity network takes per-label max of raw features") {
    CHECK(predict(model, bag) == Vector{0.7, 0.9, 0.4});
  }

  SUBCASE("invariant to instance permutation") {
    Bag flipped = bag;
    Matrix swapped = Matrix::from_rows({{0.7, 0.2, 0.4}, {0.1, 0.9, 0.3}});
    flipped.instances = swapped;
    CHECK(predict(model, flipped) == predict(model, bag));
  }

  SUBCASE("dimension mismatch is reported") {
    Bag wrong;
    wrong.instances = Matrix(1, 5, 0.0);
    CHECK_THROWS_AS(predict(model, wrong), DataError);
  }
}

TEST_CASE("evaluate ignores privileged data entirely") {
  SynthConfig sc;
  sc.num_labels = 3;
  sc.feature_dim = 6;
  sc.num_bags = 20;
  sc.noise_sigma = 0.4;
  sc.pi = PiKind::positive_sets;
  SyntheticData synth = generate_synthetic(sc, 71);

  TrainConfig tc;
  tc.hidden_width = 8;
  tc.lr = 1e-3;
  tc.epochs_per_phase = 3;
  tc.seed = 71;
  TrainedModel model = alternate_train(strip_pi(synth.dataset), tc);

  MetricsReport with_pi = evaluate(model, synth.dataset);
  MetricsReport without_pi = evaluate(model, strip_pi(synth.dataset));
  CHECK(with_pi.mean_ap == without_pi.mean_ap);
  CHECK(with_pi.scores == without_pi.scores);
}

TEST_CASE("evaluate report structure") {
  SynthConfig sc;
  sc.num_labels = 4;
  sc.feature_dim = 5;
  sc.num_bags = 25;
  sc.noise_sigma = 0.5;
  SyntheticData synth = generate_synthetic(sc, 72);
  TrainedModel model = identity_model(5);
  model.loss_spec.num_labels = 4;
  model.loss_params.classify.weights = Matrix(5, 4, 0.25);
  model.loss_params.classify.bias.assign(4, 0.0);

  MetricsReport rep = evaluate(model, synth.dataset);
  CHECK(rep.num_bags == 25);
  CHECK(rep.num_classes == 4);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    if (!rep.class_defined[k]) continue;
    CHECK(rep.per_class_ap[k] >= 0.0);
    CHECK(rep.per_class_ap[k] <= 1.0);
    sum += rep.per_class_ap[k];
    ++defined;
  }
  CHECK(rep.mean_ap == Approx(sum / defined).epsilon(1e-12));

  // bag order leaves the report unchanged
  std::vector<std::size_t> rev(25);
  for (std::size_t i = 0; i < 25; ++i) rev[i] = 24 - i;
  MetricsReport rep2 = evaluate(model, subset_dataset(synth.dataset, rev));
  CHECK(rep2.mean_ap == rep.mean_ap);
  for (std::size_t k = 0; k < 4; ++k)
    if (rep.class_defined[k]) CHECK(rep2.per_class_ap[k] == rep.per_class_ap[k]);

  // parallel evaluation matches the serial path exactly
  MetricsReport rep4 = evaluate(model, synth.dataset, 4);
  CHECK(rep4.scores == rep.scores);
  CHECK(rep4.mean_ap == rep.mean_ap);
}

TEST_CASE("single-bag dataset gives AP 1 on defined classes") {
  SynthConfig sc;
  sc.num_labels = 2;
  sc.feature_dim = 3;
  sc.num_bags = 1;
  SyntheticData synth = generate_synthetic(sc, 73);
  TrainedModel model = identity_model(3);
  model.loss_spec.num_labels = 2;
  model.loss_params.classify.weights = Matrix(3, 2, 0.5);
  model.loss_params.classify.bias.assign(2, 0.0);
  MetricsReport rep = evaluate(model, synth.dataset);
  for (std::size_t k = 0; k < 2; ++k)
    if (rep.class_defined[k]) CHECK(rep.per_class_ap[k] == 1.0);
}

TEST_CASE("metrics json and scores csv emission") {
  testutil::TempDir tmp("metrics");
  SynthConfig sc;
  sc.num_labels = 2;
  sc.feature_dim = 3;
  sc.num_bags = 5;
  SyntheticData synth = generate_synthetic(sc, 74);
  TrainedModel model = identity_model(3);
  model.loss_spec.num_labels = 2;
  model.loss_params.classify.weights = Matrix(3, 2, 0.5);
  model.loss_params.classify.bias.assign(2, 0.0);
  MetricsReport rep = evaluate(model, synth.dataset);

  write_metrics_json(rep, tmp.path("m.json"));
  const std::string text = testutil::read_file(tmp.path("m.json"));
  CHECK(text.find("mean_ap") != std::string::npos);
  CHECK(text.find("per_class_ap") != std::string::npos);

  write_scores_csv(rep, synth.dataset, tmp.path("s.csv"));
  const std::string csv = testutil::read_file(tmp.path("s.csv"));
  CHECK(csv.find("id,score_0,score_1\n") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 5 bags
}

TEST_CASE("evaluate rejects an empty dataset") {
  Dataset empty;
  empty.num_labels = 2;
  empty.feature_dim = 3;
  CHECK_THROWS_AS(evaluate(identity_model(3), empty), DataError);
}
