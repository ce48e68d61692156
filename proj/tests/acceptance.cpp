// Acceptance suite: one line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "miml/data.hpp"
#include "miml/errors.hpp"
#include "miml/eval.hpp"
#include "miml/graph.hpp"
#include "miml/losses.hpp"
#include "miml/network.hpp"
#include "miml/training.hpp"

using namespace miml;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s  (%s)\n", pass ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  fs::path dir = fs::temp_directory_path() / "miml_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Dataset slice(const Dataset& ds, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return subset_dataset(ds, idx);
}

// definition-level AP oracle, quadratic time, same original-index tie rule
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

// ---------------------------------------------------------------------------

void criterion_1_gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport rep = gradcheck(2024);
  const double secs = elapsed_s(t0);
  char detail[128];
  std::snprintf(detail, sizeof(detail), "%zu combinations, worst rel err %.3e, %.1f s",
                rep.combos.size(), rep.worst, secs);
  report(1, "gradient oracle across all 16 combinations",
         rep.combos.size() == 16 && rep.all_pass && rep.worst < 1e-5 && secs < 60.0, detail);
}

void criterion_2_reduction_identity(const fs::path& dir) {
  SynthConfig sc;
  sc.num_labels = 3;
  sc.feature_dim = 8;
  sc.num_bags = 30;
  sc.noise_sigma = 0.4;
  sc.background_fraction = 0.2;
  sc.pi = PiKind::positive_sets;
  SyntheticData synth = generate_synthetic(sc, 2);

  TrainConfig tc;
  tc.hidden_width = 16;
  tc.lr = 1e-3;
  tc.epochs_per_phase = 5;
  tc.outer_rounds = 2;
  tc.phase_tol = 0.0;
  tc.seed = 2;
  tc.lambda = 0.0;

  Trainer with_pi(synth.dataset, tc);
  with_pi.run();
  Trainer without_pi(strip_pi(synth.dataset), tc);
  without_pi.run();
  save_checkpoint(with_pi.state(), (dir / "r2_a.json").string());
  save_checkpoint(without_pi.state(), (dir / "r2_b.json").string());
  const bool bytes_equal = read_file((dir / "r2_a.json").string()) ==
                           read_file((dir / "r2_b.json").string());
  const bool no_slack = !with_pi.state().model.slack_params.has_value();

  // at lambda = 0 the slack gradient vanishes identically
  Rng rng(22);
  bool slack_grads_zero = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t c = 2 + rng.uniform_int(3);
    LabelVector y;
    y.values.assign(c, -1);
    y.values[rng.uniform_int(c)] = 1;
    Vector f(c), fstar(c);
    for (double& v : f) v = rng.normal();
    for (double& v : fstar) v = rng.normal();
    LossValue sq = pi_square_objective(y, f, fstar, 0.0, SlackMode::per_label);
    for (double g : sq.grad_Fstar) slack_grads_zero &= (g == 0.0);
    slack_grads_zero &= (sq.total == square_loss(y, f).value);
    const std::size_t yy = rng.uniform_int(c);
    const std::size_t yb = (yy + 1 + rng.uniform_int(c - 1)) % c;
    LossValue rk = pi_ranking_objective(f, fstar, yy, yb, 0.0, 1.5);
    for (double g : rk.grad_Fstar) slack_grads_zero &= (g == 0.0);
  }
  report(2, "lambda = 0 reduces to single-stream training",
         bytes_equal && no_slack && slack_grads_zero,
         std::string("checkpoints byte-identical: ") + (bytes_equal ? "yes" : "no") +
             ", slack gradients all zero: " + (slack_grads_zero ? "yes" : "no"));
}

void criterion_3_pi_pooling() {
  bool ok = true;
  Matrix scores = Matrix::from_rows({{0.2, 0.1}, {0.6, -0.3}, {0.4, 0.5}});

  {  // positive branch mean, negative branch max
    PoolRecord rec;
    PositiveSetsPI sets;
    sets.sets = {{0, 2}, {}};
    Vector pooled = pool_pi(scores, sets, LabelVector{{1, -1}}, rec);
    ok &= std::fabs(pooled[0] - 0.3) < 1e-15 && pooled[1] == 0.5;
  }
  {  // all-negative labels collapse to global max pooling
    PoolRecord a, b;
    PositiveSetsPI sets;
    sets.sets = {{}, {}};
    ok &= pool_pi(scores, sets, LabelVector{{-1, -1}}, a) == pool_max(scores, b);
  }
  {  // singleton positive set collapses to that instance's score
    PoolRecord rec;
    PositiveSetsPI sets;
    sets.sets = {{1}, {}};
    ok &= pool_pi(scores, sets, LabelVector{{1, -1}}, rec)[0] == 0.6;
  }
  report(3, "privileged pooling matches hand arithmetic", ok, "3 analytic cases exact");
}

void criterion_4_separable_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.num_labels = 5;
  sc.feature_dim = 16;
  sc.num_bags = 250;  // 200 train + 50 held out
  sc.min_instances = 5;
  sc.max_instances = 15;
  sc.separation = 4.0;
  sc.noise_sigma = 0.0;
  SyntheticData synth = generate_synthetic(sc, 1234);
  Dataset train = slice(synth.dataset, 0, 200);
  Dataset held_out = slice(synth.dataset, 200, 250);

  TrainConfig tc;
  tc.hidden_width = 64;
  tc.lr = 1e-3;
  tc.momentum = 0.9;
  tc.epochs_per_phase = 100;
  tc.outer_rounds = 1;
  tc.phase_tol = 1e-4;
  tc.seed = 1234;
  TrainedModel model = alternate_train(train, tc);
  const double map = evaluate(model, held_out).mean_ap;
  const double secs = elapsed_s(t0);
  char detail[128];
  std::snprintf(detail, sizeof(detail), "held-out mAP %.4f after %zu epochs, %.1f s", map,
                model.history.size(), secs);
  report(4, "separable recovery reaches mAP >= 0.95",
         map >= 0.95 && model.history.size() <= 100 && secs < 120.0, detail);
}

void criterion_5_pi_benefit() {
  const double grid[] = {0.01, 0.1, 0.5, 1.0, 10.0};
  int wins = 0;
  double mean_gain = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {101, 202, 303, 404, 505}) {
    SynthConfig sc;
    sc.num_labels = 4;
    sc.feature_dim = 12;
    sc.num_bags = 425;  // 150 train / 100 validation / 175 test
    sc.min_instances = 5;
    sc.max_instances = 12;
    sc.separation = 4.0;
    sc.noise_sigma = 1.8;
    sc.background_fraction = 0.2;  // background instances confuse max pooling
    sc.pi = PiKind::positive_sets;  // oracle positive sets
    SyntheticData synth = generate_synthetic(sc, seed);
    Dataset train = slice(synth.dataset, 0, 150);
    Dataset val = slice(synth.dataset, 150, 250);
    Dataset test = slice(synth.dataset, 250, 425);

    auto run = [&](double lambda) -> std::pair<double, double> {
      TrainConfig tc;
      tc.hidden_width = 32;
      tc.lr = 1e-4;
      tc.momentum = 0.9;
      tc.grad_clip = 10.0;
      tc.epochs_per_phase = 60;
      tc.outer_rounds = 3;
      tc.phase_tol = 0.0;
      tc.seed = seed;
      tc.lambda = lambda;
      try {
        TrainedModel m = alternate_train(lambda > 0.0 ? train : strip_pi(train), tc);
        return {evaluate(m, val).mean_ap, evaluate(m, test).mean_ap};
      } catch (const NumericError&) {
        return {-1.0, -1.0};  // diverged candidate drops out of the sweep
      }
    };

    const auto [val_base, test_base] = run(0.0);
    double best_val = -2.0, best_test = -2.0;
    for (double lambda : grid) {
      const auto [v, t] = run(lambda);
      if (v > best_val) {
        best_val = v;
        best_test = t;
      }
    }
    const double gain = best_test - test_base;
    mean_gain += gain / 5.0;
    wins += (best_test >= test_base);
    char buf[48];
    std::snprintf(buf, sizeof(buf), " %+.4f", gain);
    per_seed += buf;
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "wins %d/5, mean gain %+.4f, per-seed gains%s", wins,
                mean_gain, per_seed.c_str());
  report(5, "privileged information helps on noisy data", wins >= 4 && mean_gain > 0.0, detail);
}

void criterion_6_graph_identities() {
  // (a) k = 1 graph stream is bit-equal to the flat stream with shared weights
  Rng rng(66);
  bool k1_exact = true;
  for (int t = 0; t < 10; ++t) {
    LayerSpec flat;
    flat.layer_pairs = 1;
    flat.hidden_width = 12;
    flat.input_dim = 5;
    flat.num_labels = 3;
    NetworkParams p = init_params(flat, rng.next_u64());
    LayerSpec graph = flat;
    graph.input_mode = InputMode::graph;
    graph.graph_k = 1;
    Matrix inst(4, 5);
    for (double& v : inst.data) v = rng.normal();
    ForwardTrace tf = forward_instances(p, flat, inst);
    ForwardTrace tg =
        forward_instances(p, graph, neighborhood_tensor(inst, knn_graph(inst, 1)));
    k1_exact &= (tf.scores == tg.scores);
  }

  // (b) graph-mode gradient checks pass
  GradcheckReport rep = gradcheck(2024);
  bool graph_gradcheck = true;
  for (const GradcheckCombo& c : rep.combos)
    if (c.input_mode == InputMode::graph) graph_gradcheck &= c.pass;

  // (c) neighbor slots equal brute-force pairwise distances on 50 random bags
  bool slots_ok = true;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 2 + rng.uniform_int(9);
    const std::size_t d = 1 + rng.uniform_int(5);
    Matrix x(m, d);
    for (double& v : x.data) v = rng.normal();
    const std::size_t k = 1 + rng.uniform_int(m);
    NeighborGraph g = knn_graph(x, k);
    for (std::size_t j = 0; j < m && slots_ok; ++j) {
      auto d2 = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) s += (x(a, q) - x(b, q)) * (x(a, q) - x(b, q));
        return s;
      };
      std::vector<std::size_t> others;
      for (std::size_t o = 0; o < m; ++o)
        if (o != j) others.push_back(o);
      std::stable_sort(others.begin(), others.end(),
                       [&](std::size_t a, std::size_t b) { return d2(j, a) < d2(j, b); });
      slots_ok &= g.at(j, 0) == static_cast<int>(j);
      for (std::size_t s = 1; s < k; ++s)
        slots_ok &= g.at(j, s) == static_cast<int>(others[s - 1]);
    }
  }
  report(6, "graph-mode identities", k1_exact && graph_gradcheck && slots_ok,
         std::string("k=1 bit-equal: ") + (k1_exact ? "yes" : "no") +
             ", graph gradcheck: " + (graph_gradcheck ? "pass" : "fail") +
             ", 50 bags of neighbor slots verified: " + (slots_ok ? "yes" : "no"));
}

void criterion_7_ranking_machinery() {
  bool ok = true;
  // hinge hand cases
  {
    RankingLoss rl = ranking_loss(Vector{0.3, 0.1}, 0, 1, 1.0);
    ok &= rl.violated && std::fabs(rl.value - 0.8) < 1e-15 && rl.grad[0] == -1.0 &&
          rl.grad[1] == 1.0;
    ok &= !ranking_loss(Vector{2.0, 0.0}, 0, 1, 1.0).violated;
    ok &= ranking_loss(Vector{1.0, 0.0}, 0, 1, 3.0).value == 0.0;  // boundary
  }
  // warp closed forms
  ok &= warp_weight(4, 4) == 1.0;
  ok &= std::fabs(warp_weight(4, 1) - (1.0 + 0.5 + 1.0 / 3.0 + 0.25)) < 1e-15;
  // sampler polarity invariants over 10^4 draws
  Rng rng(77);
  LabelVector labels{{1, -1, 1, -1, -1}};
  Vector f{0.2, 0.1, -0.3, 0.4, 0.0};
  for (int t = 0; t < 10000 && ok; ++t) {
    Quadruplet q = sample_quadruplet(labels, f, rng);
    ok &= !q.skip && labels[q.y] == 1;
    if (q.violated) ok &= labels[q.ybar] == -1;
    ok &= q.trials >= 1 && q.trials <= labels.negative_count();
  }
  report(7, "ranking loss machinery", ok, "hinge cases, warp sums, 10000 sampler draws");
}

void criterion_8_metric_oracle() {
  Rng rng(88);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.uniform_int(20);
    Vector s(n);
    std::vector<int> labels(n, -1);
    const bool discrete = rng.uniform() < 0.3;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = discrete ? static_cast<double>(rng.uniform_int(5)) : rng.normal();
      labels[i] = rng.uniform() < 0.4 ? 1 : -1;
    }
    labels[rng.uniform_int(n)] = 1;
    worst = std::max(worst, std::fabs(average_precision(s, labels) - brute_force_ap(s, labels)));
  }

  // mAP recomputed independently from the report's own score table
  SynthConfig sc;
  sc.num_labels = 4;
  sc.feature_dim = 6;
  sc.num_bags = 40;
  sc.noise_sigma = 0.8;
  SyntheticData synth = generate_synthetic(sc, 88);
  TrainConfig tc;
  tc.hidden_width = 8;
  tc.lr = 1e-3;
  tc.epochs_per_phase = 5;
  tc.seed = 88;
  TrainedModel model = alternate_train(synth.dataset, tc);
  MetricsReport rep = evaluate(model, synth.dataset);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    Vector col(40);
    std::vector<int> lab(40);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      col[i] = rep.scores(i, k);
      lab[i] = synth.dataset.bags[i].labels[k];
      pos += (lab[i] == 1);
    }
    if (pos == 0) continue;
    sum += brute_force_ap(col, lab);
    ++defined;
  }
  const double map_diff = std::fabs(rep.mean_ap - sum / static_cast<double>(defined));
  worst = std::max(worst, map_diff);
  char detail[96];
  std::snprintf(detail, sizeof(detail), "1000 tables + mAP recompute, worst |diff| %.2e", worst);
  report(8, "AP / mAP equal the brute-force oracle", worst < 1e-12, detail);
}

void criterion_9_determinism(const fs::path& dir) {
  bool ok = true;
  SynthConfig sc;
  sc.num_labels = 3;
  sc.feature_dim = 6;
  sc.num_bags = 20;
  sc.noise_sigma = 0.3;
  sc.pi = PiKind::boxes;

  // datasets: identical bytes per seed, exact file round-trip
  SyntheticData g1 = generate_synthetic(sc, 9);
  SyntheticData g2 = generate_synthetic(sc, 9);
  save_dataset(g1.dataset, (dir / "d1.jsonl").string());
  save_dataset(g2.dataset, (dir / "d2.jsonl").string());
  ok &= read_file((dir / "d1.jsonl").string()) == read_file((dir / "d2.jsonl").string());
  Dataset loaded = load_dataset((dir / "d1.jsonl").string());
  ok &= (loaded == g1.dataset);
  save_dataset(loaded, (dir / "d3.jsonl").string());
  ok &= read_file((dir / "d1.jsonl").string()) == read_file((dir / "d3.jsonl").string());

  // checkpoints: identical bytes per seed, exact file round-trip
  TrainConfig tc;
  tc.hidden_width = 8;
  tc.lr = 1e-4;
  tc.lambda = 0.2;
  tc.epochs_per_phase = 3;
  tc.outer_rounds = 2;
  tc.phase_tol = 0.0;
  tc.seed = 9;
  Trainer t1(g1.dataset, tc);
  t1.run();
  Trainer t2(g1.dataset, tc);
  t2.run();
  save_checkpoint(t1.state(), (dir / "c1.json").string());
  save_checkpoint(t2.state(), (dir / "c2.json").string());
  ok &= read_file((dir / "c1.json").string()) == read_file((dir / "c2.json").string());
  TrainState reloaded = load_checkpoint((dir / "c1.json").string());
  ok &= (reloaded == t1.state());
  save_checkpoint(reloaded, (dir / "c3.json").string());
  ok &= read_file((dir / "c1.json").string()) == read_file((dir / "c3.json").string());

  // metric reports: identical bytes
  MetricsReport r1 = evaluate(t1.state().model, g1.dataset);
  MetricsReport r2 = evaluate(t2.state().model, g1.dataset, 4);
  write_metrics_json(r1, (dir / "m1.json").string());
  write_metrics_json(r2, (dir / "m2.json").string());
  ok &= read_file((dir / "m1.json").string()) == read_file((dir / "m2.json").string());

  report(9, "determinism and exact round-trips", ok,
         "datasets, checkpoints, metric reports byte-stable");
}

}  // namespace

int main() {
  const fs::path dir = scratch_dir();
  const auto t0 = std::chrono::steady_clock::now();

  criterion_1_gradient_oracle();
  criterion_2_reduction_identity(dir);
  criterion_3_pi_pooling();
  criterion_4_separable_recovery();
  criterion_5_pi_benefit();
  criterion_6_graph_identities();
  criterion_7_ranking_machinery();
  criterion_8_metric_oracle();
  criterion_9_determinism(dir);

  std::printf("acceptance: %d/9 criteria passed in %.1f s\n", 9 - failures, elapsed_s(t0));
  fs::remove_all(dir);
  return failures == 0 ? 0 : 1;
}
