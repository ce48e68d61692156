#include "miml/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "miml/errors.hpp"
#include "miml/graph.hpp"

namespace miml {

namespace {

void check_finite_clip(double& g, double clip, const std::string& what) {
  if (!std::isfinite(g)) throw NumericError("sgd_step: non-finite gradient in " + what);
  if (clip > 0.0) g = std::clamp(g, -clip, clip);
}

void sgd_block(Vector& p, Vector g, double lr, double momentum, Vector& v, double clip,
               const std::string& what) {
  if (p.size() != g.size() || p.size() != v.size())
    throw std::invalid_argument("sgd_step: mismatched shapes in " + what);
  for (std::size_t i = 0; i < p.size(); ++i) {
    check_finite_clip(g[i], clip, what);
    v[i] = momentum * v[i] - lr * g[i];
    p[i] += v[i];
  }
}

std::uint64_t stream_tag(StreamId s) { return s == StreamId::loss ? 0 : 1; }

Matrix stream_input(const Matrix& instances, const std::optional<GraphConfig>& graph) {
  if (!graph) return instances;
  NeighborGraph g = knn_graph_clamped(instances, graph->k, graph->exclude_self);
  return flatten_neighborhoods(neighborhood_tensor(instances, g));
}

}  // namespace

void sgd_step(NetworkParams& params, const NetworkParams& grads, double lr, double momentum,
              NetworkParams& velocity, double clip) {
  if (grads.conv.size() != params.conv.size() || velocity.conv.size() != params.conv.size())
    throw std::invalid_argument("sgd_step: parameter / gradient layer counts differ");
  for (std::size_t l = 0; l < params.conv.size(); ++l) {
    const std::string tag = "conv layer " + std::to_string(l);
    sgd_block(params.conv[l].weights.data, grads.conv[l].weights.data, lr, momentum,
              velocity.conv[l].weights.data, clip, tag + " weights");
    sgd_block(params.conv[l].bias, grads.conv[l].bias, lr, momentum, velocity.conv[l].bias, clip,
              tag + " bias");
  }
  sgd_block(params.classify.weights.data, grads.classify.weights.data, lr, momentum,
            velocity.classify.weights.data, clip, "classification weights");
  sgd_block(params.classify.bias, grads.classify.bias, lr, momentum, velocity.classify.bias, clip,
            "classification bias");
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

void validate_config(const TrainConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigError("TrainConfig: lambda must be >= 0");
  if (cfg.lr <= 0.0) throw ConfigError("TrainConfig: lr must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("TrainConfig: momentum must be in [0, 1)");
  if (cfg.outer_rounds < 1) throw ConfigError("TrainConfig: outer_rounds must be >= 1");
  if (cfg.epochs_per_phase < 1) throw ConfigError("TrainConfig: epochs_per_phase must be >= 1");
  if (cfg.phase_tol < 0.0) throw ConfigError("TrainConfig: phase_tol must be >= 0");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw ConfigError("TrainConfig: dropout must be in [0, 1)");
  if (cfg.lr_decay <= 0.0) throw ConfigError("TrainConfig: lr_decay must be > 0");
  if (cfg.grad_clip < 0.0) throw ConfigError("TrainConfig: grad_clip must be >= 0");
  if (cfg.graph && cfg.graph->k < 1) throw ConfigError("TrainConfig: graph.k must be >= 1");
}

LayerSpec build_spec(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_labels,
                     Pooling pooling) {
  LayerSpec spec;
  spec.layer_pairs = cfg.layer_pairs;
  spec.hidden_width = cfg.hidden_width;
  spec.input_dim = input_dim;
  spec.num_labels = num_labels;
  spec.input_mode = cfg.graph ? InputMode::graph : InputMode::flat;
  spec.graph_k = cfg.graph ? cfg.graph->k : 0;
  spec.pooling = pooling;
  spec.dropout_rate = cfg.dropout;
  validate_spec(spec);
  return spec;
}

void check_dataset_compat(const Dataset& ds, const TrainedModel& model) {
  if (ds.feature_dim != model.loss_spec.input_dim)
    throw ConfigError("dataset feature_dim " + std::to_string(ds.feature_dim) +
                      " != model input_dim " + std::to_string(model.loss_spec.input_dim));
  if (ds.num_labels != model.loss_spec.num_labels)
    throw ConfigError("dataset num_labels " + std::to_string(ds.num_labels) +
                      " != model num_labels " + std::to_string(model.loss_spec.num_labels));
}

}  // namespace

Trainer::Trainer(Dataset dataset, const TrainConfig& config) : dataset_(std::move(dataset)) {
  validate_config(config);
  if (dataset_.bags.empty()) throw DataError("Trainer: dataset has no bags");
  state_.config = config;
  slack_enabled_ = config.lambda > 0.0;

  state_.model.loss_spec =
      build_spec(config, dataset_.feature_dim, dataset_.num_labels, Pooling::global_max);
  state_.model.loss_params =
      init_params(state_.model.loss_spec, derive_seed(config.seed, "init-loss"));
  state_.loss_velocity = zeros_like(state_.model.loss_params);

  if (slack_enabled_) {
    if (!dataset_.has_pi())
      throw ConfigError("lambda > 0 requires privileged bags in the dataset");
    bool any_features = false, any_sets = false;
    for (const PrivilegedBag& pb : *dataset_.pi) {
      if (std::holds_alternative<FeatureBagPI>(pb))
        any_features = true;
      else
        any_sets = true;
    }
    if (any_features && any_sets)
      throw ConfigError("privileged bags mix caption-style features with positive-set styles");
    const std::size_t slack_dim = any_features ? dataset_.pi_feature_dim : dataset_.feature_dim;
    const Pooling slack_pool = any_features ? Pooling::global_max : Pooling::pi_pool;
    state_.model.slack_spec = build_spec(config, slack_dim, dataset_.num_labels, slack_pool);
    state_.model.slack_params =
        init_params(*state_.model.slack_spec, derive_seed(config.seed, "init-slack"));
    state_.slack_velocity = zeros_like(*state_.model.slack_params);
  }
  prepare_inputs();
}

Trainer::Trainer(Dataset dataset, TrainState resume_from)
    : dataset_(std::move(dataset)), state_(std::move(resume_from)) {
  validate_config(state_.config);
  if (dataset_.bags.empty()) throw DataError("Trainer: dataset has no bags");
  check_dataset_compat(dataset_, state_.model);
  slack_enabled_ = state_.config.lambda > 0.0;
  if (slack_enabled_) {
    if (!dataset_.has_pi())
      throw ConfigError("checkpoint expects privileged bags but the dataset has none");
    if (!state_.model.slack_params || !state_.slack_velocity)
      throw DataError("checkpoint: lambda > 0 but no slack stream stored");
  }
  best_state_ = state_;
  prepare_inputs();
}

void Trainer::prepare_inputs() {
  const TrainConfig& cfg = state_.config;
  inputs_.clear();
  inputs_.reserve(dataset_.bags.size());
  for (std::size_t i = 0; i < dataset_.bags.size(); ++i) {
    const Bag& bag = dataset_.bags[i];
    BagInputs in;
    in.loss_input = stream_input(bag.instances, cfg.graph);
    if (slack_enabled_) {
      const PrivilegedBag& pb = (*dataset_.pi)[i];
      if (const auto* f = std::get_if<FeatureBagPI>(&pb)) {
        in.slack_input = stream_input(f->instances, cfg.graph);
      } else {
        if (const auto* b = std::get_if<BoxesPI>(&pb))
          in.derived = derive_positive_sets(*b, bag.labels);
        in.slack_input = in.loss_input;
      }
    }
    inputs_.push_back(std::move(in));
  }
  // pointers only after the vector stops moving elements around
  if (slack_enabled_) {
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      const PrivilegedBag& pb = (*dataset_.pi)[i];
      if (const auto* s = std::get_if<PositiveSetsPI>(&pb))
        inputs_[i].positive_sets = s;
      else if (std::holds_alternative<BoxesPI>(pb))
        inputs_[i].positive_sets = &inputs_[i].derived;
    }
  }
}

std::size_t Trainer::stream_epochs_done(StreamId stream) const {
  std::size_t n = 0;
  for (const EpochRecord& r : state_.model.history) n += (r.phase == stream);
  return n;
}

double Trainer::run_epoch(StreamId stream, std::size_t round, std::size_t epoch_in_phase,
                          double& mean_base, double& mean_pi) {
  const TrainConfig& cfg = state_.config;
  const std::size_t n = dataset_.bags.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", {round, stream_tag(stream), epoch_in_phase}));
  shuffle_rng.shuffle(order);

  const double lr_eff =
      cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(stream_epochs_done(stream)));

  NetworkParams& loss_params = state_.model.loss_params;
  const LayerSpec& loss_spec = state_.model.loss_spec;

  double sum_obj = 0.0, sum_base = 0.0, sum_pi = 0.0;
  for (std::size_t bag_index : order) {
    const Bag& bag = dataset_.bags[bag_index];
    const BagInputs& in = inputs_[bag_index];

    // dropout only perturbs the stream being trained; the frozen stream acts
    // as a fixed model
    DropoutMasks masks;
    const DropoutMasks* loss_masks = nullptr;
    const DropoutMasks* slack_masks = nullptr;
    if (cfg.dropout > 0.0) {
      Rng drop_rng(
          derive_seed(cfg.seed, "dropout", {round, stream_tag(stream), epoch_in_phase, bag_index}));
      const bool on_loss = stream == StreamId::loss;
      const LayerSpec& spec = on_loss ? loss_spec : *state_.model.slack_spec;
      const Matrix& input = on_loss ? in.loss_input : in.slack_input;
      masks = make_dropout_masks(spec, input.rows, drop_rng);
      (on_loss ? loss_masks : slack_masks) = &masks;
    }

    ForwardTrace loss_trace = forward_instances(loss_params, loss_spec, in.loss_input, loss_masks);
    Vector bag_scores = pool_max(loss_trace.scores, loss_trace.pool);

    ForwardTrace slack_trace;
    Vector slack_scores;
    if (slack_enabled_) {
      slack_trace = forward_instances(*state_.model.slack_params, *state_.model.slack_spec,
                                      in.slack_input, slack_masks);
      slack_scores = in.positive_sets
                         ? pool_pi(slack_trace.scores, *in.positive_sets, bag.labels,
                                   slack_trace.pool)
                         : pool_max(slack_trace.scores, slack_trace.pool);
    }

    LossValue lv;
    bool update = true;
    if (cfg.loss_kind == LossKind::square) {
      if (slack_enabled_) {
        Vector slack_arg = cfg.slack_mode == SlackMode::scalar
                               ? Vector{std::accumulate(slack_scores.begin(), slack_scores.end(),
                                                        0.0)}
                               : slack_scores;
        lv = pi_square_objective(bag.labels, bag_scores, slack_arg, cfg.lambda, cfg.slack_mode);
      } else {
        SquareLoss sq = square_loss(bag.labels, bag_scores);
        lv.total = lv.base_term = sq.value;
        lv.grad_F = std::move(sq.grad);
      }
    } else {
      Rng sample_rng(
          derive_seed(cfg.seed, "sample", {round, stream_tag(stream), epoch_in_phase, bag_index}));
      Quadruplet q = sample_quadruplet(bag.labels, bag_scores, sample_rng);
      if (q.skip || !q.violated) {
        update = false;  // zero loss contribution
      } else {
        const double weight =
            cfg.warp ? warp_weight(bag.labels.negative_count(), q.trials) : 1.0;
        if (slack_enabled_) {
          lv = pi_ranking_objective(bag_scores, slack_scores, q.y, q.ybar, cfg.lambda, weight);
        } else {
          RankingLoss rl = ranking_loss(bag_scores, q.y, q.ybar, weight);
          lv.total = lv.base_term = rl.value;
          lv.grad_F = std::move(rl.grad);
        }
      }
    }

    sum_obj += lv.total;
    sum_base += lv.base_term;
    sum_pi += lv.pi_term;
    if (!update) continue;

    if (stream == StreamId::loss) {
      BackwardResult back = backward(loss_params, loss_spec, loss_trace, lv.grad_F);
      sgd_step(loss_params, back.grads, lr_eff, cfg.momentum, state_.loss_velocity,
               cfg.grad_clip);
    } else {
      Vector grad_slack = lv.grad_Fstar;
      if (cfg.loss_kind == LossKind::square && cfg.slack_mode == SlackMode::scalar)
        grad_slack.assign(dataset_.num_labels, lv.grad_Fstar[0]);  // slack scalar sums outputs
      BackwardResult back = backward(*state_.model.slack_params, *state_.model.slack_spec,
                                     slack_trace, grad_slack);
      sgd_step(*state_.model.slack_params, back.grads, lr_eff, cfg.momentum,
               *state_.slack_velocity, cfg.grad_clip);
    }
  }
  mean_base = sum_base / static_cast<double>(n);
  mean_pi = sum_pi / static_cast<double>(n);
  return sum_obj / static_cast<double>(n);
}

std::vector<EpochRecord> Trainer::train_phase(StreamId stream) {
  const TrainConfig& cfg = state_.config;
  if (stream == StreamId::slack && !slack_enabled_)
    throw ConfigError("train_phase: slack phase requires lambda > 0 and privileged data");

  const std::size_t round = state_.rounds_done + 1;
  std::vector<EpochRecord> records;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t e = 1; e <= cfg.epochs_per_phase; ++e) {
    EpochRecord rec;
    rec.round = round;
    rec.phase = stream;
    rec.epoch = e;
    rec.mean_objective = run_epoch(stream, round, e, rec.mean_base, rec.mean_pi);
    records.push_back(rec);
    state_.model.history.push_back(rec);
    if (stream == StreamId::loss &&
        (!state_.has_best || rec.mean_objective < state_.best_objective)) {
      state_.best_objective = rec.mean_objective;
      state_.has_best = true;
      best_state_ = state_;
    }
    if (!std::isnan(prev)) {
      const double rel =
          std::fabs(rec.mean_objective - prev) / std::max(std::fabs(prev), 1e-12);
      if (rel < cfg.phase_tol) break;
    }
    prev = rec.mean_objective;
  }
  return records;
}

void Trainer::run() {
  while (state_.rounds_done < state_.config.outer_rounds) {
    train_phase(StreamId::loss);
    if (slack_enabled_) train_phase(StreamId::slack);
    ++state_.rounds_done;
  }
}

TrainedModel alternate_train(const Dataset& dataset, const TrainConfig& config) {
  Trainer trainer(dataset, config);
  trainer.run();
  return trainer.take_state().model;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

struct GcModel {
  LayerSpec loss_spec, slack_spec;
  NetworkParams loss_params, slack_params;
  Matrix loss_input, slack_input;
  LabelVector labels;
  PositiveSetsPI positive_sets;
  double lambda = 0.0;
  LossKind loss_kind = LossKind::square;
  SlackMode slack_mode = SlackMode::per_label;
  bool with_pi = false;
  Pooling slack_pooling = Pooling::global_max;
  std::size_t qy = 0, qybar = 0;  // frozen quadruplet for ranking
  double rank_weight = 1.0;
};

Vector gc_slack_output(const GcModel& m, const NetworkParams& slack_params, ForwardTrace& trace) {
  trace = forward_instances(slack_params, m.slack_spec, m.slack_input);
  return m.slack_pooling == Pooling::pi_pool
             ? pool_pi(trace.scores, m.positive_sets, m.labels, trace.pool)
             : pool_max(trace.scores, trace.pool);
}

LossValue gc_loss_value(const GcModel& m, const Vector& bag_scores, const Vector& slack_scores) {
  LossValue lv;
  if (m.loss_kind == LossKind::square) {
    if (m.with_pi) {
      Vector arg = m.slack_mode == SlackMode::scalar
                       ? Vector{std::accumulate(slack_scores.begin(), slack_scores.end(), 0.0)}
                       : slack_scores;
      return pi_square_objective(m.labels, bag_scores, arg, m.lambda, m.slack_mode);
    }
    SquareLoss sq = square_loss(m.labels, bag_scores);
    lv.total = lv.base_term = sq.value;
    lv.grad_F = sq.grad;
    return lv;
  }
  if (m.with_pi)
    return pi_ranking_objective(bag_scores, slack_scores, m.qy, m.qybar, m.lambda, m.rank_weight);
  RankingLoss rl = ranking_loss(bag_scores, m.qy, m.qybar, m.rank_weight);
  lv.total = lv.base_term = rl.value;
  lv.grad_F = rl.grad;
  return lv;
}

double gc_objective(const GcModel& m, const NetworkParams& loss_params,
                    const NetworkParams& slack_params) {
  ForwardTrace lt = forward_instances(loss_params, m.loss_spec, m.loss_input);
  Vector bag_scores = pool_max(lt.scores, lt.pool);
  Vector slack_scores;
  if (m.with_pi) {
    ForwardTrace st;
    slack_scores = gc_slack_output(m, slack_params, st);
  }
  return gc_loss_value(m, bag_scores, slack_scores).total;
}

void gc_analytic(const GcModel& m, NetworkParams& grad_loss, NetworkParams& grad_slack) {
  ForwardTrace lt = forward_instances(m.loss_params, m.loss_spec, m.loss_input);
  Vector bag_scores = pool_max(lt.scores, lt.pool);
  ForwardTrace st;
  Vector slack_scores;
  if (m.with_pi) slack_scores = gc_slack_output(m, m.slack_params, st);
  LossValue lv = gc_loss_value(m, bag_scores, slack_scores);
  grad_loss = backward(m.loss_params, m.loss_spec, lt, lv.grad_F).grads;
  if (m.with_pi) {
    Vector g = lv.grad_Fstar;
    if (m.loss_kind == LossKind::square && m.slack_mode == SlackMode::scalar)
      g.assign(m.labels.size(), lv.grad_Fstar[0]);
    grad_slack = backward(m.slack_params, m.slack_spec, st, g).grads;
  } else {
    grad_slack = zeros_like(m.slack_params);
  }
}

// Rejects draws whose objective sits near a nondifferentiable point: ReLU
// crossings, pooling argmax ties, hinge and clamp boundaries.
bool gc_well_conditioned(const GcModel& m) {
  const double act_margin = 1e-4, kink_margin = 1e-3;
  auto check_stream = [&](const NetworkParams& p, const LayerSpec& spec, const Matrix& input,
                          ForwardTrace& trace) {
    trace = forward_instances(p, spec, input);
    for (const Matrix& pre : trace.pre_activations)
      for (double z : pre.data)
        if (std::fabs(z) < act_margin) return false;
    // top-2 gap per column so argmax cannot flip under the probe steps
    for (std::size_t c = 0; c < trace.scores.cols; ++c) {
      if (trace.scores.rows < 2) break;
      double best = -std::numeric_limits<double>::infinity(), second = best;
      for (std::size_t r = 0; r < trace.scores.rows; ++r) {
        const double v = trace.scores(r, c);
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (best - second < kink_margin) return false;
    }
    return true;
  };

  ForwardTrace lt, st;
  if (!check_stream(m.loss_params, m.loss_spec, m.loss_input, lt)) return false;
  Vector bag_scores = pool_max(lt.scores, lt.pool);
  Vector slack_scores;
  if (m.with_pi) {
    if (!check_stream(m.slack_params, m.slack_spec, m.slack_input, st)) return false;
    slack_scores = m.slack_pooling == Pooling::pi_pool
                       ? pool_pi(st.scores, m.positive_sets, m.labels, st.pool)
                       : pool_max(st.scores, st.pool);
  }
  if (m.loss_kind == LossKind::ranking) {
    const double margin = 1.0 + bag_scores[m.qybar] - bag_scores[m.qy];
    if (margin < kink_margin) return false;  // need a clearly violated pair
    if (m.with_pi) {
      const double raw_slack = m.rank_weight * (1.0 + slack_scores[m.qybar] - slack_scores[m.qy]);
      if (std::fabs(raw_slack) < kink_margin) return false;
    }
  }
  return true;
}

GcModel gc_build(std::uint64_t seed, std::size_t combo_index, const GradcheckCombo& combo,
                 std::size_t attempt) {
  Rng rng(derive_seed(seed, "gradcheck", {combo_index, attempt}));
  GcModel m;
  m.loss_kind = combo.loss_kind;
  m.with_pi = combo.with_pi;
  m.slack_pooling = combo.slack_pooling;
  m.lambda = combo.with_pi ? 0.3 + 0.4 * rng.uniform() : 0.0;
  // alternate square-loss combos between the two slack readings so both
  // gradient routes get finite-difference coverage
  if (combo.loss_kind == LossKind::square && combo.with_pi)
    m.slack_mode = (combo_index / 4) % 2 == 0 ? SlackMode::per_label : SlackMode::scalar;

  const std::size_t d = 2 + rng.uniform_int(7);       // <= 8
  const std::size_t c = 2 + rng.uniform_int(2);       // <= 3
  const std::size_t inst = 2 + rng.uniform_int(4);    // <= 5
  const std::size_t width = 2 + rng.uniform_int(15);  // <= 16
  const std::size_t pairs = 1 + rng.uniform_int(2);

  m.labels.values.assign(c, 0);
  for (int& v : m.labels.values) v = rng.uniform() < 0.5 ? 1 : -1;
  // force at least one of each polarity
  const std::size_t pos_at = rng.uniform_int(c);
  const std::size_t neg_at = (pos_at + 1 + rng.uniform_int(c - 1)) % c;
  m.labels.values[pos_at] = 1;
  m.labels.values[neg_at] = -1;

  Matrix instances(inst, d);
  for (double& v : instances.data) v = rng.normal();

  const bool graph_mode = combo.input_mode == InputMode::graph;
  const std::size_t k = graph_mode ? std::min<std::size_t>(3, inst) : 0;

  m.loss_spec.layer_pairs = pairs;
  m.loss_spec.hidden_width = width;
  m.loss_spec.input_dim = d;
  m.loss_spec.num_labels = c;
  m.loss_spec.input_mode = combo.input_mode;
  m.loss_spec.graph_k = k;
  m.loss_spec.pooling = Pooling::global_max;
  m.loss_params = init_params(m.loss_spec, rng.next_u64());

  auto encode = [&](const Matrix& rows) {
    if (!graph_mode) return rows;
    NeighborGraph g = knn_graph_clamped(rows, k, false);
    return flatten_neighborhoods(neighborhood_tensor(rows, g));
  };
  m.loss_input = encode(instances);

  if (m.with_pi) {
    m.slack_spec = m.loss_spec;
    if (combo.slack_pooling == Pooling::pi_pool) {
      m.slack_spec.pooling = Pooling::pi_pool;
      m.slack_input = m.loss_input;
      m.positive_sets.sets.assign(c, {});
      for (std::size_t kk = 0; kk < c; ++kk) {
        if (m.labels[kk] != 1) continue;
        for (std::size_t j = 0; j < inst; ++j)
          if (rng.uniform() < 0.5) m.positive_sets.sets[kk].push_back(static_cast<int>(j));
        if (m.positive_sets.sets[kk].empty())
          m.positive_sets.sets[kk].push_back(static_cast<int>(rng.uniform_int(inst)));
      }
    } else {
      const std::size_t slack_inst = 2 + rng.uniform_int(3);
      const std::size_t slack_dim = 2 + rng.uniform_int(5);
      Matrix slack_instances(slack_inst, slack_dim);
      for (double& v : slack_instances.data) v = rng.normal();
      m.slack_spec.input_dim = slack_dim;
      m.slack_spec.graph_k = graph_mode ? std::min<std::size_t>(3, slack_inst) : 0;
      if (graph_mode) {
        NeighborGraph g = knn_graph_clamped(slack_instances, m.slack_spec.graph_k, false);
        m.slack_input = flatten_neighborhoods(neighborhood_tensor(slack_instances, g));
      } else {
        m.slack_input = slack_instances;
      }
    }
    m.slack_params = init_params(m.slack_spec, rng.next_u64());
  } else {
    // an inert slack stream: gradcheck verifies its gradients vanish
    m.slack_spec = m.loss_spec;
    m.slack_params = init_params(m.slack_spec, rng.next_u64());
  }

  if (m.loss_kind == LossKind::ranking) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t kk = 0; kk < c; ++kk) (m.labels[kk] == 1 ? pos : neg).push_back(kk);
    m.qy = pos[rng.uniform_int(pos.size())];
    m.qybar = neg[rng.uniform_int(neg.size())];
    const std::size_t trials = 1 + rng.uniform_int(neg.size());
    m.rank_weight = warp_weight(neg.size(), trials);
  }
  return m;
}

struct ParamBlock {
  double* data;
  const double* analytic;
  std::size_t size;
};

std::vector<ParamBlock> gc_blocks(NetworkParams& params, const NetworkParams& analytic) {
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < params.conv.size(); ++l) {
    blocks.push_back({params.conv[l].weights.data.data(), analytic.conv[l].weights.data.data(),
                      params.conv[l].weights.data.size()});
    blocks.push_back(
        {params.conv[l].bias.data(), analytic.conv[l].bias.data(), params.conv[l].bias.size()});
  }
  blocks.push_back({params.classify.weights.data.data(), analytic.classify.weights.data.data(),
                    params.classify.weights.data.size()});
  blocks.push_back(
      {params.classify.bias.data(), analytic.classify.bias.data(), params.classify.bias.size()});
  return blocks;
}

}  // namespace

GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options) {
  GradcheckReport report;
  std::size_t combo_index = 0;
  for (InputMode mode : {InputMode::flat, InputMode::graph}) {
    for (Pooling pooling : {Pooling::global_max, Pooling::pi_pool}) {
      for (LossKind loss : {LossKind::square, LossKind::ranking}) {
        for (bool with_pi : {false, true}) {
          GradcheckCombo combo;
          combo.input_mode = mode;
          combo.slack_pooling = pooling;
          combo.loss_kind = loss;
          combo.with_pi = with_pi;

          GcModel m;
          bool built = false;
          for (std::size_t attempt = 0; attempt < 64 && !built; ++attempt) {
            m = gc_build(seed, combo_index, combo, attempt);
            built = gc_well_conditioned(m);
          }
          if (!built) {
            combo.pass = false;
            combo.max_rel_err = std::numeric_limits<double>::infinity();
            report.combos.push_back(combo);
            report.all_pass = false;
            ++combo_index;
            continue;
          }

          NetworkParams grad_loss, grad_slack;
          gc_analytic(m, grad_loss, grad_slack);
          if (options.corruption != 0.0)
            for (double& g : grad_loss.classify.weights.data) g *= 1.0 + options.corruption;

          NetworkParams loss_probe = m.loss_params;
          NetworkParams slack_probe = m.slack_params;
          auto objective = [&]() { return gc_objective(m, loss_probe, slack_probe); };

          double worst = 0.0;
          for (bool slack_side : {false, true}) {
            NetworkParams& probe = slack_side ? slack_probe : loss_probe;
            const NetworkParams& analytic = slack_side ? grad_slack : grad_loss;
            for (ParamBlock block : gc_blocks(probe, analytic)) {
              double max_abs_diff = 0.0, scale = 1e-8;
              for (std::size_t i = 0; i < block.size; ++i) {
                const double orig = block.data[i];
                const double h = options.base_step * (1.0 + std::fabs(orig));
                block.data[i] = orig + h;
                const double fp = objective();
                block.data[i] = orig - h;
                const double fm = objective();
                block.data[i] = orig;
                const double numeric = (fp - fm) / (2.0 * h);
                max_abs_diff = std::max(max_abs_diff, std::fabs(block.analytic[i] - numeric));
                scale = std::max({scale, std::fabs(block.analytic[i]), std::fabs(numeric)});
              }
              worst = std::max(worst, max_abs_diff / scale);
            }
          }
          combo.max_rel_err = worst;
          combo.pass = worst < options.tolerance;
          report.worst = std::max(report.worst, worst);
          report.all_pass = report.all_pass && combo.pass;
          report.combos.push_back(combo);
          ++combo_index;
        }
      }
    }
  }
  return report;
}

std::string format_report(const GradcheckReport& report) {
  std::string out;
  char line[160];
  std::size_t i = 0;
  for (const GradcheckCombo& c : report.combos) {
    std::snprintf(line, sizeof(line),
                  "[%2zu/%zu] input=%-5s pool=%-10s loss=%-7s lambda%-3s max_rel_err=%.3e  %s\n",
                  ++i, report.combos.size(),
                  c.input_mode == InputMode::flat ? "flat" : "graph",
                  c.slack_pooling == Pooling::global_max ? "global_max" : "pi_pool",
                  c.loss_kind == LossKind::square ? "square" : "ranking",
                  c.with_pi ? ">0 " : "=0 ", c.max_rel_err, c.pass ? "PASS" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof(line), "worst %.3e over %zu combinations: %s\n", report.worst,
                report.combos.size(), report.all_pass ? "ALL PASS" : "FAILURES PRESENT");
  out += line;
  return out;
}

}  // namespace miml
