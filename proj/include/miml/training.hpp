#pragma once

#include <optional>
#include <string>
#include <vector>

#include "miml/data.hpp"
#include "miml/losses.hpp"
#include "miml/network.hpp"

namespace miml {

enum class LossKind { square, ranking };
enum class StreamId { loss, slack };

struct GraphConfig {
  std::size_t k = 5;
  bool exclude_self = false;
  friend bool operator==(const GraphConfig&, const GraphConfig&) = default;
};

struct TrainConfig {
  LossKind loss_kind = LossKind::square;
  double lambda = 0.0;      // privileged regularizer weight; 0 = single stream
  double lr = 1e-3;
  double momentum = 0.9;
  std::size_t epochs_per_phase = 10;
  std::size_t outer_rounds = 1;
  double phase_tol = 1e-4;  // relative epoch-loss change ending a phase early
  std::uint64_t seed = 0;
  std::optional<GraphConfig> graph;
  SlackMode slack_mode = SlackMode::per_label;
  double dropout = 0.0;
  double lr_decay = 1.0;    // per-epoch multiplier on the step size
  double grad_clip = 0.0;   // elementwise bound on gradients; 0 = off
  bool warp = true;         // harmonic rank weight for ranking loss; false pins S = 1
  std::size_t hidden_width = 2048;
  std::size_t layer_pairs = 1;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  std::size_t round = 0;  // 1-based outer round
  StreamId phase = StreamId::loss;
  std::size_t epoch = 0;  // 1-based within the phase
  double mean_objective = 0.0;
  double mean_base = 0.0;
  double mean_pi = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// Prediction uses loss_params only; the slack stream exists purely to shape
// training.
struct TrainedModel {
  LayerSpec loss_spec;
  NetworkParams loss_params;
  std::optional<LayerSpec> slack_spec;
  std::optional<NetworkParams> slack_params;
  std::vector<EpochRecord> history;
  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

// Everything needed to continue a run exactly: parameters, momentum buffers
// and progress counters. RNG streams are derived from (seed, purpose,
// round/epoch/bag coordinates), so no engine state needs to be carried.
struct TrainState {
  TrainConfig config;
  TrainedModel model;
  NetworkParams loss_velocity;
  std::optional<NetworkParams> slack_velocity;
  std::size_t rounds_done = 0;
  double best_objective = 0.0;
  bool has_best = false;
  friend bool operator==(const TrainState&, const TrainState&) = default;
};

// Classic momentum update v <- mu*v - lr*g; p <- p + v, applied to every
// parameter block. Non-finite gradients abort with diagnostics; clip > 0
// bounds each gradient entry first.
void sgd_step(NetworkParams& params, const NetworkParams& grads, double lr, double momentum,
              NetworkParams& velocity, double clip = 0.0);

// Alternating two-stream optimization: per outer round, the loss stream
// trains while the slack stream is frozen, then vice versa. With lambda = 0
// the slack stream is never built and this is plain single-stream training.
class Trainer {
 public:
  // owns a copy of the dataset; per-bag inputs hold pointers into it
  Trainer(Dataset dataset, const TrainConfig& config);
  Trainer(Dataset dataset, TrainState resume_from);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One phase of the given stream at round state().rounds_done + 1.
  std::vector<EpochRecord> train_phase(StreamId stream);
  // Runs rounds until config.outer_rounds is reached.
  void run();

  const TrainState& state() const { return state_; }
  TrainState take_state() { return std::move(state_); }
  const TrainState& best_state() const { return best_state_; }

 private:
  struct BagInputs {
    Matrix loss_input;
    Matrix slack_input;                     // unused when lambda == 0
    const PositiveSetsPI* positive_sets = nullptr;  // set when slack uses pi_pool
    PositiveSetsPI derived;                 // storage for box-derived sets
  };

  double run_epoch(StreamId stream, std::size_t round, std::size_t epoch_in_phase,
                   double& mean_base, double& mean_pi);
  std::size_t stream_epochs_done(StreamId stream) const;
  void prepare_inputs();

  Dataset dataset_;
  TrainState state_;
  TrainState best_state_;
  std::vector<BagInputs> inputs_;
  bool slack_enabled_ = false;
};

TrainedModel alternate_train(const Dataset& dataset, const TrainConfig& config);

// Versioned JSON checkpoint, exact for doubles.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

// Analytic-vs-finite-difference verification over every combination of
// {flat, graph} x {global max, PI pooling} x {square, ranking} x {lambda 0, >0}
// on randomly drawn tiny two-stream models.
struct GradcheckCombo {
  InputMode input_mode = InputMode::flat;
  Pooling slack_pooling = Pooling::global_max;
  LossKind loss_kind = LossKind::square;
  bool with_pi = false;  // lambda > 0
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckCombo> combos;
  double worst = 0.0;
  bool all_pass = true;
};

struct GradcheckOptions {
  double tolerance = 1e-5;
  double base_step = 1e-6;    // per-entry step h * (1 + |w|)
  double corruption = 0.0;    // test hook: scales one analytic gradient block
};

GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options = {});
std::string format_report(const GradcheckReport& report);

}  // namespace miml
