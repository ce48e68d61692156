#pragma once

#include <cstdint>
#include <vector>

#include "miml/data.hpp"
#include "miml/matrix.hpp"
#include "miml/rng.hpp"

namespace miml {

enum class InputMode { flat, graph };
enum class Pooling { global_max, pi_pool };

// Architecture of one stream. Defaults follow the configuration found to
// work best at scale: a single conv/ReLU pair of width 2048. In graph mode
// the first layer consumes each instance's concatenated k-slot neighborhood,
// i.e. the k x 1 filter realized as a dot product over k*d inputs.
struct LayerSpec {
  std::size_t layer_pairs = 1;
  std::size_t hidden_width = 2048;
  std::size_t input_dim = 0;
  std::size_t num_labels = 0;
  InputMode input_mode = InputMode::flat;
  std::size_t graph_k = 0;  // neighbor slots consumed by the first layer
  Pooling pooling = Pooling::global_max;
  double dropout_rate = 0.0;

  std::size_t first_layer_inputs() const {
    return input_mode == InputMode::graph ? graph_k * input_dim : input_dim;
  }
  std::size_t classify_inputs() const {
    return layer_pairs > 0 ? hidden_width : first_layer_inputs();
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

void validate_spec(const LayerSpec& spec);

struct DenseLayer {
  Matrix weights;  // in x out
  Vector bias;     // out
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// All weights of one stream: the conv/ReLU stack plus the classification
// layer projecting hidden features to label scores.
struct NetworkParams {
  std::vector<DenseLayer> conv;
  DenseLayer classify;
  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// He-initialized weights, zero biases, deterministic per seed.
NetworkParams init_params(const LayerSpec& spec, std::uint64_t seed);
NetworkParams zeros_like(const NetworkParams& params);

// Inverted dropout applied after each ReLU: entries are 0 with probability
// rate, else 1/(1-rate); identity at eval (pass no masks).
struct DropoutMasks {
  std::vector<Matrix> scale;  // one m x width matrix per conv pair
};
DropoutMasks make_dropout_masks(const LayerSpec& spec, std::size_t num_instances, Rng& rng);

struct PoolRecord {
  std::vector<std::size_t> argmax;        // per label; used by max-pooled labels
  std::vector<std::vector<int>> members;  // per label; used by mean-pooled labels
  std::vector<std::uint8_t> mean_pooled;  // per label: 1 = averaged over members
};

// Everything the backward pass needs to replay the forward exactly.
struct ForwardTrace {
  std::vector<Matrix> layer_inputs;               // input to conv pair l
  std::vector<Matrix> pre_activations;            // affine output before ReLU
  std::vector<std::vector<std::uint8_t>> relu_masks;
  std::vector<Matrix> dropout_scale;              // empty when dropout off
  Matrix hidden;                                  // input to classification layer
  Matrix scores;                                  // m x C instance scores
  PoolRecord pool;
};

// Instance scores for pre-flattened input rows: m x d in flat mode,
// m x (k*d) in graph mode.
ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec,
                               const Matrix& input_rows,
                               const DropoutMasks* dropout = nullptr);
// Flat-mode convenience over a bag's instance matrix.
ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec, const Bag& bag,
                               const DropoutMasks* dropout = nullptr);
// Graph-mode entry: consumes the k x m x d neighborhood tensor.
ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec,
                               const Tensor3& neighborhoods,
                               const DropoutMasks* dropout = nullptr);

// Per-label max over instances; argmax lands in the record.
Vector pool_max(const Matrix& scores, PoolRecord& record);

// Privileged pooling for the slack stream: positive labels average over the
// verified positive set, negative labels keep the max.
Vector pool_pi(const Matrix& scores, const PositiveSetsPI& positive_sets,
               const LabelVector& labels, PoolRecord& record);

struct BackwardResult {
  NetworkParams grads;
  Matrix input_grads;  // same shape as the forward input rows
};

// Exact chain rule through pooling, classification and the conv/ReLU stack.
// Max pooling routes each label's gradient to its argmax instance only; mean
// pooling spreads grad/|P_k| over the recorded members.
BackwardResult backward(const NetworkParams& params, const LayerSpec& spec,
                        const ForwardTrace& trace, const Vector& grad_bag_scores);

}  // namespace miml
