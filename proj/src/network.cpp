#include "miml/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "miml/errors.hpp"
#include "miml/graph.hpp"

namespace miml {

void validate_spec(const LayerSpec& spec) {
  if (spec.input_dim < 1) throw ConfigError("LayerSpec: input_dim must be >= 1");
  if (spec.num_labels < 1) throw ConfigError("LayerSpec: num_labels must be >= 1");
  if (spec.layer_pairs > 0 && spec.hidden_width < 1)
    throw ConfigError("LayerSpec: hidden_width must be >= 1");
  if (spec.input_mode == InputMode::graph && spec.graph_k < 1)
    throw ConfigError("LayerSpec: graph mode requires graph_k >= 1");
  if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0)
    throw ConfigError("LayerSpec: dropout_rate must be in [0, 1)");
}

NetworkParams init_params(const LayerSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Rng rng(derive_seed(seed, "init"));
  auto gaussian_layer = [&rng](std::size_t in, std::size_t out) {
    DenseLayer layer;
    layer.weights = Matrix(in, out);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weights.data) w = rng.normal(0.0, stddev);
    layer.bias.assign(out, 0.0);
    return layer;
  };
  NetworkParams params;
  std::size_t in = spec.first_layer_inputs();
  for (std::size_t l = 0; l < spec.layer_pairs; ++l) {
    params.conv.push_back(gaussian_layer(in, spec.hidden_width));
    in = spec.hidden_width;
  }
  params.classify = gaussian_layer(in, spec.num_labels);
  return params;
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams z;
  z.conv.reserve(params.conv.size());
  for (const DenseLayer& l : params.conv)
    z.conv.push_back({Matrix(l.weights.rows, l.weights.cols), Vector(l.bias.size(), 0.0)});
  z.classify = {Matrix(params.classify.weights.rows, params.classify.weights.cols),
                Vector(params.classify.bias.size(), 0.0)};
  return z;
}

DropoutMasks make_dropout_masks(const LayerSpec& spec, std::size_t num_instances, Rng& rng) {
  DropoutMasks masks;
  if (spec.dropout_rate <= 0.0) return masks;
  const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
  for (std::size_t l = 0; l < spec.layer_pairs; ++l) {
    Matrix m(num_instances, spec.hidden_width);
    for (double& v : m.data) v = rng.uniform() < spec.dropout_rate ? 0.0 : keep_scale;
    masks.scale.push_back(std::move(m));
  }
  return masks;
}

namespace {

Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix out = matmul(x, layer.weights);
  for (std::size_t i = 0; i < out.rows; ++i) {
    double* row = out.row(i);
    for (std::size_t j = 0; j < out.cols; ++j) row[j] += layer.bias[j];
  }
  return out;
}

Vector col_sums(const Matrix& m) {
  Vector s(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) s[j] += row[j];
  }
  return s;
}

}  // namespace

ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec,
                               const Matrix& input_rows, const DropoutMasks* dropout) {
  if (input_rows.cols != spec.first_layer_inputs())
    throw std::invalid_argument("forward_instances: input width " +
                                std::to_string(input_rows.cols) + " != expected " +
                                std::to_string(spec.first_layer_inputs()));
  if (params.conv.size() != spec.layer_pairs)
    throw std::invalid_argument("forward_instances: params have " +
                                std::to_string(params.conv.size()) + " conv layers, spec wants " +
                                std::to_string(spec.layer_pairs));
  if (dropout && !dropout->scale.empty() &&
      (dropout->scale.size() != spec.layer_pairs ||
       dropout->scale[0].rows != input_rows.rows))
    throw std::invalid_argument("forward_instances: dropout masks do not match this input");

  ForwardTrace trace;
  Matrix current = input_rows;
  for (std::size_t l = 0; l < spec.layer_pairs; ++l) {
    trace.layer_inputs.push_back(current);
    Matrix pre = affine(current, params.conv[l]);
    trace.pre_activations.push_back(pre);
    ReluResult r = relu(pre);
    trace.relu_masks.push_back(std::move(r.mask));
    current = std::move(r.value);
    if (dropout && !dropout->scale.empty()) {
      const Matrix& scale = dropout->scale[l];
      for (std::size_t i = 0; i < current.data.size(); ++i) current.data[i] *= scale.data[i];
      trace.dropout_scale.push_back(scale);
    }
  }
  trace.hidden = std::move(current);
  trace.scores = affine(trace.hidden, params.classify);
  return trace;
}

ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec, const Bag& bag,
                               const DropoutMasks* dropout) {
  if (spec.input_mode != InputMode::flat)
    throw std::invalid_argument("forward_instances: graph-mode spec needs a neighborhood tensor");
  return forward_instances(params, spec, bag.instances, dropout);
}

ForwardTrace forward_instances(const NetworkParams& params, const LayerSpec& spec,
                               const Tensor3& neighborhoods, const DropoutMasks* dropout) {
  if (spec.input_mode != InputMode::graph)
    throw std::invalid_argument("forward_instances: flat-mode spec fed a neighborhood tensor");
  if (neighborhoods.depth != spec.graph_k)
    throw std::invalid_argument("forward_instances: tensor depth " +
                                std::to_string(neighborhoods.depth) + " != graph_k " +
                                std::to_string(spec.graph_k));
  return forward_instances(params, spec, flatten_neighborhoods(neighborhoods), dropout);
}

Vector pool_max(const Matrix& scores, PoolRecord& record) {
  RowMaxResult r = row_max_argmax(scores);
  record.argmax = std::move(r.indices);
  record.members.assign(scores.cols, {});
  record.mean_pooled.assign(scores.cols, 0);
  return std::move(r.values);
}

Vector pool_pi(const Matrix& scores, const PositiveSetsPI& positive_sets,
               const LabelVector& labels, PoolRecord& record) {
  const std::size_t c = scores.cols;
  if (labels.size() != c || positive_sets.sets.size() != c)
    throw std::invalid_argument("pool_pi: labels / positive sets do not match score columns");
  RowMaxResult mx = row_max_argmax(scores);
  Vector pooled(c, 0.0);
  record.argmax.assign(c, 0);
  record.members.assign(c, {});
  record.mean_pooled.assign(c, 0);
  for (std::size_t k = 0; k < c; ++k) {
    if (labels[k] == 1) {
      const std::vector<int>& pk = positive_sets.sets[k];
      if (pk.empty())
        throw DataError("pool_pi: empty positive set for positive label " + std::to_string(k));
      double sum = 0.0;
      for (int j : pk) {
        if (j < 0 || static_cast<std::size_t>(j) >= scores.rows)
          throw std::invalid_argument("pool_pi: positive set index out of range");
        sum += scores(static_cast<std::size_t>(j), k);
      }
      pooled[k] = sum / static_cast<double>(pk.size());
      record.members[k] = pk;
      record.mean_pooled[k] = 1;
    } else {
      pooled[k] = mx.values[k];
      record.argmax[k] = mx.indices[k];
    }
  }
  return pooled;
}

BackwardResult backward(const NetworkParams& params, const LayerSpec& spec,
                        const ForwardTrace& trace, const Vector& grad_bag_scores) {
  const std::size_t c = trace.scores.cols;
  const std::size_t m = trace.scores.rows;
  if (grad_bag_scores.size() != c)
    throw std::invalid_argument("backward: gradient length != label count");
  if (trace.pool.mean_pooled.size() != c)
    throw std::invalid_argument("backward: trace carries no pooling record");
  if (params.conv.size() != spec.layer_pairs || trace.hidden.cols != params.classify.weights.rows ||
      trace.relu_masks.size() != params.conv.size())
    throw std::invalid_argument("backward: stale trace (shape mismatch with params)");

  // pooling: route each label's gradient to the instances that produced it
  Matrix grad_scores(m, c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double g = grad_bag_scores[k];
    if (trace.pool.mean_pooled[k]) {
      const auto& members = trace.pool.members[k];
      const double share = g / static_cast<double>(members.size());
      for (int j : members) grad_scores(static_cast<std::size_t>(j), k) += share;
    } else {
      grad_scores(trace.pool.argmax[k], k) += g;
    }
  }

  BackwardResult result;
  result.grads.conv.resize(params.conv.size());

  result.grads.classify.weights = matmul(transpose(trace.hidden), grad_scores);
  result.grads.classify.bias = col_sums(grad_scores);
  Matrix grad_hidden = matmul(grad_scores, transpose(params.classify.weights));

  for (std::size_t l = params.conv.size(); l-- > 0;) {
    if (!trace.dropout_scale.empty()) {
      const Matrix& scale = trace.dropout_scale[l];
      for (std::size_t i = 0; i < grad_hidden.data.size(); ++i)
        grad_hidden.data[i] *= scale.data[i];
    }
    const std::vector<std::uint8_t>& mask = trace.relu_masks[l];
    if (mask.size() != grad_hidden.data.size())
      throw std::invalid_argument("backward: stale trace (mask size mismatch)");
    for (std::size_t i = 0; i < grad_hidden.data.size(); ++i)
      if (!mask[i]) grad_hidden.data[i] = 0.0;

    result.grads.conv[l].weights = matmul(transpose(trace.layer_inputs[l]), grad_hidden);
    result.grads.conv[l].bias = col_sums(grad_hidden);
    grad_hidden = matmul(grad_hidden, transpose(params.conv[l].weights));
  }
  result.input_grads = std::move(grad_hidden);
  return result;
}

}  // namespace miml
