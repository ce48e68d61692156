#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "miml/errors.hpp"
#include "miml/training.hpp"

namespace miml {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
  Matrix m;
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols)
    throw DataError("checkpoint: matrix data length != rows * cols");
  return m;
}

json layer_to_json(const DenseLayer& l) {
  return json{{"weights", matrix_to_json(l.weights)}, {"bias", l.bias}};
}

DenseLayer layer_from_json(const json& j) {
  DenseLayer l;
  l.weights = matrix_from_json(j.at("weights"));
  l.bias = j.at("bias").get<Vector>();
  return l;
}

json params_to_json(const NetworkParams& p) {
  json conv = json::array();
  for (const DenseLayer& l : p.conv) conv.push_back(layer_to_json(l));
  return json{{"conv", std::move(conv)}, {"classify", layer_to_json(p.classify)}};
}

NetworkParams params_from_json(const json& j) {
  NetworkParams p;
  for (const json& l : j.at("conv")) p.conv.push_back(layer_from_json(l));
  p.classify = layer_from_json(j.at("classify"));
  return p;
}

json spec_to_json(const LayerSpec& s) {
  return json{{"layer_pairs", s.layer_pairs},
              {"hidden_width", s.hidden_width},
              {"input_dim", s.input_dim},
              {"num_labels", s.num_labels},
              {"input_mode", s.input_mode == InputMode::flat ? "flat" : "graph"},
              {"graph_k", s.graph_k},
              {"pooling", s.pooling == Pooling::global_max ? "global_max" : "pi_pool"},
              {"dropout_rate", s.dropout_rate}};
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  s.layer_pairs = j.at("layer_pairs").get<std::size_t>();
  s.hidden_width = j.at("hidden_width").get<std::size_t>();
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.num_labels = j.at("num_labels").get<std::size_t>();
  const std::string mode = j.at("input_mode").get<std::string>();
  if (mode != "flat" && mode != "graph") throw DataError("checkpoint: bad input_mode " + mode);
  s.input_mode = mode == "flat" ? InputMode::flat : InputMode::graph;
  s.graph_k = j.at("graph_k").get<std::size_t>();
  const std::string pool = j.at("pooling").get<std::string>();
  if (pool != "global_max" && pool != "pi_pool") throw DataError("checkpoint: bad pooling " + pool);
  s.pooling = pool == "global_max" ? Pooling::global_max : Pooling::pi_pool;
  s.dropout_rate = j.at("dropout_rate").get<double>();
  validate_spec(s);
  return s;
}

json config_to_json(const TrainConfig& c) {
  json j{{"loss_kind", c.loss_kind == LossKind::square ? "square" : "ranking"},
         {"lambda", c.lambda},
         {"lr", c.lr},
         {"momentum", c.momentum},
         {"epochs_per_phase", c.epochs_per_phase},
         {"outer_rounds", c.outer_rounds},
         {"phase_tol", c.phase_tol},
         {"seed", c.seed},
         {"slack_mode", c.slack_mode == SlackMode::per_label ? "per_label" : "scalar"},
         {"dropout", c.dropout},
         {"lr_decay", c.lr_decay},
         {"grad_clip", c.grad_clip},
         {"warp", c.warp},
         {"hidden_width", c.hidden_width},
         {"layer_pairs", c.layer_pairs}};
  j["graph"] = c.graph ? json{{"k", c.graph->k}, {"exclude_self", c.graph->exclude_self}}
                       : json(nullptr);
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  const std::string kind = j.at("loss_kind").get<std::string>();
  if (kind != "square" && kind != "ranking") throw DataError("checkpoint: bad loss_kind " + kind);
  c.loss_kind = kind == "square" ? LossKind::square : LossKind::ranking;
  c.lambda = j.at("lambda").get<double>();
  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.epochs_per_phase = j.at("epochs_per_phase").get<std::size_t>();
  c.outer_rounds = j.at("outer_rounds").get<std::size_t>();
  c.phase_tol = j.at("phase_tol").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const std::string mode = j.at("slack_mode").get<std::string>();
  if (mode != "per_label" && mode != "scalar")
    throw DataError("checkpoint: bad slack_mode " + mode);
  c.slack_mode = mode == "per_label" ? SlackMode::per_label : SlackMode::scalar;
  c.dropout = j.at("dropout").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.warp = j.at("warp").get<bool>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.layer_pairs = j.at("layer_pairs").get<std::size_t>();
  if (!j.at("graph").is_null()) {
    GraphConfig g;
    g.k = j.at("graph").at("k").get<std::size_t>();
    g.exclude_self = j.at("graph").at("exclude_self").get<bool>();
    c.graph = g;
  }
  return c;
}

json record_to_json(const EpochRecord& r) {
  return json{{"round", r.round},
              {"phase", r.phase == StreamId::loss ? "loss" : "slack"},
              {"epoch", r.epoch},
              {"mean_objective", r.mean_objective},
              {"mean_base", r.mean_base},
              {"mean_pi", r.mean_pi}};
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.round = j.at("round").get<std::size_t>();
  const std::string phase = j.at("phase").get<std::string>();
  if (phase != "loss" && phase != "slack") throw DataError("checkpoint: bad phase " + phase);
  r.phase = phase == "loss" ? StreamId::loss : StreamId::slack;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.mean_objective = j.at("mean_objective").get<double>();
  r.mean_base = j.at("mean_base").get<double>();
  r.mean_pi = j.at("mean_pi").get<double>();
  return r;
}

void check_params_match(const LayerSpec& spec, const NetworkParams& p, const char* stream) {
  auto fail = [&](const std::string& what) {
    throw DataError("checkpoint: " + std::string(stream) + " stream " + what);
  };
  if (p.conv.size() != spec.layer_pairs) fail("conv layer count != spec");
  std::size_t in = spec.first_layer_inputs();
  for (const DenseLayer& l : p.conv) {
    if (l.weights.rows != in || l.weights.cols != spec.hidden_width ||
        l.bias.size() != spec.hidden_width)
      fail("conv layer shape mismatch");
    in = spec.hidden_width;
  }
  if (p.classify.weights.rows != spec.classify_inputs() ||
      p.classify.weights.cols != spec.num_labels || p.classify.bias.size() != spec.num_labels)
    fail("classification layer shape mismatch");
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  json j;
  j["format"] = "miml-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(state.config);
  j["loss_spec"] = spec_to_json(state.model.loss_spec);
  j["loss_params"] = params_to_json(state.model.loss_params);
  j["loss_velocity"] = params_to_json(state.loss_velocity);
  j["slack_spec"] = state.model.slack_spec ? spec_to_json(*state.model.slack_spec) : json(nullptr);
  j["slack_params"] =
      state.model.slack_params ? params_to_json(*state.model.slack_params) : json(nullptr);
  j["slack_velocity"] =
      state.slack_velocity ? params_to_json(*state.slack_velocity) : json(nullptr);
  json hist = json::array();
  for (const EpochRecord& r : state.model.history) hist.push_back(record_to_json(r));
  j["history"] = std::move(hist);
  j["rounds_done"] = state.rounds_done;
  j["best_objective"] = state.best_objective;
  j["has_best"] = state.has_best;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
  if (!out) throw DataError("write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": invalid JSON: " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "miml-checkpoint")
      throw DataError("checkpoint " + path + ": not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw DataError("checkpoint " + path + ": unsupported version");
    TrainState state;
    state.config = config_from_json(j.at("config"));
    state.model.loss_spec = spec_from_json(j.at("loss_spec"));
    state.model.loss_params = params_from_json(j.at("loss_params"));
    state.loss_velocity = params_from_json(j.at("loss_velocity"));
    check_params_match(state.model.loss_spec, state.model.loss_params, "loss");
    check_params_match(state.model.loss_spec, state.loss_velocity, "loss");
    if (!j.at("slack_spec").is_null()) {
      state.model.slack_spec = spec_from_json(j.at("slack_spec"));
      state.model.slack_params = params_from_json(j.at("slack_params"));
      state.slack_velocity = params_from_json(j.at("slack_velocity"));
      check_params_match(*state.model.slack_spec, *state.model.slack_params, "slack");
      check_params_match(*state.model.slack_spec, *state.slack_velocity, "slack");
    }
    for (const json& r : j.at("history")) state.model.history.push_back(record_from_json(r));
    state.rounds_done = j.at("rounds_done").get<std::size_t>();
    state.best_objective = j.at("best_objective").get<double>();
    state.has_best = j.at("has_best").get<bool>();
    return state;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write history: " + path);
  out << "round,phase,epoch,stream,mean_objective,mean_base,mean_pi_term\n";
  char buf[128];
  for (const EpochRecord& r : history) {
    const char* stream = r.phase == StreamId::loss ? "loss" : "slack";
    std::snprintf(buf, sizeof(buf), "%zu,%s,%zu,%s,%.17g,%.17g,%.17g\n", r.round, stream, r.epoch,
                  stream, r.mean_objective, r.mean_base, r.mean_pi);
    out << buf;
  }
}

}  // namespace miml
