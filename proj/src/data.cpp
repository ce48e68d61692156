#include "miml/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "miml/errors.hpp"
#include "miml/rng.hpp"

namespace miml {

using nlohmann::json;

std::size_t LabelVector::positive_count() const {
  std::size_t n = 0;
  for (int v : values) n += (v > 0);
  return n;
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: degenerate box");
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

PositiveSetsPI derive_positive_sets(const BoxesPI& pi, const LabelVector& labels,
                                    double threshold) {
  if (pi.gt_boxes.size() != labels.size())
    throw DataError("derive_positive_sets: gt_boxes count " + std::to_string(pi.gt_boxes.size()) +
                    " != num_labels " + std::to_string(labels.size()));
  PositiveSetsPI out;
  out.sets.resize(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 1) continue;
    if (pi.gt_boxes[k].empty())
      throw DataError("derive_positive_sets: positive label " + std::to_string(k) +
                      " has no ground-truth box");
    for (std::size_t j = 0; j < pi.proposal_boxes.size(); ++j) {
      double best = 0.0;
      for (const Box& gt : pi.gt_boxes[k]) best = std::max(best, iou(pi.proposal_boxes[j], gt));
      if (best >= threshold) out.sets[k].push_back(static_cast<int>(j));
    }
  }
  return out;
}

LabelVector bag_labels_from_instances(const std::vector<LabelVector>& instance_labels) {
  if (instance_labels.empty())
    throw std::invalid_argument("bag_labels_from_instances: empty instance list");
  const std::size_t c = instance_labels.front().size();
  LabelVector out;
  out.values.assign(c, -1);
  for (const LabelVector& l : instance_labels) {
    if (l.size() != c)
      throw std::invalid_argument("bag_labels_from_instances: inconsistent label length");
    for (std::size_t k = 0; k < c; ++k)
      if (l[k] > 0) out.values[k] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL ingestion

namespace {

const json& require_field(const json& j, const char* name, const std::string& ctx) {
  auto it = j.find(name);
  if (it == j.end()) throw DataError(ctx + "missing field '" + name + "'");
  return *it;
}

Matrix parse_instances(const json& arr, std::size_t want_cols, const char* field,
                       const std::string& ctx) {
  if (!arr.is_array() || arr.empty())
    throw DataError(ctx + "field '" + std::string(field) + "' must be a non-empty array of rows");
  Matrix m;
  m.rows = arr.size();
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& row = arr[i];
    if (!row.is_array())
      throw DataError(ctx + std::string(field) + "[" + std::to_string(i) + "] is not an array");
    if (i == 0) {
      m.cols = row.size();
      if (want_cols != 0 && m.cols != want_cols)
        throw DataError(ctx + std::string(field) + " row width " + std::to_string(m.cols) +
                        " != feature_dim " + std::to_string(want_cols));
      if (m.cols == 0) throw DataError(ctx + std::string(field) + " rows must be non-empty");
      m.data.reserve(m.rows * m.cols);
    } else if (row.size() != m.cols) {
      throw DataError(ctx + std::string(field) + "[" + std::to_string(i) + "] width " +
                      std::to_string(row.size()) + " != " + std::to_string(m.cols));
    }
    for (const json& v : row) {
      if (!v.is_number())
        throw DataError(ctx + std::string(field) + "[" + std::to_string(i) + "] has a non-number");
      const double x = v.get<double>();
      if (!std::isfinite(x))
        throw DataError(ctx + std::string(field) + "[" + std::to_string(i) + "] has a non-finite value");
      m.data.push_back(x);
    }
  }
  return m;
}

LabelVector parse_labels(const json& arr, std::size_t num_labels, const std::string& ctx) {
  if (!arr.is_array() || arr.size() != num_labels)
    throw DataError(ctx + "field 'labels' must be an array of length " +
                    std::to_string(num_labels));
  LabelVector labels;
  labels.values.reserve(num_labels);
  for (std::size_t k = 0; k < arr.size(); ++k) {
    if (!arr[k].is_number_integer())
      throw DataError(ctx + "labels[" + std::to_string(k) + "] must be an integer");
    const int v = arr[k].get<int>();
    if (v != 1 && v != -1)
      throw DataError(ctx + "labels[" + std::to_string(k) + "] must be -1 or +1, got " +
                      std::to_string(v));
    labels.values.push_back(v);
  }
  if (labels.positive_count() == 0) throw DataError(ctx + "labels has no positive entry");
  return labels;
}

Box parse_box(const json& arr, const char* field, const std::string& ctx) {
  if (!arr.is_array() || arr.size() != 4)
    throw DataError(ctx + std::string(field) + " entries must be [x1,y1,x2,y2]");
  for (const json& v : arr)
    if (!v.is_number()) throw DataError(ctx + std::string(field) + " has a non-number coordinate");
  Box b{arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(), arr[3].get<double>()};
  if (!b.valid()) throw DataError(ctx + std::string(field) + " has a degenerate box");
  return b;
}

PrivilegedBag parse_pi(const json& jpi, const Bag& bag, Dataset& ds, const std::string& ctx) {
  const std::string type = require_field(jpi, "type", ctx).get<std::string>();
  if (type == "features") {
    FeatureBagPI pi;
    pi.instances = parse_instances(require_field(jpi, "instances", ctx), 0, "pi.instances", ctx);
    if (ds.pi_feature_dim == 0) {
      ds.pi_feature_dim = pi.instances.cols;
    } else if (pi.instances.cols != ds.pi_feature_dim) {
      throw DataError(ctx + "pi.instances width " + std::to_string(pi.instances.cols) +
                      " != earlier privileged width " + std::to_string(ds.pi_feature_dim));
    }
    return pi;
  }
  if (type == "positive_sets") {
    const json& jsets = require_field(jpi, "sets", ctx);
    if (!jsets.is_array() || jsets.size() != ds.num_labels)
      throw DataError(ctx + "pi.sets must be an array of length " + std::to_string(ds.num_labels));
    PositiveSetsPI pi;
    pi.sets.resize(ds.num_labels);
    for (std::size_t k = 0; k < ds.num_labels; ++k) {
      if (!jsets[k].is_array())
        throw DataError(ctx + "pi.sets[" + std::to_string(k) + "] is not an array");
      for (const json& v : jsets[k]) {
        if (!v.is_number_integer())
          throw DataError(ctx + "pi.sets[" + std::to_string(k) + "] has a non-integer index");
        const int idx = v.get<int>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= bag.instances.rows)
          throw DataError(ctx + "pi.sets[" + std::to_string(k) + "] index " +
                          std::to_string(idx) + " out of range for " +
                          std::to_string(bag.instances.rows) + " instances");
        pi.sets[k].push_back(idx);
      }
      if (bag.labels[k] != 1 && !pi.sets[k].empty())
        throw DataError(ctx + "pi.sets[" + std::to_string(k) + "] nonempty for negative label");
    }
    return pi;
  }
  if (type == "boxes") {
    BoxesPI pi;
    const json& jp = require_field(jpi, "proposal_boxes", ctx);
    if (!jp.is_array() || jp.size() != bag.instances.rows)
      throw DataError(ctx + "pi.proposal_boxes must have one box per instance");
    for (const json& b : jp) pi.proposal_boxes.push_back(parse_box(b, "pi.proposal_boxes", ctx));
    const json& jg = require_field(jpi, "gt_boxes", ctx);
    if (!jg.is_array() || jg.size() != ds.num_labels)
      throw DataError(ctx + "pi.gt_boxes must be an array of length " +
                      std::to_string(ds.num_labels));
    pi.gt_boxes.resize(ds.num_labels);
    for (std::size_t k = 0; k < ds.num_labels; ++k) {
      if (!jg[k].is_array())
        throw DataError(ctx + "pi.gt_boxes[" + std::to_string(k) + "] is not an array");
      for (const json& b : jg[k]) pi.gt_boxes[k].push_back(parse_box(b, "pi.gt_boxes", ctx));
    }
    return pi;
  }
  throw DataError(ctx + "unknown pi type '" + type + "'");
}

json instances_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

json pi_to_json(const PrivilegedBag& pb) {
  json j;
  if (const auto* f = std::get_if<FeatureBagPI>(&pb)) {
    j["type"] = "features";
    j["instances"] = instances_to_json(f->instances);
  } else if (const auto* s = std::get_if<PositiveSetsPI>(&pb)) {
    j["type"] = "positive_sets";
    j["sets"] = s->sets;
  } else {
    const auto& b = std::get<BoxesPI>(pb);
    j["type"] = "boxes";
    json props = json::array();
    for (const Box& p : b.proposal_boxes) props.push_back(box_to_json(p));
    j["proposal_boxes"] = std::move(props);
    json gts = json::array();
    for (const auto& per_label : b.gt_boxes) {
      json lst = json::array();
      for (const Box& g : per_label) lst.push_back(box_to_json(g));
      gts.push_back(std::move(lst));
    }
    j["gt_boxes"] = std::move(gts);
  }
  return j;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  std::size_t lineno = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  auto parse_json_line = [&](const std::string& ctx) -> json {
    try {
      return json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(ctx + "invalid JSON: " + e.what());
    }
  };

  if (!next_line()) throw DataError(path + ": empty file, missing header line");
  std::string ctx = path + " line " + std::to_string(lineno) + ": ";
  const json header = parse_json_line(ctx);
  Dataset ds;
  {
    const json& nl = require_field(header, "num_labels", ctx);
    const json& fd = require_field(header, "feature_dim", ctx);
    if (!nl.is_number_integer() || nl.get<long>() < 1)
      throw DataError(ctx + "num_labels must be a positive integer");
    if (!fd.is_number_integer() || fd.get<long>() < 1)
      throw DataError(ctx + "feature_dim must be a positive integer");
    ds.num_labels = nl.get<std::size_t>();
    ds.feature_dim = fd.get<std::size_t>();
  }

  std::vector<PrivilegedBag> pis;
  bool with_pi = false;
  while (next_line()) {
    ctx = path + " line " + std::to_string(lineno) + ": ";
    const json j = parse_json_line(ctx);
    if (!j.is_object()) throw DataError(ctx + "bag record must be a JSON object");

    Bag bag;
    const json& jid = require_field(j, "id", ctx);
    if (!jid.is_string()) throw DataError(ctx + "field 'id' must be a string");
    bag.id = jid.get<std::string>();
    bag.instances = parse_instances(require_field(j, "instances", ctx), ds.feature_dim,
                                    "instances", ctx);
    bag.labels = parse_labels(require_field(j, "labels", ctx), ds.num_labels, ctx);

    const bool has_pi = j.contains("pi") && !j["pi"].is_null();
    if (ds.bags.empty()) {
      with_pi = has_pi;
    } else if (has_pi != with_pi) {
      throw DataError(ctx + "inconsistent pi presence across bags");
    }
    if (has_pi) pis.push_back(parse_pi(j["pi"], bag, ds, ctx));
    ds.bags.push_back(std::move(bag));
  }
  if (ds.bags.empty()) throw DataError(path + ": no bag records after header");
  if (with_pi) ds.pi = std::move(pis);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  if (ds.pi && ds.pi->size() != ds.bags.size())
    throw DataError("save_dataset: pi list length != bag count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  json header;
  header["num_labels"] = ds.num_labels;
  header["feature_dim"] = ds.feature_dim;
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    const Bag& bag = ds.bags[i];
    json j;
    j["id"] = bag.id;
    j["instances"] = instances_to_json(bag.instances);
    j["labels"] = bag.labels.values;
    j["pi"] = ds.pi ? pi_to_json((*ds.pi)[i]) : json(nullptr);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic generation

SyntheticData generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.num_labels < 1 || cfg.feature_dim < 1 || cfg.num_bags < 1)
    throw ConfigError("generate_synthetic: num_labels, feature_dim, num_bags must be >= 1");
  if (cfg.min_instances < 1 || cfg.min_instances > cfg.max_instances)
    throw ConfigError("generate_synthetic: need 1 <= min_instances <= max_instances");
  if (cfg.separation < 0.0 || cfg.noise_sigma < 0.0)
    throw ConfigError("generate_synthetic: separation and noise must be >= 0");
  if (cfg.background_fraction < 0.0 || cfg.background_fraction >= 1.0)
    throw ConfigError("generate_synthetic: background_fraction must be in [0, 1)");
  if (cfg.pi_noise < 0.0 || (cfg.pi != PiKind::features && cfg.pi_noise > 1.0))
    throw ConfigError("generate_synthetic: pi_noise must be in [0, 1] (rate) or >= 0 (sigma)");

  Rng rng(derive_seed(seed, "synth"));
  const std::size_t C = cfg.num_labels;
  const std::size_t d = cfg.feature_dim;
  const std::size_t pi_dim = cfg.pi_feature_dim ? cfg.pi_feature_dim : C;

  // class prototypes: random directions scaled to the separation radius
  std::vector<Vector> proto(C, Vector(d, 0.0));
  for (std::size_t k = 0; k < C; ++k) {
    double norm = 0.0;
    for (std::size_t t = 0; t < d; ++t) {
      proto[k][t] = rng.normal();
      norm += proto[k][t] * proto[k][t];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (std::size_t t = 0; t < d; ++t) proto[k][t] *= cfg.separation / norm;
  }

  SyntheticData out;
  Dataset& ds = out.dataset;
  ds.num_labels = C;
  ds.feature_dim = d;
  std::vector<PrivilegedBag> pis;

  for (std::size_t i = 0; i < cfg.num_bags; ++i) {
    const std::size_t m =
        cfg.min_instances + rng.uniform_int(cfg.max_instances - cfg.min_instances + 1);
    std::vector<int> latent(m);  // class index, -1 for background
    for (std::size_t j = 0; j < m; ++j) {
      latent[j] = rng.uniform() < cfg.background_fraction
                      ? -1
                      : static_cast<int>(rng.uniform_int(C));
    }
    // every training bag carries at least one label
    if (std::all_of(latent.begin(), latent.end(), [](int c) { return c < 0; }))
      latent[0] = static_cast<int>(rng.uniform_int(C));

    Bag bag;
    bag.id = "bag" + std::to_string(i);
    bag.instances = Matrix(m, d);
    std::vector<LabelVector> inst_labels(m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t t = 0; t < d; ++t) {
        const double base = latent[j] >= 0 ? proto[latent[j]][t] : 0.0;
        bag.instances(j, t) = base + cfg.noise_sigma * rng.normal();
      }
      inst_labels[j].values.assign(C, -1);
      if (latent[j] >= 0) inst_labels[j].values[latent[j]] = 1;
    }
    bag.labels = bag_labels_from_instances(inst_labels);

    if (cfg.pi == PiKind::positive_sets) {
      PositiveSetsPI pi;
      pi.sets.resize(C);
      for (std::size_t k = 0; k < C; ++k) {
        if (bag.labels[k] != 1) continue;
        std::set<int> uniq;
        for (std::size_t j = 0; j < m; ++j) {
          if (latent[j] != static_cast<int>(k)) continue;
          int idx = static_cast<int>(j);
          if (cfg.pi_noise > 0.0 && rng.uniform() < cfg.pi_noise)
            idx = static_cast<int>(rng.uniform_int(m));
          uniq.insert(idx);
        }
        pi.sets[k].assign(uniq.begin(), uniq.end());
      }
      pis.emplace_back(std::move(pi));
    } else if (cfg.pi == PiKind::features) {
      // one caption-style indicator row per positive label
      FeatureBagPI pi;
      pi.instances = Matrix(bag.labels.positive_count(), pi_dim);
      std::size_t row = 0;
      for (std::size_t k = 0; k < C; ++k) {
        if (bag.labels[k] != 1) continue;
        for (std::size_t t = 0; t < pi_dim; ++t)
          pi.instances(row, t) = (t == k % pi_dim ? 1.0 : 0.0) + cfg.pi_noise * rng.normal();
        ++row;
      }
      pis.emplace_back(std::move(pi));
      ds.pi_feature_dim = pi_dim;
    } else if (cfg.pi == PiKind::boxes) {
      // each class owns a 10x10 slot near y=0; background boxes live at y>=50,
      // so only same-class proposals can clear the 0.5 IoU bar
      BoxesPI pi;
      pi.gt_boxes.resize(C);
      for (std::size_t k = 0; k < C; ++k) {
        if (bag.labels[k] != 1) continue;
        const double x0 = 20.0 * static_cast<double>(k);
        pi.gt_boxes[k].push_back(Box{x0, 0.0, x0 + 10.0, 10.0});
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (latent[j] >= 0) {
          const double x0 = 20.0 * static_cast<double>(latent[j]);
          const double dx = rng.uniform(0.0, cfg.pi_noise);
          const double dy = rng.uniform(0.0, cfg.pi_noise);
          pi.proposal_boxes.push_back(Box{x0 + dx, dy, x0 + 10.0 + dx, 10.0 + dy});
        } else {
          const double x0 = 5.0 * static_cast<double>(j % 10);
          pi.proposal_boxes.push_back(Box{x0, 50.0, x0 + 10.0, 60.0});
        }
      }
      pis.emplace_back(std::move(pi));
    }

    ds.bags.push_back(std::move(bag));
    out.instance_labels.push_back(std::move(inst_labels));
  }
  if (cfg.pi != PiKind::none) ds.pi = std::move(pis);
  return out;
}

void save_latents(const SyntheticData& synth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write latent file: " + path);
  for (std::size_t i = 0; i < synth.dataset.bags.size(); ++i) {
    json j;
    j["id"] = synth.dataset.bags[i].id;
    json rows = json::array();
    for (const LabelVector& l : synth.instance_labels[i]) rows.push_back(l.values);
    j["instance_labels"] = std::move(rows);
    out << j.dump() << "\n";
  }
}

Dataset subset_dataset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.num_labels = ds.num_labels;
  out.feature_dim = ds.feature_dim;
  out.pi_feature_dim = ds.pi_feature_dim;
  if (ds.pi) out.pi.emplace();
  for (std::size_t idx : indices) {
    if (idx >= ds.bags.size()) throw std::invalid_argument("subset_dataset: index out of range");
    out.bags.push_back(ds.bags[idx]);
    if (ds.pi) out.pi->push_back((*ds.pi)[idx]);
  }
  return out;
}

Dataset strip_pi(const Dataset& ds) {
  Dataset out = ds;
  out.pi.reset();
  out.pi_feature_dim = 0;
  return out;
}

}  // namespace miml
