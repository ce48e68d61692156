#include "miml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "miml/errors.hpp"
#include "miml/graph.hpp"

namespace miml {

Vector predict(const TrainedModel& model, const Bag& bag) {
  const LayerSpec& spec = model.loss_spec;
  if (bag.instances.cols != spec.input_dim)
    throw DataError("predict: bag feature dim " + std::to_string(bag.instances.cols) +
                    " != model input dim " + std::to_string(spec.input_dim));
  ForwardTrace trace;
  if (spec.input_mode == InputMode::graph) {
    NeighborGraph g = knn_graph_clamped(bag.instances, spec.graph_k);
    trace = forward_instances(model.loss_params, spec, neighborhood_tensor(bag.instances, g));
  } else {
    trace = forward_instances(model.loss_params, spec, bag);
  }
  return pool_max(trace.scores, trace.pool);
}

double average_precision(const Vector& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: score / label length mismatch");
  std::size_t positives = 0;
  for (int l : labels) positives += (l == 1);
  if (positives == 0)
    throw std::invalid_argument("average_precision: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 1) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(positives);
}

MetricsReport evaluate(const TrainedModel& model, const Dataset& dataset, std::size_t workers) {
  if (dataset.bags.empty()) throw DataError("evaluate: empty dataset");
  const std::size_t n = dataset.bags.size();
  const std::size_t c = dataset.num_labels;

  MetricsReport report;
  report.num_bags = n;
  report.num_classes = c;
  report.scores = Matrix(n, c);

  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Vector s = predict(model, dataset.bags[i]);
      std::copy(s.begin(), s.end(), report.scores.row(i));
    }
  };
  if (workers <= 1 || n < 2) {
    score_range(0, n);
  } else {
    const std::size_t nthreads = std::min(workers, n);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back(score_range, t * chunk, std::min(n, (t + 1) * chunk));
    for (std::thread& th : pool) th.join();
  }

  report.per_class_ap.assign(c, std::numeric_limits<double>::quiet_NaN());
  report.class_defined.assign(c, 0);
  report.positives_per_class.assign(c, 0);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < c; ++k) {
    Vector col(n);
    std::vector<int> lab(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = report.scores(i, k);
      lab[i] = dataset.bags[i].labels[k];
      pos += (lab[i] == 1);
    }
    report.positives_per_class[k] = pos;
    if (pos == 0) continue;  // class absent from this split, excluded from mAP
    report.per_class_ap[k] = average_precision(col, lab);
    report.class_defined[k] = 1;
    sum += report.per_class_ap[k];
    ++defined;
  }
  if (defined == 0) throw DataError("evaluate: no class has a positive bag");
  report.mean_ap = sum / static_cast<double>(defined);
  return report;
}

void write_metrics_json(const MetricsReport& report, const std::string& path) {
  nlohmann::json j;
  nlohmann::json aps = nlohmann::json::array();
  for (std::size_t k = 0; k < report.num_classes; ++k)
    aps.push_back(report.class_defined[k] ? nlohmann::json(report.per_class_ap[k])
                                          : nlohmann::json(nullptr));
  j["per_class_ap"] = std::move(aps);
  j["mean_ap"] = report.mean_ap;
  j["num_bags"] = report.num_bags;
  j["num_classes"] = report.num_classes;
  j["positives_per_class"] = report.positives_per_class;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << j.dump(2) << "\n";
}

void write_scores_csv(const MetricsReport& report, const Dataset& dataset,
                      const std::string& path) {
  if (dataset.bags.size() != report.num_bags)
    throw std::invalid_argument("write_scores_csv: report does not match dataset");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scores: " + path);
  out << "id";
  for (std::size_t k = 0; k < report.num_classes; ++k) out << ",score_" << k;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < report.num_bags; ++i) {
    out << dataset.bags[i].id;
    for (std::size_t k = 0; k < report.num_classes; ++k) {
      std::snprintf(buf, sizeof(buf), ",%.17g", report.scores(i, k));
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace miml
