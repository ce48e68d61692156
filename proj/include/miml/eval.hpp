#pragma once

#include <string>
#include <vector>

#include "miml/data.hpp"
#include "miml/training.hpp"

namespace miml {

struct MetricsReport {
  std::vector<double> per_class_ap;        // NaN where undefined
  std::vector<std::uint8_t> class_defined; // 0 when the class has no positive bag
  double mean_ap = 0.0;                    // over defined classes only
  Matrix scores;                           // bags x C prediction table
  std::size_t num_bags = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> positives_per_class;
};

// Test-time rule: loss stream forward plus max pooling; privileged data is
// never consulted.
Vector predict(const TrainedModel& model, const Bag& bag);

// All-points average precision over descending scores, ties broken by
// original index. labels are +-1; at least one positive required.
double average_precision(const Vector& scores, const std::vector<int>& labels);

MetricsReport evaluate(const TrainedModel& model, const Dataset& dataset,
                       std::size_t workers = 1);

void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_scores_csv(const MetricsReport& report, const Dataset& dataset,
                      const std::string& path);

}  // namespace miml
