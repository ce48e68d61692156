#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "miml/matrix.hpp"

namespace miml {

// Bag labels live in {-1, +1}; the sign convention keeps the square loss
// against F(X) direct.
struct LabelVector {
  std::vector<int> values;

  std::size_t size() const { return values.size(); }
  int operator[](std::size_t k) const { return values[k]; }
  std::size_t positive_count() const;
  std::size_t negative_count() const { return values.size() - positive_count(); }

  friend bool operator==(const LabelVector& a, const LabelVector& b) {
    return a.values == b.values;
  }
};

// Axis-aligned box (x1, y1, x2, y2) with x2 > x1, y2 > y1.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool valid() const { return x2 > x1 && y2 > y1; }
  double area() const { return (x2 - x1) * (y2 - y1); }
  friend bool operator==(const Box&, const Box&) = default;
};

struct Bag {
  std::string id;
  Matrix instances;  // m_i x d
  LabelVector labels;
  friend bool operator==(const Bag&, const Bag&) = default;
};

// Training-only side information, one of three shapes.
struct FeatureBagPI {
  Matrix instances;  // m*_i x d*, d* may differ from d
  friend bool operator==(const FeatureBagPI&, const FeatureBagPI&) = default;
};

struct PositiveSetsPI {
  // sets[k] lists instance indices into the paired bag; empty for labels
  // with Y(k) = -1
  std::vector<std::vector<int>> sets;
  friend bool operator==(const PositiveSetsPI&, const PositiveSetsPI&) = default;
};

struct BoxesPI {
  std::vector<Box> proposal_boxes;            // one per instance
  std::vector<std::vector<Box>> gt_boxes;     // per label
  friend bool operator==(const BoxesPI&, const BoxesPI&) = default;
};

using PrivilegedBag = std::variant<FeatureBagPI, PositiveSetsPI, BoxesPI>;

struct Dataset {
  std::vector<Bag> bags;
  std::optional<std::vector<PrivilegedBag>> pi;  // parallel to bags when present
  std::size_t num_labels = 0;
  std::size_t feature_dim = 0;
  std::size_t pi_feature_dim = 0;  // width of FeatureBagPI instances, 0 if none

  bool has_pi() const { return pi.has_value(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// JSONL ingestion; header line carries num_labels / feature_dim, then one bag
// per line. Malformed records raise DataError naming the line and field.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

// intersection area / union area, 0 when disjoint
double iou(const Box& a, const Box& b);

// P_k = { j : max over gt boxes of class k of iou(proposal_j, gt) >= threshold }
// for positive labels; empty sets for negative labels. The threshold is
// inclusive and defaults to 0.5.
PositiveSetsPI derive_positive_sets(const BoxesPI& pi, const LabelVector& labels,
                                    double threshold = 0.5);

// Per-dimension max over instance label vectors.
LabelVector bag_labels_from_instances(const std::vector<LabelVector>& instance_labels);

enum class PiKind { none, positive_sets, features, boxes };

struct SynthConfig {
  std::size_t num_labels = 5;
  std::size_t feature_dim = 16;
  std::size_t num_bags = 100;
  std::size_t min_instances = 5;
  std::size_t max_instances = 15;
  double separation = 4.0;          // prototype norm
  double noise_sigma = 0.0;         // feature noise
  double background_fraction = 0.0; // instances carrying no label
  PiKind pi = PiKind::none;
  double pi_noise = 0.0;            // corruption rate / jitter for PI
  std::size_t pi_feature_dim = 0;   // caption-style PI width; 0 = num_labels
};

struct SyntheticData {
  Dataset dataset;
  // latent per-instance labels, never fed to training; sidecar material
  std::vector<std::vector<LabelVector>> instance_labels;
};

SyntheticData generate_synthetic(const SynthConfig& config, std::uint64_t seed);

// Sidecar latent file: one line per bag, {"id", "instance_labels"}.
void save_latents(const SyntheticData& synth, const std::string& path);

// Bags (and parallel PI) selected by index; shares num_labels/feature dims.
Dataset subset_dataset(const Dataset& ds, const std::vector<std::size_t>& indices);
Dataset strip_pi(const Dataset& ds);

}  // namespace miml
