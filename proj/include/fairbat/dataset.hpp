#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairbat/tensor.hpp"

namespace fairbat {

struct Dataset {
  std::vector<int> feature_shape;  // per-sample shape, e.g. [d] or [C,H,W]
  std::vector<float> features;     // N * prod(feature_shape), row-major, in [0,1]
  std::vector<int> labels;         // N entries in [0, n_classes)
  int n_classes = 0;
  // After filter_classes: label_mapping[new_label] == original label.
  std::vector<int> label_mapping;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t feature_dim() const;
  std::vector<int64_t> class_counts() const;
  void validate() const;
};

struct ClassSpec {
  std::vector<float> mean;
  float sigma = 1.0f;
  int count = 0;
};

struct MixtureSpec {
  int dim = 2;
  std::vector<ClassSpec> classes;

  void validate() const;
  nlohmann::json to_json() const;
  static MixtureSpec from_json(const nlohmann::json& j);
};

// Isotropic Gaussian blobs, rescaled into [0,1] by an affine map of the
// generation range [min(mean - 4 sigma), max(mean + 4 sigma)] (then clamped
// for the tails). Deterministic per seed; per-class counts are exact.
Dataset gen_mixture(const MixtureSpec& spec, uint64_t seed);

// Graded per-class spread plus one wide low-margin class, so robust-fairness
// disparity shows up at desk scale.
MixtureSpec fairness_stress_spec(int n_classes = 5, int per_class = 300);

// FTDS binary format: "FTDS", version byte, u32 ndim, u32 dims (dims[0] = N),
// u32 K, f32 features, u32 labels. All little-endian.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Drops the excluded classes and remaps the survivors to contiguous labels;
// the old labels are kept in label_mapping.
Dataset filter_classes(const Dataset& ds, const std::set<int>& exclude);

struct Batch {
  Tensor x;                      // [m, feature_shape...]
  std::vector<int> y;
  std::vector<int64_t> indices;  // dataset indices, for per-sample attack seeds
};

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& idx);

// Seeded permutation determined by (seed, epoch); the final short batch is
// included, and the union of batches is exactly the dataset.
std::vector<Batch> batches(const Dataset& ds, int batch_size, int epoch,
                           uint64_t seed);

}  // namespace fairbat
