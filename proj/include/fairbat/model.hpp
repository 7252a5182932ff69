#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairbat/tensor.hpp"

namespace fairbat {

enum class ModelKind { Mlp, SmallCnn };

struct ModelSpec {
  ModelKind kind = ModelKind::Mlp;
  std::vector<int> input_shape;  // [d] for mlp, [C,H,W] for small_cnn
  // mlp: hidden layer widths; small_cnn: {conv1 channels, conv2 channels, fc width}
  std::vector<int> hidden;
  int n_classes = 2;

  void validate() const;
  int64_t input_numel() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct Model {
  ModelSpec spec;
  std::vector<std::pair<std::string, Tensor>> params;
  uint64_t init_seed = 0;

  // Same spec, params sharing storage but cut off from autodiff. Used by
  // attacks so backward never touches parameter grads (keeps parallel
  // per-sample attacks race-free).
  Model detached() const;
};

// Kaiming fan-in init for weights (std sqrt(2/fan_in)), zero biases.
// Identical seed gives bit-identical parameters.
Model init_model(const ModelSpec& spec, uint64_t seed);

// x: [batch, d] for mlp, [batch, C, H, W] for small_cnn -> [batch, K]
Tensor logits(const Model& model, const Tensor& x);

// Per-row argmax; ties broken by lowest class index.
std::vector<int> predict(const Tensor& logits);

// "FBM1" header, canonical-JSON spec, seed, then raw little-endian f32
// parameter arrays in declaration order.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace fairbat
