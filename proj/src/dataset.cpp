#include "fairbat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "fairbat/rng.hpp"

namespace fairbat {

namespace {
const char kMagic[4] = {'F', 'T', 'D', 'S'};
const uint8_t kVersion = 1;
}  // namespace

int64_t Dataset::feature_dim() const {
  int64_t n = 1;
  for (int d : feature_shape) n *= d;
  return n;
}

std::vector<int64_t> Dataset::class_counts() const {
  std::vector<int64_t> counts(n_classes, 0);
  for (int y : labels) counts[y]++;
  return counts;
}

void Dataset::validate() const {
  if (labels.empty()) throw Error("dataset: empty");
  if (n_classes < 1) throw Error("dataset: n_classes must be >= 1");
  if (static_cast<int64_t>(features.size()) != size() * feature_dim())
    throw Error("dataset: feature buffer does not match N x feature shape");
  for (int y : labels)
    if (y < 0 || y >= n_classes) throw Error("dataset: label out of range");
}

void MixtureSpec::validate() const {
  if (dim < 1) throw Error("mixture spec: dim must be >= 1");
  if (classes.empty()) throw Error("mixture spec: no classes");
  for (const auto& c : classes) {
    if (static_cast<int>(c.mean.size()) != dim)
      throw Error("mixture spec: mean length does not match dim");
    if (!(c.sigma > 0.0f)) throw Error("mixture spec: sigma must be positive");
    if (c.count < 1) throw Error("mixture spec: count must be >= 1");
  }
}

nlohmann::json MixtureSpec::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes)
    cls.push_back({{"mean", c.mean}, {"sigma", c.sigma}, {"count", c.count}});
  return {{"dim", dim}, {"classes", cls}};
}

MixtureSpec MixtureSpec::from_json(const nlohmann::json& j) {
  MixtureSpec s;
  s.dim = j.at("dim").get<int>();
  for (const auto& c : j.at("classes")) {
    ClassSpec cs;
    cs.mean = c.at("mean").get<std::vector<float>>();
    cs.sigma = c.at("sigma").get<float>();
    cs.count = c.at("count").get<int>();
    s.classes.push_back(std::move(cs));
  }
  s.validate();
  return s;
}

Dataset gen_mixture(const MixtureSpec& spec, uint64_t seed) {
  spec.validate();
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (const auto& c : spec.classes)
    for (float m : c.mean) {
      lo = std::min(lo, m - 4.0f * c.sigma);
      hi = std::max(hi, m + 4.0f * c.sigma);
    }
  if (!(hi - lo > 1e-9f)) throw Error("gen_mixture: degenerate rescale range");
  const float scale = 1.0f / (hi - lo);

  Dataset ds;
  ds.feature_shape = {spec.dim};
  ds.n_classes = static_cast<int>(spec.classes.size());
  Rng rng(mix_seed(seed, 0x676d6978ULL));
  for (int k = 0; k < ds.n_classes; ++k) {
    const auto& c = spec.classes[k];
    for (int i = 0; i < c.count; ++i) {
      for (int j = 0; j < spec.dim; ++j) {
        float v = c.mean[j] + c.sigma * static_cast<float>(rng.normal());
        ds.features.push_back(std::clamp((v - lo) * scale, 0.0f, 1.0f));
      }
      ds.labels.push_back(k);
    }
  }
  return ds;
}

MixtureSpec fairness_stress_spec(int n_classes, int per_class) {
  if (n_classes < 3) throw Error("fairness_stress_spec: need >= 3 classes");
  MixtureSpec spec;
  spec.dim = 2;
  const double tau = 2.0 * 3.14159265358979323846;
  for (int k = 0; k < n_classes; ++k) {
    ClassSpec c;
    double angle = tau * k / n_classes;
    // Last class: wide and pulled toward the center, so its margin to every
    // neighbor is small. The rest get gently graded spreads.
    bool hard = (k == n_classes - 1);
    double radius = hard ? 1.6 : 3.0;
    c.mean = {static_cast<float>(radius * std::cos(angle)),
              static_cast<float>(radius * std::sin(angle))};
    c.sigma = hard ? 0.95f : (0.22f + 0.11f * static_cast<float>(k));
    c.count = per_class;
    spec.classes.push_back(std::move(c));
  }
  return spec;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("dataset: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(&kVersion), 1);
  uint32_t ndim = static_cast<uint32_t>(ds.feature_shape.size() + 1);
  f.write(reinterpret_cast<const char*>(&ndim), 4);
  uint32_t n = static_cast<uint32_t>(ds.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (int d : ds.feature_shape) {
    uint32_t v = static_cast<uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  uint32_t k = static_cast<uint32_t>(ds.n_classes);
  f.write(reinterpret_cast<const char*>(&k), 4);
  f.write(reinterpret_cast<const char*>(ds.features.data()),
          ds.features.size() * sizeof(float));
  for (int y : ds.labels) {
    uint32_t v = static_cast<uint32_t>(y);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  if (!f) throw Error("dataset: write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("dataset: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("dataset: bad magic in '" + path + "'");
  uint8_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 1);
  if (!f || version != kVersion)
    throw Error("dataset: unsupported version in '" + path + "'");
  uint32_t ndim = 0;
  f.read(reinterpret_cast<char*>(&ndim), 4);
  if (!f || ndim < 2 || ndim > 8)
    throw Error("dataset: bad rank in '" + path + "'");
  std::vector<uint32_t> dims(ndim);
  f.read(reinterpret_cast<char*>(dims.data()), 4 * ndim);
  uint32_t K = 0;
  f.read(reinterpret_cast<char*>(&K), 4);
  if (!f) throw Error("dataset: truncated file '" + path + "'");

  Dataset ds;
  ds.n_classes = static_cast<int>(K);
  int64_t n = dims[0];
  int64_t per = 1;
  for (uint32_t i = 1; i < ndim; ++i) {
    ds.feature_shape.push_back(static_cast<int>(dims[i]));
    per *= dims[i];
  }
  ds.features.resize(n * per);
  f.read(reinterpret_cast<char*>(ds.features.data()),
         ds.features.size() * sizeof(float));
  std::vector<uint32_t> raw(n);
  f.read(reinterpret_cast<char*>(raw.data()), 4 * n);
  if (!f) throw Error("dataset: truncated file '" + path + "'");
  for (uint32_t y : raw) {
    if (y >= K) throw Error("dataset: label out of range in '" + path + "'");
    ds.labels.push_back(static_cast<int>(y));
  }
  ds.validate();
  return ds;
}

Dataset filter_classes(const Dataset& ds, const std::set<int>& exclude) {
  ds.validate();
  for (int c : exclude)
    if (c < 0 || c >= ds.n_classes)
      throw Error("filter_classes: class " + std::to_string(c) + " out of range");
  if (static_cast<int>(exclude.size()) >= ds.n_classes)
    throw Error("filter_classes: cannot exclude every class");
  if (exclude.empty()) return ds;

  std::vector<int> old_to_new(ds.n_classes, -1);
  Dataset out;
  out.feature_shape = ds.feature_shape;
  for (int c = 0; c < ds.n_classes; ++c) {
    if (exclude.count(c)) continue;
    old_to_new[c] = static_cast<int>(out.label_mapping.size());
    out.label_mapping.push_back(c);
  }
  out.n_classes = static_cast<int>(out.label_mapping.size());
  int64_t per = ds.feature_dim();
  for (int64_t i = 0; i < ds.size(); ++i) {
    int y = old_to_new[ds.labels[i]];
    if (y < 0) continue;
    out.labels.push_back(y);
    out.features.insert(out.features.end(), ds.features.begin() + i * per,
                        ds.features.begin() + (i + 1) * per);
  }
  return out;
}

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& idx) {
  Batch b;
  b.indices = idx;
  int64_t per = ds.feature_dim();
  std::vector<float> values;
  values.reserve(idx.size() * per);
  for (int64_t i : idx) {
    values.insert(values.end(), ds.features.begin() + i * per,
                  ds.features.begin() + (i + 1) * per);
    b.y.push_back(ds.labels[i]);
  }
  std::vector<int> shape = ds.feature_shape;
  shape.insert(shape.begin(), static_cast<int>(idx.size()));
  b.x = Tensor::from_data(std::move(shape), std::move(values));
  return b;
}

std::vector<Batch> batches(const Dataset& ds, int batch_size, int epoch,
                           uint64_t seed) {
  if (batch_size < 1) throw Error("batches: batch size must be >= 1");
  ds.validate();
  std::vector<int64_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, static_cast<uint64_t>(epoch), 0x7368756646ULL));
  for (int64_t i = ds.size() - 1; i > 0; --i) {
    int64_t j = static_cast<int64_t>(rng.below(static_cast<uint64_t>(i + 1)));
    std::swap(perm[i], perm[j]);
  }
  std::vector<Batch> out;
  for (int64_t start = 0; start < ds.size(); start += batch_size) {
    int64_t end = std::min<int64_t>(ds.size(), start + batch_size);
    out.push_back(make_batch(
        ds, std::vector<int64_t>(perm.begin() + start, perm.begin() + end)));
  }
  return out;
}

}  // namespace fairbat
