#include "fairbat/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fairbat/ops.hpp"
#include "fairbat/rng.hpp"

namespace fairbat {

namespace {

const char kMagic[4] = {'F', 'B', 'M', '1'};

std::string kind_name(ModelKind k) {
  return k == ModelKind::Mlp ? "mlp" : "small_cnn";
}

ModelKind kind_from_name(const std::string& s) {
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "small_cnn") return ModelKind::SmallCnn;
  throw Error("model spec: unknown kind '" + s + "'");
}

Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
  float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = scale * static_cast<float>(rng.normal());
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

}  // namespace

void ModelSpec::validate() const {
  if (n_classes < 2) throw Error("model spec: n_classes must be >= 2");
  for (int h : hidden)
    if (h < 1) throw Error("model spec: zero-width layer");
  if (kind == ModelKind::Mlp) {
    if (input_shape.empty()) throw Error("model spec: mlp needs an input shape");
  } else {
    if (input_shape.size() != 3)
      throw Error("model spec: small_cnn input shape must be [C,H,W]");
    if (hidden.size() != 3)
      throw Error("model spec: small_cnn hidden must be {c1, c2, fc}");
    if (input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0)
      throw Error("model spec: small_cnn H and W must be divisible by 4");
  }
  for (int d : input_shape)
    if (d < 1) throw Error("model spec: non-positive input dim");
}

int64_t ModelSpec::input_numel() const {
  int64_t n = 1;
  for (int d : input_shape) n *= d;
  return n;
}

nlohmann::json ModelSpec::to_json() const {
  return {{"kind", kind_name(kind)},
          {"input_shape", input_shape},
          {"hidden", hidden},
          {"n_classes", n_classes}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.input_shape = j.at("input_shape").get<std::vector<int>>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.n_classes = j.at("n_classes").get<int>();
  s.validate();
  return s;
}

Model Model::detached() const {
  Model m;
  m.spec = spec;
  m.init_seed = init_seed;
  m.params.reserve(params.size());
  for (const auto& [name, p] : params) m.params.emplace_back(name, p.detached(false));
  return m;
}

Model init_model(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  m.init_seed = seed;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  if (spec.kind == ModelKind::Mlp) {
    int in = static_cast<int>(spec.input_numel());
    std::vector<int> widths = spec.hidden;
    widths.push_back(spec.n_classes);
    for (size_t i = 0; i < widths.size(); ++i) {
      int out = widths[i];
      std::string id = "fc" + std::to_string(i);
      m.params.emplace_back(id + ".w", init_weight({in, out}, in, rng));
      m.params.emplace_back(id + ".b", Tensor::zeros({out}, true));
      in = out;
    }
  } else {
    int C = spec.input_shape[0], H = spec.input_shape[1], W = spec.input_shape[2];
    int c1 = spec.hidden[0], c2 = spec.hidden[1], fc = spec.hidden[2];
    m.params.emplace_back("conv1.w", init_weight({c1, C, 3, 3}, C * 9, rng));
    m.params.emplace_back("conv1.b", Tensor::zeros({c1}, true));
    m.params.emplace_back("conv2.w", init_weight({c2, c1, 3, 3}, c1 * 9, rng));
    m.params.emplace_back("conv2.b", Tensor::zeros({c2}, true));
    int flat = c2 * (H / 4) * (W / 4);
    m.params.emplace_back("fc1.w", init_weight({flat, fc}, flat, rng));
    m.params.emplace_back("fc1.b", Tensor::zeros({fc}, true));
    m.params.emplace_back("fc2.w", init_weight({fc, spec.n_classes}, fc, rng));
    m.params.emplace_back("fc2.b", Tensor::zeros({spec.n_classes}, true));
  }
  return m;
}

Tensor logits(const Model& model, const Tensor& x) {
  const auto& spec = model.spec;
  std::vector<int> expect = spec.input_shape;
  expect.insert(expect.begin(), x.shape().empty() ? 0 : x.shape()[0]);
  if (x.shape() != expect)
    throw Error("logits: input shape " + shape_str(x.shape()) +
                " does not match spec " + shape_str(expect));

  auto param = [&](size_t i) -> const Tensor& { return model.params[i].second; };
  if (spec.kind == ModelKind::Mlp) {
    Tensor h = x.shape().size() > 2 ? flatten(x) : x;
    size_t n_layers = spec.hidden.size() + 1;
    for (size_t i = 0; i < n_layers; ++i) {
      h = add(matmul(h, param(2 * i)), param(2 * i + 1));
      if (i + 1 < n_layers) h = relu(h);
    }
    return h;
  }
  Tensor h = conv2d(x, param(0), param(1), 1);
  h = max_pool2d(relu(h), 2);
  h = conv2d(h, param(2), param(3), 1);
  h = max_pool2d(relu(h), 2);
  h = flatten(h);
  h = relu(add(matmul(h, param(4)), param(5)));
  return add(matmul(h, param(6)), param(7));
}

std::vector<int> predict(const Tensor& lg) {
  const auto& s = lg.shape();
  if (s.size() != 2) throw Error("predict: expected [batch,K], got " + shape_str(s));
  const int b = s[0], K = s[1];
  if (K < 2) throw Error("predict: K must be >= 2");
  std::vector<int> out(b);
  auto v = lg.data();
  for (int i = 0; i < b; ++i) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (v[i * K + k] > v[i * K + best]) best = k;
    out[i] = best;
  }
  return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  std::string spec = model.spec.to_json().dump();
  uint32_t len = static_cast<uint32_t>(spec.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(spec.data(), len);
  f.write(reinterpret_cast<const char*>(&model.init_seed), 8);
  for (const auto& [name, p] : model.params) {
    auto d = p.data();
    f.write(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(float));
  }
  if (!f) throw Error("checkpoint: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("checkpoint: bad magic in '" + path + "'");
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  std::string spec_str(len, '\0');
  f.read(spec_str.data(), len);
  if (!f) throw Error("checkpoint: truncated header in '" + path + "'");
  ModelSpec spec = ModelSpec::from_json(nlohmann::json::parse(spec_str));
  uint64_t seed = 0;
  f.read(reinterpret_cast<char*>(&seed), 8);

  // Parameter shapes are a pure function of the spec; rebuild and overwrite.
  Model m = init_model(spec, seed);
  for (auto& [name, p] : m.params) {
    auto d = p.mutable_data();
    f.read(reinterpret_cast<char*>(d.data()), d.size() * sizeof(float));
    if (!f) throw Error("checkpoint: truncated parameters in '" + path + "'");
  }
  f.peek();
  if (!f.eof()) throw Error("checkpoint: trailing bytes in '" + path + "'");
  return m;
}

}  // namespace fairbat
