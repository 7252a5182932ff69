#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fairbat/dataset.hpp"

using namespace fairbat;

namespace {

MixtureSpec two_blobs(int count, float sigma = 0.5f) {
  MixtureSpec spec;
  spec.dim = 2;
  spec.classes.push_back({{-2.0f, 0.0f}, sigma, count});
  spec.classes.push_back({{2.0f, 0.0f}, sigma, count});
  return spec;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("gen_mixture produces exact per-class counts") {
  Dataset ds = gen_mixture(two_blobs(100), 1);
  CHECK(ds.size() == 200);
  CHECK(ds.n_classes == 2);
  auto counts = ds.class_counts();
  CHECK(counts[0] == 100);
  CHECK(counts[1] == 100);
  for (float v : ds.features) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("gen_mixture is deterministic per seed") {
  Dataset a = gen_mixture(two_blobs(50), 9);
  Dataset b = gen_mixture(two_blobs(50), 9);
  Dataset c = gen_mixture(two_blobs(50), 10);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.features != c.features);
}

TEST_CASE("class-0 empirical mean lands within the CLT bound") {
  // Means map through the affine rescale: range is [-2-4*0.5, 2+4*0.5] =
  // [-4, 4], so class 0's mean (-2, 0) maps to (0.25, 0.5) and sigma to
  // 0.5/8 = 0.0625 in rescaled units.
  const int n = 10000;
  Dataset ds = gen_mixture(two_blobs(n), 4);
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != 0) continue;
    mx += ds.features[2 * i];
    my += ds.features[2 * i + 1];
  }
  mx /= n;
  my /= n;
  double bound = 3.0 * 0.0625 / std::sqrt(static_cast<double>(n));
  CHECK(std::fabs(mx - 0.25) < bound);
  CHECK(std::fabs(my - 0.5) < bound);
}

TEST_CASE("degenerate rescale range is rejected") {
  MixtureSpec spec;
  spec.dim = 1;
  // With sigma -> 0 forbidden by validate; a single point mass collapses the
  // range only via invalid sigma, so check validate directly.
  spec.classes.push_back({{0.0f}, 0.0f, 5});
  CHECK_THROWS_AS(gen_mixture(spec, 0), Error);
}

TEST_CASE("dataset round trips through FTDS bit-exactly") {
  Dataset ds = gen_mixture(two_blobs(25), 3);
  std::string path = temp_path("fairbat_ds_test.ftds");
  save_dataset(ds, path);
  Dataset back = load_dataset(path);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.n_classes == ds.n_classes);
  CHECK(back.feature_shape == ds.feature_shape);
  std::remove(path.c_str());
}

TEST_CASE("FTDS loader rejects malformed files") {
  std::string path = temp_path("fairbat_ds_bad.ftds");
  Dataset ds = gen_mixture(two_blobs(4), 1);
  save_dataset(ds, path);

  SUBCASE("corrupted magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
    f.close();
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("bad magic"),
                         Error);
  }
  SUBCASE("truncated") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("truncated"),
                         Error);
  }
  SUBCASE("label out of range") {
    // Labels are trailing u32s; overwrite the last one with K.
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-4, std::ios::end);
    uint32_t bad = 2;
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CHECK_THROWS_WITH_AS(load_dataset(path),
                         doctest::Contains("label out of range"), Error);
  }
  std::remove(path.c_str());
}

TEST_CASE("filter_classes remaps ten classes minus {2,3,4,5}") {
  MixtureSpec spec;
  spec.dim = 2;
  for (int k = 0; k < 10; ++k)
    spec.classes.push_back({{static_cast<float>(k), 0.0f}, 0.3f, 10});
  Dataset ds = gen_mixture(spec, 2);
  Dataset out = filter_classes(ds, {2, 3, 4, 5});
  CHECK(out.n_classes == 6);
  CHECK(out.size() == 60);
  CHECK(out.label_mapping == std::vector<int>{0, 1, 6, 7, 8, 9});
  auto counts = out.class_counts();
  for (int64_t c : counts) CHECK(c == 10);
}

TEST_CASE("filtering nothing returns an identical dataset") {
  Dataset ds = gen_mixture(two_blobs(10), 5);
  Dataset out = filter_classes(ds, {});
  CHECK(out.features == ds.features);
  CHECK(out.labels == ds.labels);
  CHECK(out.n_classes == 2);
}

TEST_CASE("filtering down to one class yields K=1 (rejected downstream)") {
  Dataset ds = gen_mixture(two_blobs(10), 5);
  Dataset out = filter_classes(ds, {0});
  CHECK(out.n_classes == 1);
  CHECK(out.size() == 10);
  CHECK_THROWS_AS(filter_classes(ds, {0, 1}), Error);
}

TEST_CASE("batches cover the dataset with a short tail") {
  Dataset ds = gen_mixture(two_blobs(5), 6);  // N = 10
  auto bs = batches(ds, 4, 0, 77);
  REQUIRE(bs.size() == 3);
  CHECK(bs[0].y.size() == 4);
  CHECK(bs[1].y.size() == 4);
  CHECK(bs[2].y.size() == 2);

  std::vector<int64_t> seen;
  for (const auto& b : bs) {
    REQUIRE(b.x.shape()[0] == static_cast<int>(b.y.size()));
    for (size_t i = 0; i < b.indices.size(); ++i) {
      seen.push_back(b.indices[i]);
      CHECK(b.y[i] == ds.labels[b.indices[i]]);
      for (int j = 0; j < 2; ++j)
        CHECK(b.x.data()[i * 2 + j] == ds.features[b.indices[i] * 2 + j]);
    }
  }
  std::sort(seen.begin(), seen.end());
  std::vector<int64_t> expect(10);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(seen == expect);
}

TEST_CASE("batch order depends on (seed, epoch) deterministically") {
  Dataset ds = gen_mixture(two_blobs(16), 6);  // N = 32
  auto flat = [](const std::vector<Batch>& bs) {
    std::vector<int64_t> idx;
    for (const auto& b : bs) idx.insert(idx.end(), b.indices.begin(), b.indices.end());
    return idx;
  };
  CHECK(flat(batches(ds, 8, 1, 3)) == flat(batches(ds, 8, 1, 3)));
  CHECK(flat(batches(ds, 8, 1, 3)) != flat(batches(ds, 8, 2, 3)));
  CHECK(flat(batches(ds, 8, 1, 3)) != flat(batches(ds, 8, 1, 4)));
}

TEST_CASE("fairness stress preset has one wide hard class") {
  MixtureSpec spec = fairness_stress_spec();
  CHECK(spec.classes.size() == 5);
  float max_sigma = 0.0f;
  int widest = -1;
  for (size_t k = 0; k < spec.classes.size(); ++k) {
    CHECK(spec.classes[k].count == 300);
    if (spec.classes[k].sigma > max_sigma) {
      max_sigma = spec.classes[k].sigma;
      widest = static_cast<int>(k);
    }
  }
  // The hard class is clearly wider than everything else.
  for (size_t k = 0; k < spec.classes.size(); ++k)
    if (static_cast<int>(k) != widest)
      CHECK(spec.classes[k].sigma < 0.7f * max_sigma);
  Dataset ds = gen_mixture(spec, 0);
  CHECK(ds.size() == 1500);
}
