#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "gbdtnas/bench.hpp"
#include "gbdtnas/gbdt.hpp"
#include "gbdtnas/space.hpp"

namespace testsupport {

using namespace gbdtnas;

// Four layers over {conv1x1, conv3x3}; layer i may take an edge from every
// earlier layer.
inline FeatureSchema table_schema() {
  std::vector<FeatureGroup> g;
  auto op = [&](int layer) {
    const std::string p = "layer " + std::to_string(layer) + " is ";
    g.push_back({GroupKind::OneHot, "layer " + std::to_string(layer) + " op", {p + "conv1x1", p + "conv3x3"}});
  };
  auto edges = [&](int layer) {
    FeatureGroup e{GroupKind::Binary, "layer " + std::to_string(layer) + " inputs", {}};
    for (int j = 1; j < layer; ++j)
      e.labels.push_back("layer " + std::to_string(layer) + " connects layer " + std::to_string(j));
    g.push_back(e);
  };
  op(1);
  for (int layer = 2; layer <= 4; ++layer) {
    edges(layer);
    op(layer);
  }
  return FeatureSchema(g);
}

inline FeatureVector bits(std::vector<std::uint8_t> b) { return FeatureVector(std::move(b)); }

inline const FeatureVector kArch1 = bits({1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1});
inline const FeatureVector kArch2 = bits({0, 1, 1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 1});

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("gbdtnas-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Single split on `feature`: left leaf `a`, right leaf `b`, covers split evenly.
inline GbdtModel stump(std::size_t dim, std::size_t feature, double a, double b, double cover = 10.0) {
  GbdtModel m;
  m.dim = dim;
  RegressionTree t;
  TreeNode root;
  root.split_feature = static_cast<int>(feature);
  root.left = 1;
  root.right = 2;
  root.cover = 2 * cover;
  root.gain = 1.0;
  TreeNode l, r;
  l.leaf_value = a;
  l.cover = cover;
  r.leaf_value = b;
  r.cover = cover;
  t.nodes = {root, l, r};
  m.trees.push_back(t);
  return m;
}

inline ArchPool sample_pool(const FeatureSchema& schema, const Oracle& oracle, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ArchPool pool;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = encode(sample_uniform(schema, rng), schema);
    const double y = oracle.evaluate(v);
    pool.add(std::move(v), y);
  }
  return pool;
}

}  // namespace testsupport
