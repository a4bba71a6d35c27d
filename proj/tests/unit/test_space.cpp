#include <doctest.h>

#include <set>

#include "gbdtnas/errors.hpp"
#include "gbdtnas/space.hpp"
#include "support.hpp"

using namespace gbdtnas;
using testsupport::kArch1;
using testsupport::kArch2;

namespace {

Architecture table_arch1() {
  // conv1x1 / edge 1->2, conv1x1 / edge 1->3, conv3x3 / edge 3->4, conv3x3
  return Architecture{{{0}, {1}, {0}, {1, 0}, {1}, {0, 0, 1}, {1}}};
}

FeatureSchema width3_schema(std::size_t groups) { return make_chain_schema(groups, {"a", "b", "c"}); }

}  // namespace

TEST_CASE("schema layout follows group order") {
  const auto s = testsupport::table_schema();
  CHECK(s.dim() == 14);
  CHECK(s.num_groups() == 7);
  CHECK(s.label(0) == "layer 1 is conv1x1");
  CHECK(s.label(2) == "layer 2 connects layer 1");
  CHECK(s.label(13) == "layer 4 is conv3x3");
  CHECK(s.group_of(10) == 5);
  CHECK(s.offset(5) == 9);
  CHECK(s.feature_index("layer 3 connects layer 2") == 6);
  CHECK_THROWS_AS(s.feature_index("layer 9 is conv1x1"), ConfigError);
}

TEST_CASE("schema rejects malformed groups") {
  CHECK_THROWS_AS(FeatureSchema({{GroupKind::OneHot, "g", {"only"}}}), ConfigError);
  CHECK_THROWS_AS(FeatureSchema({{GroupKind::Binary, "g", {}}}), ConfigError);
  CHECK_THROWS_AS(FeatureSchema({{GroupKind::Binary, "g", {"x", "x"}}}), ConfigError);
  CHECK_THROWS_AS(FeatureSchema({{GroupKind::Binary, "g", {"a,b"}}}), ConfigError);
}

TEST_CASE("schema json round trip") {
  const auto s = testsupport::table_schema();
  CHECK(FeatureSchema::from_json(s.to_json()) == s);
  const auto bare = nlohmann::json::parse(R"([{"kind":"onehot","labels":["p","q"]},{"kind":"binary","labels":["r"]}])");
  const auto t = FeatureSchema::from_json(bare);
  CHECK(t.dim() == 3);
  CHECK(t.group(1).kind == GroupKind::Binary);
}

TEST_CASE("encode reproduces the two tabulated architectures") {
  const auto s = testsupport::table_schema();
  CHECK(encode(table_arch1(), s) == kArch1);
  const Architecture arch2{{{1}, {1}, {1}, {0, 1}, {1}, {0, 1, 1}, {1}}};
  CHECK(encode(arch2, s) == kArch2);
}

TEST_CASE("encode of a four-layer chain") {
  const auto s = make_chain_schema(4, {"conv1x1", "conv3x3"});
  CHECK(s.label(1) == "layer 1 is conv3x3");
  const Architecture chain{{{0}, {1}, {0}, {1}}};
  CHECK(encode(chain, s) == testsupport::bits({1, 0, 0, 1, 1, 0, 0, 1}));
  CHECK(decode(testsupport::bits({1, 0, 0, 1, 1, 0, 0, 1}), s) == chain);
}

TEST_CASE("encode rejects out-of-range choices") {
  const auto s = make_chain_schema(2, {"x", "y"});
  CHECK_THROWS_AS(encode(Architecture{{{0}, {2}}}, s), ConfigError);
  CHECK_THROWS_AS(encode(Architecture{{{0}}}, s), ConfigError);
}

TEST_CASE("decode") {
  const auto s = testsupport::table_schema();
  CHECK(decode(kArch1, s) == table_arch1());

  auto no_edges = kArch1;
  for (std::size_t f : {2, 5, 6, 9, 10, 11}) no_edges[f] = 0;
  const auto a = decode(no_edges, s);
  CHECK(a.groups[1] == std::vector<std::uint32_t>{0});
  CHECK(a.groups[5] == std::vector<std::uint32_t>{0, 0, 0});

  auto two_hot = kArch1;
  two_hot[1] = 1;
  CHECK_THROWS_AS(decode(two_hot, s), ConfigError);
  auto no_hot = kArch1;
  no_hot[0] = 0;
  CHECK_THROWS_AS(decode(no_hot, s), ConfigError);
}

TEST_CASE("round trip over the whole tabulated space") {
  const auto s = testsupport::table_schema();
  std::size_t n = 0;
  for_each_architecture(s, {}, 5000, [&](const Architecture& a) {
    const auto v = encode(a, s);
    REQUIRE(encode(decode(v, s), s) == v);
    ++n;
  });
  CHECK(n == 1024);
}

TEST_CASE("uniform sampling frequencies") {
  const FeatureSchema one_hot({{GroupKind::OneHot, "g", {"p", "q"}}});
  const FeatureSchema one_bit({{GroupKind::Binary, "g", {"r"}}});
  Rng r1(7), r2(8);
  std::size_t c0 = 0, ones = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    c0 += sample_uniform(one_hot, r1).groups[0][0] == 0;
    ones += sample_uniform(one_bit, r2).groups[0][0];
  }
  CHECK(std::abs(static_cast<double>(c0) / draws - 0.5) <= 0.02);
  CHECK(std::abs(static_cast<double>(ones) / draws - 0.5) <= 0.02);
}

TEST_CASE("sampling is deterministic in the seed") {
  const auto s = testsupport::table_schema();
  CHECK(sample_uniform(s, 42) == sample_uniform(s, 42));
  PrunedSet z;
  CHECK(sample_constrained(s, z, 42) == sample_uniform(s, 42));
  Rng a(3), b(3);
  for (int i = 0; i < 50; ++i) CHECK(sample_constrained(s, z, a) == sample_uniform(s, b));
}

TEST_CASE("constrained sampling honours forbidden features and pairs") {
  const auto s = testsupport::table_schema();
  PrunedSet z;
  REQUIRE(z.forbid_feature(s, s.feature_index("layer 1 is conv1x1")) == PrunedSet::AddResult::Added);
  REQUIRE(z.forbid_pair(s, 5, 6) == PrunedSet::AddResult::Added);
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const auto v = encode(sample_constrained(s, z, rng), s);
    REQUIRE(v[0] == 0);
    REQUIRE_FALSE((v[5] && v[6]));
  }
}

TEST_CASE("pruned set refusals and bookkeeping") {
  const auto s = testsupport::table_schema();
  PrunedSet z;
  CHECK(z.forbid_feature(s, 0) == PrunedSet::AddResult::Added);
  CHECK(z.forbid_feature(s, 0) == PrunedSet::AddResult::AlreadyPresent);
  CHECK(z.forbid_feature(s, 1) == PrunedSet::AddResult::Refused);
  CHECK(z.pair_forbidden(0, 5) == false);
  CHECK(z.forbid_pair(s, 0, 5) == PrunedSet::AddResult::AlreadyPresent);
  // Both choices of layer 2's op would clash with the only choice left at layer 1.
  CHECK(z.forbid_pair(s, 1, 3) == PrunedSet::AddResult::Added);
  CHECK(z.forbid_pair(s, 4, 1) == PrunedSet::AddResult::Refused);
  CHECK(z.satisfiable(s));
  CHECK(z.size() == 2);
  CHECK(PrunedSet::from_json(z.to_json(s)) == z);
}

TEST_CASE("enumeration counts") {
  const auto s = width3_schema(4);
  CHECK(enumerate(s, {}, 1000).size() == 81);
  PrunedSet z;
  z.forbid_feature(s, 4);
  const auto e = enumerate(s, z, 1000);
  CHECK(e.size() == 54);
  for (const auto& a : e) CHECK(encode(a, s)[4] == 0);
  CHECK(enumerate(testsupport::table_schema(), {}, 2000).size() == 1024);
  CHECK_THROWS_AS(enumerate(s, {}, 80), CapExceeded);
}

TEST_CASE("enumeration is lexicographic and distinct") {
  const auto s = width3_schema(3);
  const auto e = enumerate(s, {}, 100);
  CHECK(e.front() == Architecture{{{0}, {0}, {0}}});
  CHECK(e[1] == Architecture{{{0}, {0}, {1}}});
  CHECK(e.back() == Architecture{{{2}, {2}, {2}}});
  CHECK(std::is_sorted(e.begin(), e.end()));
  CHECK(std::set<Architecture>(e.begin(), e.end()).size() == e.size());
}

TEST_CASE("enumeration skips pair-forbidden points") {
  const auto s = width3_schema(2);
  PrunedSet z;
  z.forbid_pair(s, 0, 3);
  const auto e = enumerate(s, z, 100);
  CHECK(e.size() == 8);
  for (const auto& a : e) CHECK(z.admits(encode(a, s)));
}

TEST_CASE("over-pruned pair constraints exhaust the sampler") {
  // 20 binary slots with every pair forbidden: only vectors with at most one
  // set bit survive, which uniform proposals almost never hit.
  FeatureGroup g{GroupKind::Binary, "bits", {}};
  for (int i = 0; i < 20; ++i) g.labels.push_back("bit " + std::to_string(i));
  const FeatureSchema s({g});
  PrunedSet z;
  for (std::size_t a = 0; a < 20; ++a)
    for (std::size_t b = a + 1; b < 20; ++b) z.forbid_pair(s, a, b);
  CHECK_THROWS_AS(sample_constrained(s, z, 1, 50), OverPruned);
}
