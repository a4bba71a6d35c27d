#include <doctest.h>

#include <set>
#include <sstream>

#include "gbdtnas/errors.hpp"
#include "gbdtnas/search.hpp"
#include "support.hpp"

using namespace gbdtnas;

namespace {

SearchConfig small_config(std::uint64_t seed) {
  SearchConfig c;
  c.n_init = 60;
  c.m_candidates = 200;
  c.k_top = 20;
  c.t_iters = 3;
  c.n_pf = 3;
  c.seed = seed;
  c.train.min_samples_per_leaf = 5;
  return c;
}

}  // namespace

TEST_CASE("pairwise accuracy") {
  const std::vector<double> y{1, 2, 3};
  CHECK(pairwise_accuracy(y, y) == 1.0);
  const std::vector<double> rev{3, 2, 1};
  CHECK(pairwise_accuracy(rev, y) == 0.0);
  const std::vector<double> one{1};
  CHECK_THROWS_AS(pairwise_accuracy(one, one), ConfigError);
  const std::vector<double> two{1, 2};
  CHECK_THROWS_AS(pairwise_accuracy(y, two), ConfigError);

  // Ties count in both orders.
  const std::vector<double> flat{5, 5, 5};
  const auto d = pairwise_accuracy_detail(flat, flat);
  CHECK(d.value == 2.0);
  CHECK(d.prediction_ties == 3);
  CHECK(d.target_ties == 3);
}

TEST_CASE("pairwise accuracy of random rankings averages one half") {
  Rng rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  double total = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> f(100), y(100);
    for (auto& v : f) v = u(rng);
    for (auto& v : y) v = u(rng);
    total += pairwise_accuracy(f, y);
  }
  CHECK(std::abs(total / trials - 0.5) <= 0.02);
}

TEST_CASE("search config validation and json") {
  SearchConfig c;
  CHECK_NOTHROW(c.validate());
  c.k_top = 6000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.m_candidates.reset();
  CHECK_NOTHROW(c.validate());
  const auto j = c.to_json();
  CHECK(j["m_candidates"] == "all");
  CHECK_FALSE(SearchConfig::from_json(j).m_candidates.has_value());
  c = SearchConfig{};
  c.prune_mode = PruneMode::SecondOrder;
  c.n_pf = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("query accounting is N + T*K and best-so-far never drops") {
  const auto schema = make_chain_schema(10, {"a", "b", "c", "d"});
  for (auto mode : {PruneMode::None, PruneMode::FirstOrder, PruneMode::SecondOrder, PruneMode::Importance}) {
    auto oracle = make_synthetic(schema, {.unary = {{2, -0.1}}, .pairs = {{4, 9, -0.08}}}, 0.005, 7);
    auto cfg = small_config(11);
    cfg.prune_mode = mode;
    const auto r = gbdt_nas_s3(schema, oracle, cfg);
    CHECK(oracle.query_count() == cfg.n_init + cfg.t_iters * cfg.k_top);
    CHECK(r.trace.query_log.size() == oracle.query_count());
    REQUIRE(r.trace.iterations.size() == cfg.t_iters + 1);
    for (std::size_t t = 0; t < r.trace.iterations.size(); ++t) {
      CHECK(r.trace.iterations[t].queries == cfg.n_init + t * cfg.k_top);
      if (t) CHECK(r.trace.iterations[t].best_accuracy >= r.trace.iterations[t - 1].best_accuracy);
    }
    std::set<FeatureVector> distinct(r.pool.vectors.begin(), r.pool.vectors.end());
    CHECK(distinct.size() == r.pool.size());
    CHECK(r.best_accuracy == *std::max_element(r.pool.targets.begin(), r.pool.targets.end()));
    CHECK(oracle.evaluate(encode(r.best, schema)) == r.best_accuracy);
    if (mode == PruneMode::None) CHECK(r.constraints.empty());
  }
}

TEST_CASE("constraints bind every later iteration") {
  const auto schema = make_chain_schema(10, {"a", "b", "c", "d"});
  auto oracle = make_synthetic(schema, {.unary = {{2, -0.1}, {7, -0.1}}}, 0.005, 3);
  auto cfg = small_config(5);
  cfg.prune_mode = PruneMode::FirstOrder;
  const auto r = gbdt_nas_s3(schema, oracle, cfg);
  REQUIRE(r.reports.size() == cfg.t_iters);
  REQUIRE(r.pool.size() == cfg.n_init + cfg.t_iters * cfg.k_top);
  PrunedSet so_far;
  std::size_t offset = cfg.n_init;
  for (std::size_t t = 0; t < cfg.t_iters; ++t) {
    so_far.merge(schema, r.reports[t].delta);
    for (std::size_t i = offset; i < offset + cfg.k_top; ++i) CHECK(so_far.admits(r.pool.vectors[i]));
    offset += cfg.k_top;
  }
  CHECK(so_far == r.constraints);
}

TEST_CASE("search is reproducible from its seed") {
  const auto schema = make_chain_schema(6, {"a", "b", "c"});
  auto o1 = make_synthetic(schema, {.unary = {{2, -0.1}}}, 0.005, 7);
  auto o2 = o1;
  auto cfg = small_config(21);
  cfg.prune_mode = PruneMode::SecondOrder;
  std::ostringstream a, b;
  gbdt_nas_s3(schema, o1, cfg).trace.write_csv(a);
  gbdt_nas_s3(schema, o2, cfg).trace.write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("iteration,queries,best_accuracy,pruned_count\n", 0) == 0);
}

TEST_CASE("exhaustive ranking finds the optimum of an additive space") {
  const auto schema = make_chain_schema(4, {"a", "b", "c"});
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto oracle = make_synthetic(schema, {}, 0.0, 500 + seed);
    SearchConfig cfg;
    cfg.n_init = 60;
    cfg.m_candidates.reset();
    cfg.k_top = 10;
    cfg.t_iters = 1;
    cfg.seed = seed;
    const auto r = gbdt_nas_s3(schema, oracle, cfg);
    hits += r.best_accuracy == true_optimum(oracle, 1000).second;
  }
  CHECK(hits >= 19);
}

TEST_CASE("flat oracle falls back to random top-K") {
  const auto schema = make_chain_schema(4, {"a", "b", "c"});
  auto oracle = make_synthetic(schema, {.weight_low = 0.0, .weight_high = 0.0}, 0.0, 1);
  auto cfg = small_config(2);
  cfg.m_candidates = 15;
  cfg.k_top = 5;
  cfg.t_iters = 1;
  const auto r = gbdt_nas_s3(schema, oracle, cfg);
  CHECK(r.trace.iterations[1].fallback);
  CHECK_FALSE(r.trace.warnings.empty());
  CHECK(oracle.query_count() == 65);
}

TEST_CASE("random search") {
  const auto schema = make_chain_schema(4, {"a", "b", "c"});
  auto oracle = make_synthetic(schema, {.unary = {{0, -0.1}}}, 0.01, 4);
  const auto all = random_search(schema, oracle, 81, 3);
  CHECK(all.best_accuracy == observed_optimum(oracle, schema, 1000).second);
  CHECK(oracle.query_count() == 81);
  std::set<FeatureVector> seen(all.pool.vectors.begin(), all.pool.vectors.end());
  CHECK(seen.size() == 81);

  oracle.reset_count();
  const auto clipped = random_search(schema, oracle, 500, 3);
  CHECK(oracle.query_count() == 81);
  CHECK(clipped.pool.size() == 81);

  oracle.reset_count();
  const auto one = random_search(schema, oracle, 1, 9);
  CHECK(one.pool.size() == 1);
  CHECK(one.best_accuracy == one.pool.targets[0]);
  CHECK(encode(one.best, schema) == one.pool.vectors[0]);

  PrunedSet z;
  z.forbid_feature(schema, 0);
  const auto constrained = random_search(schema, oracle, 30, 9, z);
  for (const auto& v : constrained.pool.vectors) CHECK(v[0] == 0);
}

TEST_CASE("mutation changes exactly one group and keeps validity") {
  const auto schema = testsupport::table_schema();
  PrunedSet z;
  z.forbid_feature(schema, 0);
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const auto parent = sample_constrained(schema, z, rng);
    const auto child = mutate(parent, schema, z, rng);
    std::size_t changed = 0;
    for (std::size_t g = 0; g < schema.num_groups(); ++g) changed += parent.groups[g] != child.groups[g];
    CHECK(changed == 1);
    const auto v = encode(child, schema);
    CHECK_NOTHROW(validate(v, schema));
    CHECK(z.admits(v));
  }
}

TEST_CASE("regularized evolution") {
  const auto schema = make_chain_schema(6, {"a", "b", "c"});
  auto oracle = make_synthetic(schema, {.unary = {{1, -0.1}}}, 0.005, 5);
  const EvolutionConfig cfg;
  const auto r = regularized_evolution(schema, oracle, 300, cfg, 4);
  CHECK(oracle.query_count() == 300);
  CHECK(r.trace.query_log.size() == 300);
  CHECK(r.best_accuracy == *std::max_element(r.trace.query_log.begin(), r.trace.query_log.end()));

  oracle.reset_count();
  const auto pure = regularized_evolution(schema, oracle, 50, cfg, 4);
  CHECK(oracle.query_count() == 50);
  CHECK_THROWS_AS(regularized_evolution(schema, oracle, 40, cfg, 4), ConfigError);

  const auto r2 = regularized_evolution(schema, oracle, 300, cfg, 4);
  CHECK(r2.trace.query_log == r.trace.query_log);
  (void)pure;
}

TEST_CASE("queries to reach a target") {
  SearchTrace t;
  t.query_log = {0.1, 0.5, 0.3, 0.9};
  CHECK(t.queries_to_reach(0.5) == 2u);
  CHECK(t.queries_to_reach(0.9) == 4u);
  CHECK_FALSE(t.queries_to_reach(0.95).has_value());
}
