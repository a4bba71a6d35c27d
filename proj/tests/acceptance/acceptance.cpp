// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gbdtnas/bench.hpp"
#include "gbdtnas/errors.hpp"
#include "gbdtnas/gbdt.hpp"
#include "gbdtnas/prune.hpp"
#include "gbdtnas/search.hpp"
#include "gbdtnas/shap.hpp"
#include "gbdtnas/space.hpp"

using namespace gbdtnas;

namespace {

constexpr int kSeeds = 20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = o.pass;
  std::string detail = o.detail;
  if (limit_seconds > 0 && secs >= limit_seconds) {
    ok = false;
    detail += "; over the time limit";
  }
  if (!ok) ++failures;
  std::printf("%s %d %s: %s [%.1fs%s]\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), secs,
              limit_seconds > 0 ? (" of " + std::to_string(static_cast<int>(limit_seconds)) + "s").c_str() : "");
  std::fflush(stdout);
}

void info(const std::string& line) {
  std::printf("INFO %s\n", line.c_str());
  std::fflush(stdout);
}

std::string str(const char* f, double a) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<std::string> op_names(int n) {
  std::vector<std::string> ops;
  for (int i = 0; i < n; ++i) ops.push_back("op" + std::to_string(i));
  return ops;
}

ArchPool uniform_pool(const FeatureSchema& s, const Oracle& o, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ArchPool pool;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = encode(sample_uniform(s, rng), s);
    const double y = o.evaluate(v);
    pool.add(std::move(v), y);
  }
  return pool;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Random tree over `dim` features: depth <= max_depth, features may repeat
// along a path, integer leaf covers, parent cover = sum of children.
int grow_random(RegressionTree& t, std::mt19937_64& rng, std::size_t dim, int depth, int max_depth) {
  const int idx = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  std::uniform_real_distribution<double> u(0, 1);
  if (depth < max_depth && (depth == 0 || u(rng) < 0.7)) {
    t.nodes[idx].split_feature = static_cast<int>(rng() % dim);
    t.nodes[idx].gain = 1.0;
    const int l = grow_random(t, rng, dim, depth + 1, max_depth);
    const int r = grow_random(t, rng, dim, depth + 1, max_depth);
    t.nodes[idx].left = l;
    t.nodes[idx].right = r;
    t.nodes[idx].cover = t.nodes[l].cover + t.nodes[r].cover;
  } else {
    t.nodes[idx].leaf_value = std::normal_distribution<double>(0, 1)(rng);
    t.nodes[idx].cover = static_cast<double>(1 + rng() % 30);
  }
  return idx;
}

GbdtModel random_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GbdtModel m;
  m.dim = 3 + rng() % 10;  // 3..12
  m.base_score = std::normal_distribution<double>(0, 1)(rng);
  const std::size_t trees = 1 + rng() % 5;
  for (std::size_t k = 0; k < trees; ++k) {
    RegressionTree t;
    grow_random(t, rng, m.dim, 0, 1 + static_cast<int>(rng() % 3));
    m.trees.push_back(std::move(t));
  }
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  // 1. Local accuracy on a D=147 model.
  criterion(1, "shap-local-accuracy", 30, [] {
    const auto s = make_chain_schema(7, op_names(21));
    const auto o = make_synthetic(s, {}, 0.005, 1);
    const auto model = fit(uniform_pool(s, o, 1000, 2), TrainConfig{}, NormMode::Standardize);
    const auto inputs = uniform_pool(s, o, 1000, 3);
    const double ev = expected_value(model);
    double worst = 0;
    for (const auto& x : inputs.vectors) {
      const auto phi = shap_row(model, x);
      long double sum = ev;
      for (double p : phi) sum += p;
      worst = std::max(worst, std::abs(static_cast<double>(sum) - model.predict(x)));
    }
    std::ostringstream d;
    d << "D=" << s.dim() << ", trees=" << model.trees.size() << ", max |E+sum(phi)-f(x)| = " << worst;
    return Outcome{s.dim() == 147 && model.trees.size() == 100 && worst <= 1e-9, d.str()};
  });

  // 2. TreeSHAP against subset enumeration.
  criterion(2, "shapley-oracle-equivalence", 60, [] {
    double worst_phi = 0, worst_row = 0;
    std::size_t checks = 0;
    for (std::uint64_t k = 0; k < 50; ++k) {
      const GbdtModel m = random_model(1000 + k);
      std::mt19937_64 rng(k);
      std::vector<FeatureVector> xs;
      for (int i = 0; i < 8; ++i) {
        std::vector<std::uint8_t> b(m.dim);
        for (auto& bit : b) bit = static_cast<std::uint8_t>(rng() & 1);
        xs.emplace_back(std::move(b));
      }
      const auto tensor = interaction_values(m, xs);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto fast = shap_row(m, xs[i]);
        const auto slow = brute_force_shapley(m, xs[i]);
        for (std::size_t j = 0; j < m.dim; ++j) {
          worst_phi = std::max(worst_phi, std::abs(fast[j] - slow[j]));
          double row = 0;
          for (std::size_t b = 0; b < m.dim; ++b) row += tensor(i, j, b);
          worst_row = std::max(worst_row, std::abs(row - fast[j]));
          ++checks;
        }
      }
    }
    std::ostringstream d;
    d << "50 models, " << checks << " attributions, max |phi - brute| = " << worst_phi
      << ", max |row sum - phi| = " << worst_row;
    return Outcome{worst_phi <= 1e-9 && worst_row <= 1e-6, d.str()};
  });

  // 3. Held-out pairwise accuracy of the predictor.
  criterion(3, "predictor-quality", 0, [] {
    auto mean_pa = [](const FeatureSchema& s, int splits) {
      const auto o = make_synthetic(s, {}, 0.005, 7);
      double total = 0;
      for (int k = 0; k < splits; ++k) {
        const auto all = uniform_pool(s, o, 1100, 500 + k);
        ArchPool train, test;
        for (std::size_t i = 0; i < all.size(); ++i) (i < 1000 ? train : test).add(all.vectors[i], all.targets[i]);
        const auto m = fit(train, TrainConfig{}, NormMode::Standardize);
        total += pairwise_accuracy(m.predict_batch(test.vectors), test.targets);
      }
      return total / splits;
    };
    const double big = mean_pa(make_chain_schema(7, op_names(21)), kSeeds);
    info(str("predictor-quality on the D=147 chain space: mean held-out pairwise accuracy %.4f", big));
    const double pa = mean_pa(make_chain_schema(8, op_names(3)), kSeeds);
    return Outcome{pa >= 0.90, str("8x3 chain space, 20 splits of 1000/100, mean pairwise accuracy %.4f", pa)};
  });

  const auto chain8 = make_chain_schema(8, op_names(3));

  // 4. First-order pruning catches a planted harmful operation.
  criterion(4, "prune-first-order", 120, [&] {
    int caught = 0, admitted = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const std::size_t planted = (7 * seed) % chain8.dim();
      PlantedEffects pe;
      pe.unary = {{planted, -0.10}};
      pe.target_mean = 0.70;
      const auto o = make_synthetic(chain8, pe, 0.005, seed);
      const auto pool = uniform_pool(chain8, o, 1000, 100 + seed);
      const auto m = fit(pool, TrainConfig{}, NormMode::Standardize);
      PrunedSet z;
      prune_first_order(m, pool, chain8, 20, z);
      caught += z.feature_forbidden(planted);
      admitted += z.admits(encode(true_optimum(o, 100000).first, chain8));
    }
    std::ostringstream d;
    d << "planted feature pruned in " << caught << "/20, noiseless optimum kept in " << admitted << "/20";
    return Outcome{caught >= 19 && admitted == kSeeds, d.str()};
  });

  // 5. Second-order pruning catches a planted harmful pair.
  criterion(5, "prune-second-order", 0, [&] {
    int caught = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const std::size_t g = seed % 7;
      const std::size_t a = 3 * g + seed % 3, b = 3 * (g + 1) + (seed / 3) % 3;
      PlantedEffects pe;
      pe.pairs = {{a, b, -0.08}};
      pe.target_mean = 0.70;
      const auto o = make_synthetic(chain8, pe, 0.005, seed);
      const auto pool = uniform_pool(chain8, o, 1000, 200 + seed);
      const auto m = fit(pool, TrainConfig{}, NormMode::Standardize);
      PrunedSet z;
      prune_second_order(m, pool, chain8, 20, z);
      caught += z.pair_forbidden(a, b);
    }
    return Outcome{caught >= 18, "planted pair forbidden in " + std::to_string(caught) + "/20"};
  });

  // 6. Queries needed to reach the optimum.
  criterion(6, "sample-efficiency", 300, [&] {
    constexpr double kNever = std::numeric_limits<double>::infinity();
    std::vector<double> s3, evo, rnd;
    for (int seed = 0; seed < kSeeds; ++seed) {
      PlantedEffects pe;
      pe.unary = {{(3 * seed) % chain8.dim(), -0.10}};
      pe.target_mean = 0.70;
      SyntheticOracle o = make_synthetic(chain8, pe, 0.0, seed);
      const double best = true_optimum(o, 100000).second;
      auto reach = [&](const SearchResult& r) {
        const auto q = r.trace.queries_to_reach(best);
        return q ? static_cast<double>(*q) : kNever;
      };
      SearchConfig c;
      c.n_init = 100;
      c.m_candidates = std::nullopt;
      c.k_top = 50;
      c.t_iters = 20;
      c.n_pf = 20;
      c.prune_mode = PruneMode::FirstOrder;
      c.seed = seed;
      s3.push_back(reach(gbdt_nas_s3(chain8, o, c)));
      evo.push_back(reach(regularized_evolution(chain8, o, 6561, {}, seed)));
      rnd.push_back(reach(random_search(chain8, o, 6561, seed)));
    }
    const double ms = median(s3), me = median(evo), mr = median(rnd);
    std::ostringstream d;
    d << "median queries: gbdt_nas_s3 " << ms << ", evolution " << me << ", random " << mr << " (random/s3 = " << mr / ms
      << ")";
    return Outcome{ms <= me && me <= mr && mr >= 5 * ms, d.str()};
  });

  // 7. Sampling quality after one pruning round.
  criterion(7, "pruned-space-quality", 0, [&] {
    auto mean_acc = [&](const Oracle& o, const PrunedSet& z, std::uint64_t seed) {
      Rng rng(seed);
      double total = 0;
      for (int i = 0; i < 500; ++i) total += o.evaluate(encode(sample_constrained(chain8, z, rng), chain8));
      return total / 500;
    };
    double sum_plain = 0, sum_shap = 0;
    int shap_wins = 0, shap_above = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      PlantedEffects pe;
      pe.unary = {{(5 * seed) % chain8.dim(), -0.10}};
      pe.target_mean = 0.70;
      const auto o = make_synthetic(chain8, pe, 0.005, seed);
      const auto pool = uniform_pool(chain8, o, 1000, 300 + seed);
      const auto m = fit(pool, TrainConfig{}, NormMode::Standardize);
      PrunedSet z_shap, z_imp;
      prune_first_order(m, pool, chain8, 20, z_shap);
      prune_by_importance(m, pool, chain8, 20, z_imp);
      const double plain = mean_acc(o, {}, 400 + seed);
      const double shap = mean_acc(o, z_shap, 400 + seed);
      const double imp = mean_acc(o, z_imp, 400 + seed);
      sum_plain += plain;
      sum_shap += shap;
      shap_above += shap > plain;
      shap_wins += shap >= imp;
    }
    std::ostringstream d;
    d << "mean accuracy unpruned " << sum_plain / kSeeds << ", SHAP-pruned " << sum_shap / kSeeds
      << " (higher in " << shap_above << "/20); SHAP >= importance in " << shap_wins << "/20";
    return Outcome{sum_shap > sum_plain && shap_wins >= 16, d.str()};
  });

  // 8. Exhaustive candidate scoring on a tiny space.
  criterion(8, "degenerate-exactness", 0, [] {
    const auto s = make_chain_schema(4, op_names(3));
    int hits = 0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      PlantedEffects pe;
      pe.target_mean = 0.70;
      SyntheticOracle o = make_synthetic(s, pe, 0.0, seed);
      SearchConfig c;
      c.n_init = 60;
      c.m_candidates = std::nullopt;
      c.k_top = 10;
      c.t_iters = 1;
      c.prune_mode = PruneMode::None;
      c.seed = seed;
      const auto r = gbdt_nas_s3(s, o, c);
      hits += r.best_accuracy == true_optimum(o, 1000).second;
    }
    return Outcome{hits == kSeeds, "enumerated optimum returned in " + std::to_string(hits) + "/20 seeds"};
  });

  // 9. Manifest replays are byte-identical.
  criterion(9, "determinism", 0, [] {
    const auto dir = std::filesystem::temp_directory_path() / ("gbdtnas-acceptance-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    std::ostringstream out, err;
    auto run = [&](std::vector<std::string> args) {
      const int code = cli::run(args, out, err);
      if (code != 0) throw std::runtime_error("cli exited " + std::to_string(code) + ": " + err.str());
    };
    run({"gen-benchmark", "--groups", "8", "--ops", "a,b,c", "--unary", "4=-0.1", "--target-mean", "0.7", "--seed",
         "5", "--out", p("oracle.json")});
    run({"search", "--oracle", p("oracle.json"), "--algo", "gbdt-nas-s3", "--prune", "second-order", "--n", "200",
         "--m", "1000", "--k", "50", "--t", "3", "--seed", "17", "--out", p("first")});
    run({"search", "--manifest", p("first") + "/manifest.json", "--out", p("second")});
    run({"search", "--manifest", p("first") + "/manifest.json", "--out", p("third")});
    const auto a = slurp(p("first") + "/trace.csv"), b = slurp(p("second") + "/trace.csv"),
               c = slurp(p("third") + "/trace.csv");
    std::filesystem::remove_all(dir);
    const bool same = !a.empty() && a == b && b == c;
    return Outcome{same, same ? "trace.csv identical across the original run and two manifest replays"
                              : "trace.csv differs between runs"};
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
