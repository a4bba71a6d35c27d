#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gbdtnas/bench.hpp"
#include "gbdtnas/errors.hpp"
#include "gbdtnas/gbdt.hpp"
#include "gbdtnas/prune.hpp"
#include "gbdtnas/search.hpp"
#include "gbdtnas/shap.hpp"
#include "gbdtnas/space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gbdtnas::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char h[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(h, sizeof h, "%02x", md[i]);
    hex += h;
  }
  return hex;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

// --- training flags shared by several commands --------------------------------

struct TrainFlags {
  std::optional<std::size_t> trees, leaves, min_leaf;
  std::optional<double> lr, l2, min_gain;

  void add(CLI::App* app) {
    app->add_option("--trees", trees, "number of boosted trees (default 100)");
    app->add_option("--leaves", leaves, "maximum leaves per tree (default 31)");
    app->add_option("--lr", lr, "learning rate (default 0.1)");
    app->add_option("--min-leaf", min_leaf, "minimum samples per leaf (default 20)");
    app->add_option("--l2", l2, "L2 regularization on leaf values (default 0)");
    app->add_option("--min-gain", min_gain, "minimum split gain (default 0)");
  }

  void apply(json& train) const {
    if (trees) train["num_trees"] = *trees;
    if (leaves) train["max_leaves"] = *leaves;
    if (lr) train["learning_rate"] = *lr;
    if (min_leaf) train["min_samples_per_leaf"] = *min_leaf;
    if (l2) train["l2_reg"] = *l2;
    if (min_gain) train["min_gain"] = *min_gain;
  }
};

// --- search -------------------------------------------------------------------

struct SearchFlags {
  std::string config_path, manifest_path;
  std::optional<std::string> schema, oracle, table, out, algo, prune, m, norm;
  std::optional<std::size_t> n, k, t, n_pf, budget, population, sample_size, max_attempts, enumeration_cap;
  std::optional<std::uint64_t> seed;
  TrainFlags train;
};

struct LoadedOracle {
  FeatureSchema schema;
  std::unique_ptr<Oracle> oracle;
  json inputs = json::object();
};

json input_record(const std::string& path) {
  return {{"path", fs::absolute(path).lexically_normal().string()}, {"sha256", sha256_file(path)}};
}

void verify_inputs(const json& inputs) {
  for (const auto& [name, rec] : inputs.items()) {
    const std::string path = rec.at("path").get<std::string>();
    const std::string expected = rec.at("sha256").get<std::string>();
    if (sha256_file(path) != expected) throw ConfigError("input '" + name + "' (" + path + ") changed since the manifest was written");
  }
}

LoadedOracle load_oracle(const std::optional<std::string>& schema_path, const std::optional<std::string>& oracle_path,
                         const std::optional<std::string>& table_path) {
  LoadedOracle lo;
  if (oracle_path && table_path) throw ConfigError("give either --oracle or --table, not both");
  if (!oracle_path && !table_path) throw ConfigError("an oracle is required (--oracle oracle.json or --table table.csv)");
  if (schema_path) {
    lo.schema = FeatureSchema::load(*schema_path);
    lo.inputs["schema"] = input_record(*schema_path);
  }
  if (oracle_path) {
    auto synth = std::make_unique<SyntheticOracle>(SyntheticOracle::load(*oracle_path));
    if (schema_path && !(synth->schema() == lo.schema)) throw ConfigError("--schema differs from the oracle's schema");
    lo.schema = synth->schema();
    lo.oracle = std::move(synth);
    lo.inputs["oracle"] = input_record(*oracle_path);
  } else {
    if (!schema_path) throw ConfigError("--table needs --schema");
    lo.oracle = std::make_unique<TabularOracle>(load_table(*table_path, lo.schema));
    lo.inputs["table"] = input_record(*table_path);
  }
  return lo;
}

std::optional<std::string> json_path(const json& j, const char* key) {
  if (j.contains(key) && !j.at(key).is_null()) return j.at(key).get<std::string>();
  return std::nullopt;
}

int cmd_search(const SearchFlags& f, std::ostream& out) {
  json cfg = json::object();
  json recorded_inputs;
  if (!f.manifest_path.empty()) {
    if (!f.config_path.empty()) throw ConfigError("--manifest and --config are exclusive");
    const json manifest = read_json(f.manifest_path);
    if (manifest.value("command", "") != "search") throw ConfigError(f.manifest_path + " is not a search manifest");
    cfg = manifest.at("config");
    recorded_inputs = manifest.at("inputs");
    verify_inputs(recorded_inputs);
  } else if (!f.config_path.empty()) {
    cfg = read_json(f.config_path);
    if (!cfg.is_object()) throw ConfigError(f.config_path + ": expected a JSON object");
  }

  // Flags override the file.
  if (f.schema) cfg["schema"] = *f.schema;
  if (f.oracle) cfg["oracle"] = *f.oracle;
  if (f.table) cfg["table"] = *f.table;
  if (f.out) cfg["out"] = *f.out;
  if (f.algo) cfg["algo"] = *f.algo;
  if (f.prune) cfg["prune_mode"] = *f.prune;
  if (f.n) cfg["n_init"] = *f.n;
  if (f.m) {
    if (*f.m == "all") {
      cfg["m_candidates"] = "all";
    } else {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(*f.m, &used);
        if (used != f.m->size()) throw std::invalid_argument("trailing");
        cfg["m_candidates"] = v;
      } catch (const std::exception&) {
        throw ConfigError("--m expects a count or \"all\", got '" + *f.m + "'");
      }
    }
  }
  if (f.k) cfg["k_top"] = *f.k;
  if (f.t) cfg["t_iters"] = *f.t;
  if (f.n_pf) cfg["n_pf"] = *f.n_pf;
  if (f.norm) cfg["norm"] = *f.norm;
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.max_attempts) cfg["max_attempts"] = *f.max_attempts;
  if (f.enumeration_cap) cfg["enumeration_cap"] = *f.enumeration_cap;
  if (f.budget) cfg["budget"] = *f.budget;
  if (f.population) cfg["population"] = *f.population;
  if (f.sample_size) cfg["sample_size"] = *f.sample_size;
  json train = cfg.contains("train") ? cfg.at("train") : json::object();
  f.train.apply(train);
  cfg["train"] = train;

  const std::string algo = cfg.value("algo", std::string("gbdt-nas-s3"));
  if (algo != "gbdt-nas" && algo != "gbdt-nas-s3" && algo != "random" && algo != "evolution")
    throw ConfigError("unknown --algo '" + algo + "' (gbdt-nas, gbdt-nas-s3, random, evolution)");
  if (algo == "gbdt-nas") {
    if (cfg.contains("prune_mode") && cfg.at("prune_mode") != "none")
      throw ConfigError("--algo gbdt-nas does not prune; use gbdt-nas-s3 with --prune");
    cfg["prune_mode"] = "none";
  } else if (!cfg.contains("prune_mode")) {
    cfg["prune_mode"] = algo == "gbdt-nas-s3" ? "second-order" : "none";
  }
  const auto out_dir = json_path(cfg, "out");
  if (!out_dir) throw ConfigError("an output directory is required (--out)");

  SearchConfig sc = SearchConfig::from_json(cfg);
  sc.validate();
  const std::size_t budget = cfg.value("budget", sc.n_init + sc.t_iters * sc.k_top);
  EvolutionConfig ec;
  ec.population = cfg.value("population", ec.population);
  ec.sample_size = cfg.value("sample_size", ec.sample_size);
  ec.max_attempts = sc.max_attempts;

  LoadedOracle lo = load_oracle(json_path(cfg, "schema"), json_path(cfg, "oracle"), json_path(cfg, "table"));
  if (!recorded_inputs.is_null() && recorded_inputs != lo.inputs)
    throw ConfigError("manifest inputs do not match the resolved oracle and schema");

  SearchResult result;
  if (algo == "random") {
    result = random_search(lo.schema, *lo.oracle, budget, sc.seed, {}, sc.enumeration_cap);
  } else if (algo == "evolution") {
    result = regularized_evolution(lo.schema, *lo.oracle, budget, ec, sc.seed);
  } else {
    result = gbdt_nas_s3(lo.schema, *lo.oracle, sc);
  }

  // Resolved configuration, exactly what a manifest replays.
  json resolved = sc.to_json();
  resolved["algo"] = algo;
  resolved["budget"] = budget;
  resolved["population"] = ec.population;
  resolved["sample_size"] = ec.sample_size;
  for (const char* key : {"schema", "oracle", "table"})
    if (auto p = json_path(cfg, key)) resolved[key] = fs::absolute(*p).lexically_normal().string();
  resolved["out"] = *out_dir;

  fs::create_directories(*out_dir);
  const fs::path dir(*out_dir);
  result.trace.write_csv((dir / "trace.csv").string());

  std::ostringstream queries;
  queries << "query,accuracy\n";
  for (std::size_t i = 0; i < result.trace.query_log.size(); ++i)
    queries << i + 1 << ',' << fmt(result.trace.query_log[i]) << '\n';
  write_text((dir / "queries.csv").string(), queries.str());

  std::ostringstream best;
  const auto best_vec = encode(result.best, lo.schema);
  for (std::size_t j = 0; j < best_vec.size(); ++j)
    if (best_vec[j]) best << lo.schema.label(j) << '\n';
  write_text((dir / "best.txt").string(), best.str());

  json reports = json::array();
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    json r = result.reports[i].to_json(lo.schema);
    r["iteration"] = i + 1;
    reports.push_back(std::move(r));
  }
  json prune_doc{{"reports", reports}, {"constraints", result.constraints.to_json(lo.schema)}};
  write_text((dir / "prune_reports.json").string(), prune_doc.dump(1) + "\n");

  json manifest{{"tool", "gbdtnas"},
                {"version", kToolVersion},
                {"command", "search"},
                {"config", resolved},
                {"seeds", {{"search", sc.seed}}},
                {"inputs", lo.inputs},
                {"artifacts",
                 {{"trace", "trace.csv"},
                  {"queries", "queries.csv"},
                  {"best", "best.txt"},
                  {"prune_reports", "prune_reports.json"}}},
                {"warnings", result.trace.warnings}};
  write_text((dir / "manifest.json").string(), manifest.dump(1) + "\n");

  out << "algorithm " << result.trace.algorithm << '\n';
  out << "queries " << result.trace.query_log.size() << '\n';
  out << "best_accuracy " << fmt(result.best_accuracy) << '\n';
  out << "constraints " << result.constraints.size() << '\n';
  out << "best_architecture " << describe(best_vec, lo.schema) << '\n';
  return kOk;
}

// --- eval-predictor -----------------------------------------------------------

struct EvalFlags {
  std::optional<std::string> schema, oracle, table;
  std::string out_csv;
  std::size_t train_size = 1000, test_size = 100, repeats = 100;
  std::uint64_t seed = 0;
  std::string norm = "standardize";
  TrainFlags train;
};

int cmd_eval_predictor(const EvalFlags& f, std::ostream& out) {
  LoadedOracle lo = load_oracle(f.schema, f.oracle, f.table);
  json tj = json::object();
  f.train.apply(tj);
  const TrainConfig tc = TrainConfig::from_json(tj);
  tc.validate();
  const NormMode mode = parse_norm_mode(f.norm);
  const std::size_t need = f.train_size + f.test_size;
  if (f.train_size == 0 || f.test_size < 2) throw ConfigError("need a positive train split and at least two test samples");
  if (f.repeats == 0) throw ConfigError("--repeats must be positive");

  std::vector<std::pair<FeatureVector, double>> rows;
  if (auto* tab = dynamic_cast<TabularOracle*>(lo.oracle.get())) {
    rows = tab->rows();
    if (rows.size() < need)
      throw ConfigError("table has " + std::to_string(rows.size()) + " rows; the split needs " + std::to_string(need));
  } else if (space_size_bound(lo.schema, {}) < static_cast<double>(need)) {
    throw ConfigError("search space is smaller than the requested split");
  }

  Rng rng(f.seed);
  std::ostringstream csv;
  csv << "repeat,train_pairwise_accuracy,test_pairwise_accuracy,test_prediction_ties,test_target_ties\n";
  double sum_train = 0, sum_test = 0;
  for (std::size_t r = 0; r < f.repeats; ++r) {
    std::vector<std::pair<FeatureVector, double>> draw;
    if (!rows.empty()) {
      std::vector<std::size_t> idx(rows.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t i = 0; i < need; ++i) draw.push_back(rows[idx[i]]);
    } else {
      std::unordered_set<FeatureVector, FeatureVectorHash> seen;
      while (draw.size() < need) {
        auto v = encode(sample_uniform(lo.schema, rng), lo.schema);
        if (!seen.insert(v).second) continue;
        const double y = lo.oracle->query(v);
        draw.emplace_back(std::move(v), y);
      }
    }
    ArchPool train, test;
    for (std::size_t i = 0; i < need; ++i) (i < f.train_size ? train : test).add(draw[i].first, draw[i].second);
    const GbdtModel m = fit(train, tc, mode);
    const double tr = pairwise_accuracy(m.predict_batch(train.vectors), train.targets);
    const auto te = pairwise_accuracy_detail(m.predict_batch(test.vectors), test.targets);
    sum_train += tr;
    sum_test += te.value;
    csv << r << ',' << fmt(tr) << ',' << fmt(te.value) << ',' << te.prediction_ties << ',' << te.target_ties << '\n';
  }
  if (!f.out_csv.empty()) write_text(f.out_csv, csv.str());
  const double n = static_cast<double>(f.repeats);
  out << "repeats " << f.repeats << '\n';
  out << "train_pairwise_accuracy_mean " << fmt(sum_train / n) << '\n';
  out << "test_pairwise_accuracy_mean " << fmt(sum_test / n) << '\n';
  return kOk;
}

// --- train / explain ----------------------------------------------------------

struct TrainCmdFlags {
  std::string schema, pool, out, norm = "standardize";
  TrainFlags train;
};

int cmd_train(const TrainCmdFlags& f, std::ostream& out) {
  const FeatureSchema schema = FeatureSchema::load(f.schema);
  const ArchPool pool = load_pool_csv(f.pool, schema);
  json tj = json::object();
  f.train.apply(tj);
  const TrainConfig tc = TrainConfig::from_json(tj);
  tc.validate();
  const GbdtModel m = fit(pool, tc, parse_norm_mode(f.norm));
  m.save(f.out);
  out << "trees " << m.trees.size() << '\n';
  out << "train_pairwise_accuracy " << fmt(pairwise_accuracy(m.predict_batch(pool.vectors), pool.targets)) << '\n';
  return kOk;
}

struct ExplainFlags {
  std::string schema, model, pool, shap_out, interactions_out;
};

int cmd_explain(const ExplainFlags& f, std::ostream& out) {
  const FeatureSchema schema = FeatureSchema::load(f.schema);
  const GbdtModel model = GbdtModel::load(f.model);
  if (model.dim != schema.dim())
    throw ConfigError("model expects " + std::to_string(model.dim) + " features but the schema has " +
                      std::to_string(schema.dim()));
  const ArchPool pool = load_pool_csv(f.pool, schema);

  const ShapMatrix s = shap_values(model, pool.vectors);
  std::ofstream csv(f.shap_out, std::ios::binary);
  if (!csv) throw ConfigError("cannot write " + f.shap_out);
  csv << "sample_id,feature_label,feature_value,shap_value\n";
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (std::size_t j = 0; j < schema.dim(); ++j)
      csv << i << ',' << schema.label(j) << ',' << int(pool.vectors[i][j]) << ',' << fmt(s(i, j)) << '\n';
  if (!csv) throw ConfigError("failed writing " + f.shap_out);

  if (!f.interactions_out.empty()) {
    std::ofstream icsv(f.interactions_out, std::ios::binary);
    if (!icsv) throw ConfigError("cannot write " + f.interactions_out);
    icsv << "sample_id,label_a,label_b,interaction_value\n";
    const std::size_t d = schema.dim();
    // Each unordered pair once; zero off-diagonal entries are omitted.
    for_each_interaction(model, pool.vectors, [&](std::size_t i, std::span<const double> slice) {
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
          const double v = slice[a * d + b];
          if (a != b && v == 0.0) continue;
          icsv << i << ',' << schema.label(a) << ',' << schema.label(b) << ',' << fmt(v) << '\n';
        }
    });
    if (!icsv) throw ConfigError("failed writing " + f.interactions_out);
  }
  out << "samples " << pool.size() << '\n';
  out << "expected_value " << fmt(s.expected_value()) << '\n';
  return kOk;
}

// --- gen-benchmark ------------------------------------------------------------

struct GenFlags {
  std::optional<std::string> schema;
  std::size_t groups = 8;
  std::string ops = "op1,op2,op3";
  std::vector<std::string> unary, pairs;
  double weight_low = -0.02, weight_high = 0.02, target_mean = 0.90, noise = 0.005;
  std::uint64_t seed = 0;
  std::string out, schema_out, table_out;
  std::size_t table_size = 0;
  bool table_all = false;
};

std::size_t resolve_feature(const FeatureSchema& s, const std::string& key) {
  if (!key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) { return std::isdigit(c); })) {
    const std::size_t j = std::stoull(key);
    if (j >= s.dim()) throw ConfigError("feature index " + key + " out of range");
    return j;
  }
  return s.feature_index(key);
}

double parse_weight(const std::string& text, std::string& key) {
  const auto eq = text.rfind('=');
  if (eq == std::string::npos) throw ConfigError("expected FEATURE=WEIGHT, got '" + text + "'");
  key = text.substr(0, eq);
  try {
    return std::stod(text.substr(eq + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad weight in '" + text + "'");
  }
}

int cmd_gen_benchmark(const GenFlags& f, std::ostream& out) {
  FeatureSchema schema;
  if (f.schema) {
    schema = FeatureSchema::load(*f.schema);
  } else {
    const auto ops = split(f.ops, ',');
    if (f.groups == 0) throw ConfigError("--groups must be positive");
    schema = make_chain_schema(f.groups, ops);
  }
  PlantedEffects planted;
  planted.weight_low = f.weight_low;
  planted.weight_high = f.weight_high;
  planted.target_mean = f.target_mean;
  for (const auto& u : f.unary) {
    std::string key;
    const double w = parse_weight(u, key);
    planted.unary.emplace_back(resolve_feature(schema, key), w);
  }
  for (const auto& p : f.pairs) {
    std::string key;
    const double w = parse_weight(p, key);
    const auto parts = split(key, ',');
    if (parts.size() != 2) throw ConfigError("expected A,B=WEIGHT, got '" + p + "'");
    const auto a = resolve_feature(schema, parts[0]);
    const auto b = resolve_feature(schema, parts[1]);
    if (a == b) throw ConfigError("a planted pair needs two distinct features");
    planted.pairs.emplace_back(a, b, w);
  }
  if (f.noise < 0) throw ConfigError("--noise must be non-negative");
  const SyntheticOracle oracle = make_synthetic(schema, planted, f.noise, f.seed);
  oracle.save(f.out);
  if (!f.schema_out.empty()) write_text(f.schema_out, schema.to_json().dump(1) + "\n");

  if (!f.table_out.empty()) {
    ArchPool pool;
    if (f.table_all) {
      for_each_architecture(schema, {}, 10'000'000, [&](const Architecture& a) {
        auto v = encode(a, schema);
        const double y = oracle.evaluate(v);
        pool.add(std::move(v), y);
      });
    } else {
      if (f.table_size == 0) throw ConfigError("--table-out needs --table-size N or --table-all");
      if (space_size_bound(schema, {}) < static_cast<double>(f.table_size))
        throw ConfigError("--table-size exceeds the size of the space");
      Rng rng(f.seed ^ 0x5DEECE66DULL);
      std::unordered_set<FeatureVector, FeatureVectorHash> seen;
      while (pool.size() < f.table_size) {
        auto v = encode(sample_uniform(schema, rng), schema);
        if (!seen.insert(v).second) continue;
        const double y = oracle.evaluate(v);
        pool.add(std::move(v), y);
      }
    }
    save_pool_csv(pool, schema, f.table_out);
    out << "table_rows " << pool.size() << '\n';
  }
  out << "features " << schema.dim() << '\n';
  out << "base " << fmt(oracle.base()) << '\n';
  return kOk;
}

// --- convert-table ------------------------------------------------------------

struct ConvertFlags {
  std::string input, schema_out, table_out;
  std::size_t max_nodes = 7;
  std::string ops = "conv3x3-bn-relu,conv1x1-bn-relu,maxpool3x3";
};

int cmd_convert_table(const ConvertFlags& f, std::ostream& out) {
  const auto ops = split(f.ops, ',');
  const FeatureSchema schema = make_cell_schema(f.max_nodes, ops);
  std::ifstream in(f.input);
  if (!in) throw ConfigError("cannot open " + f.input);
  TabularOracle table(schema);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto matrix = j.at("matrix").get<std::vector<std::vector<int>>>();
      const auto node_ops = j.at("ops").get<std::vector<std::string>>();
      table.insert(encode_cell(matrix, node_ops, schema, f.max_nodes), j.at("accuracy").get<double>());
    } catch (const json::exception& e) {
      throw ConfigError(f.input + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(f.input + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  ArchPool pool;
  for (const auto& [v, y] : table.rows()) pool.add(v, y);
  write_text(f.schema_out, schema.to_json().dump(1) + "\n");
  save_pool_csv(pool, schema, f.table_out);
  out << "features " << schema.dim() << '\n';
  out << "rows " << pool.size() << '\n';
  return kOk;
}

// --- schema -------------------------------------------------------------------

int cmd_schema(const std::string& path, std::ostream& out) {
  const FeatureSchema s = FeatureSchema::load(path);
  out << "index,group,kind,label\n";
  for (std::size_t j = 0; j < s.dim(); ++j) {
    const auto g = s.group_of(j);
    out << j << ',' << g << ',' << (s.group(g).kind == GroupKind::OneHot ? "onehot" : "binary") << ',' << s.label(j)
        << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Predictor-guided architecture search with SHAP search-space pruning"};
  app.set_version_flag("--version", std::string("gbdtnas ") + kToolVersion);
  app.require_subcommand(1);

  SearchFlags sf;
  auto* search = app.add_subcommand("search", "run GBDT-NAS(-S3) or a baseline against an oracle");
  search->add_option("--config", sf.config_path, "JSON config; flags override its entries");
  search->add_option("--manifest", sf.manifest_path, "replay the run recorded in a manifest");
  search->add_option("--schema", sf.schema, "schema JSON (required with --table)");
  search->add_option("--oracle", sf.oracle, "synthetic oracle JSON written by gen-benchmark");
  search->add_option("--table", sf.table, "accuracy table CSV");
  search->add_option("--out", sf.out, "output directory");
  search->add_option("--algo", sf.algo, "gbdt-nas | gbdt-nas-s3 | random | evolution");
  search->add_option("--prune", sf.prune, "none | first-order | second-order | importance");
  search->add_option("--n", sf.n, "initial architectures N");
  search->add_option("--m", sf.m, "candidates per iteration M, or \"all\"");
  search->add_option("--k", sf.k, "architectures evaluated per iteration K");
  search->add_option("--t", sf.t, "iterations T");
  search->add_option("--n-pf", sf.n_pf, "features or pairs examined per pruning round");
  search->add_option("--norm", sf.norm, "standardize | minmax");
  search->add_option("--seed", sf.seed, "random seed");
  search->add_option("--max-attempts", sf.max_attempts, "rejection-sampling attempts per draw");
  search->add_option("--enumeration-cap", sf.enumeration_cap, "largest space enumerated for --m all");
  search->add_option("--budget", sf.budget, "query budget for random and evolution (default N + T*K)");
  search->add_option("--population", sf.population, "evolution population size");
  search->add_option("--sample-size", sf.sample_size, "evolution tournament size");
  sf.train.add(search);

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval-predictor", "pairwise accuracy of the GBDT over repeated splits");
  eval->add_option("--schema", ef.schema, "schema JSON (required with --table)");
  eval->add_option("--oracle", ef.oracle, "synthetic oracle JSON");
  eval->add_option("--table", ef.table, "accuracy table CSV");
  eval->add_option("--train-size", ef.train_size, "training split size")->capture_default_str();
  eval->add_option("--test-size", ef.test_size, "test split size")->capture_default_str();
  eval->add_option("--repeats", ef.repeats, "number of random splits")->capture_default_str();
  eval->add_option("--seed", ef.seed, "random seed")->capture_default_str();
  eval->add_option("--norm", ef.norm, "standardize | minmax")->capture_default_str();
  eval->add_option("--out", ef.out_csv, "per-split CSV");
  ef.train.add(eval);

  TrainCmdFlags tf;
  auto* train = app.add_subcommand("train", "fit a GBDT on a pool CSV and save it");
  train->add_option("--schema", tf.schema, "schema JSON")->required();
  train->add_option("--pool", tf.pool, "pool CSV")->required();
  train->add_option("--out", tf.out, "model JSON")->required();
  train->add_option("--norm", tf.norm, "standardize | minmax")->capture_default_str();
  tf.train.add(train);

  ExplainFlags xf;
  auto* explain = app.add_subcommand("explain", "dump SHAP and interaction values for a pool");
  explain->add_option("--schema", xf.schema, "schema JSON")->required();
  explain->add_option("--model", xf.model, "model JSON")->required();
  explain->add_option("--pool", xf.pool, "pool CSV")->required();
  explain->add_option("--shap-out", xf.shap_out, "per-feature CSV")->required();
  explain->add_option("--interactions-out", xf.interactions_out, "pairwise CSV");

  GenFlags gf;
  auto* gen = app.add_subcommand("gen-benchmark", "write a seeded synthetic oracle");
  gen->add_option("--schema", gf.schema, "schema JSON (default: a chain space from --groups/--ops)");
  gen->add_option("--groups", gf.groups, "chain layers")->capture_default_str();
  gen->add_option("--ops", gf.ops, "comma-separated operations per layer")->capture_default_str();
  gen->add_option("--unary", gf.unary, "planted unary weight FEATURE=W (index or label)");
  gen->add_option("--pair", gf.pairs, "planted pair weight A,B=W");
  gen->add_option("--weight-low", gf.weight_low, "lower end of drawn unary weights")->capture_default_str();
  gen->add_option("--weight-high", gf.weight_high, "upper end of drawn unary weights")->capture_default_str();
  gen->add_option("--target-mean", gf.target_mean, "mean accuracy under uniform sampling")->capture_default_str();
  gen->add_option("--noise", gf.noise, "gaussian noise std")->capture_default_str();
  gen->add_option("--seed", gf.seed, "random seed")->capture_default_str();
  gen->add_option("--out", gf.out, "oracle JSON")->required();
  gen->add_option("--schema-out", gf.schema_out, "also write the schema JSON");
  gen->add_option("--table-out", gf.table_out, "also write an accuracy table CSV");
  gen->add_option("--table-size", gf.table_size, "distinct sampled rows for --table-out");
  gen->add_flag("--table-all", gf.table_all, "tabulate the whole space");

  ConvertFlags cf;
  auto* convert = app.add_subcommand("convert-table", "convert JSONL cells {matrix, ops, accuracy} to a table");
  convert->add_option("--input", cf.input, "JSONL file")->required();
  convert->add_option("--schema-out", cf.schema_out, "schema JSON")->required();
  convert->add_option("--table-out", cf.table_out, "table CSV")->required();
  convert->add_option("--max-nodes", cf.max_nodes, "nodes per cell including input and output")->capture_default_str();
  convert->add_option("--ops", cf.ops, "comma-separated interior operations")->capture_default_str();

  std::string schema_path;
  auto* schema_cmd = app.add_subcommand("schema", "validate a schema and print its label table");
  schema_cmd->add_option("--schema", schema_path, "schema JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << "gbdtnas " << kToolVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (*search) return cmd_search(sf, out);
    if (*eval) return cmd_eval_predictor(ef, out);
    if (*train) return cmd_train(tf, out);
    if (*explain) return cmd_explain(xf, out);
    if (*gen) return cmd_gen_benchmark(gf, out);
    if (*convert) return cmd_convert_table(cf, out);
    if (*schema_cmd) return cmd_schema(schema_path, out);
  } catch (const OracleError& e) {
    err << "oracle error: " << e.what() << '\n';
    return kOracleError;
  } catch (const InvariantError& e) {
    err << "invariant failure: " << e.what() << '\n';
    return kInvariantError;
  } catch (const Error& e) {
    // ConfigError and the remaining library errors are all input problems.
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInvariantError;
  }
  return kConfigError;
}

}  // namespace gbdtnas::cli
