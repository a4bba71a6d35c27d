#include "gbdtnas/space.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "gbdtnas/errors.hpp"

namespace gbdtnas {

namespace {

const char* kind_name(GroupKind k) { return k == GroupKind::OneHot ? "onehot" : "binary"; }

GroupKind parse_kind(const std::string& s) {
  if (s == "onehot" || s == "one_hot" || s == "OneHot") return GroupKind::OneHot;
  if (s == "binary" || s == "Binary") return GroupKind::Binary;
  throw ConfigError("unknown group kind '" + s + "'");
}

}  // namespace

FeatureSchema::FeatureSchema(std::vector<FeatureGroup> groups) : groups_(std::move(groups)) {
  std::set<std::string> seen;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const auto& grp = groups_[g];
    if (grp.kind == GroupKind::OneHot && grp.width() < 2)
      throw ConfigError("one-hot group " + std::to_string(g) + " needs at least 2 choices");
    if (grp.width() == 0) throw ConfigError("group " + std::to_string(g) + " is empty");
    offsets_.push_back(dim_);
    for (const auto& label : grp.labels) {
      if (label.find_first_of(",\"\n") != std::string::npos)
        throw ConfigError("label '" + label + "' contains a comma, quote or newline");
      if (!seen.insert(label).second) throw ConfigError("duplicate label '" + label + "'");
      labels_.push_back(label);
      owner_.push_back(g);
    }
    dim_ += grp.width();
  }
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  const auto& arr = j.contains("groups") ? j.at("groups") : j;
  if (!arr.is_array()) throw ConfigError("schema: expected an array of groups");
  std::vector<FeatureGroup> groups;
  try {
    for (const auto& item : arr) {
      FeatureGroup g;
      g.kind = parse_kind(item.at("kind").get<std::string>());
      g.name = item.value("name", std::string{});
      g.labels = item.at("labels").get<std::vector<std::string>>();
      groups.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: ") + e.what());
  }
  return FeatureSchema(std::move(groups));
}

FeatureSchema FeatureSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : groups_) {
    nlohmann::json item{{"kind", kind_name(g.kind)}, {"labels", g.labels}};
    if (!g.name.empty()) item["name"] = g.name;
    groups.push_back(std::move(item));
  }
  return {{"groups", std::move(groups)}};
}

std::size_t FeatureSchema::feature_index(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw ConfigError("no feature labelled '" + label + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  if (groups_.size() != other.groups_.size()) return false;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (groups_[g].kind != other.groups_[g].kind || groups_[g].labels != other.groups_[g].labels)
      return false;
  }
  return true;
}

FeatureSchema make_chain_schema(std::size_t layers, const std::vector<std::string>& ops) {
  std::vector<FeatureGroup> groups;
  for (std::size_t l = 1; l <= layers; ++l) {
    FeatureGroup g;
    g.kind = GroupKind::OneHot;
    g.name = "layer " + std::to_string(l);
    for (const auto& op : ops) g.labels.push_back("layer " + std::to_string(l) + " is " + op);
    groups.push_back(std::move(g));
  }
  return FeatureSchema(std::move(groups));
}

std::size_t FeatureVectorHash::operator()(const FeatureVector& v) const noexcept {
  // FNV-1a over the bit bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : v.bits) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

FeatureVector encode(const Architecture& arch, const FeatureSchema& schema) {
  if (arch.groups.size() != schema.num_groups())
    throw ConfigError("architecture has " + std::to_string(arch.groups.size()) + " groups, schema has " +
                      std::to_string(schema.num_groups()));
  FeatureVector v(std::vector<std::uint8_t>(schema.dim(), 0));
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    const auto& a = arch.groups[g];
    const std::size_t off = schema.offset(g);
    if (grp.kind == GroupKind::OneHot) {
      if (a.size() != 1 || a[0] >= grp.width())
        throw ConfigError("group " + std::to_string(g) + ": choice out of range");
      v[off + a[0]] = 1;
    } else {
      if (a.size() != grp.width()) throw ConfigError("group " + std::to_string(g) + ": wrong bit count");
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] > 1) throw ConfigError("group " + std::to_string(g) + ": bit value out of range");
        v[off + k] = static_cast<std::uint8_t>(a[k]);
      }
    }
  }
  return v;
}

void validate(const FeatureVector& vec, const FeatureSchema& schema) {
  if (vec.size() != schema.dim())
    throw ConfigError("vector length " + std::to_string(vec.size()) + " != schema dim " +
                      std::to_string(schema.dim()));
  for (std::size_t i = 0; i < vec.size(); ++i)
    if (vec[i] > 1) throw ConfigError("feature " + std::to_string(i) + " is not 0/1");
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    if (grp.kind != GroupKind::OneHot) continue;
    std::size_t ones = 0;
    for (std::size_t k = 0; k < grp.width(); ++k) ones += vec[schema.offset(g) + k];
    if (ones != 1)
      throw ConfigError("one-hot group " + std::to_string(g) + " has " + std::to_string(ones) + " set bits");
  }
}

Architecture decode(const FeatureVector& vec, const FeatureSchema& schema) {
  validate(vec, schema);
  Architecture arch;
  arch.groups.resize(schema.num_groups());
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    const std::size_t off = schema.offset(g);
    if (grp.kind == GroupKind::OneHot) {
      for (std::uint32_t k = 0; k < grp.width(); ++k)
        if (vec[off + k]) arch.groups[g] = {k};
    } else {
      for (std::size_t k = 0; k < grp.width(); ++k) arch.groups[g].push_back(vec[off + k]);
    }
  }
  return arch;
}

std::string describe(const FeatureVector& vec, const FeatureSchema& schema) {
  std::string out;
  for (std::size_t i = 0; i < vec.size(); ++i) {
    if (!vec[i]) continue;
    if (!out.empty()) out += "; ";
    out += schema.label(i);
  }
  return out;
}

// --- PrunedSet --------------------------------------------------------------

bool PrunedSet::pair_forbidden(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  return pairs_.count({a, b}) != 0;
}

PrunedSet::AddResult PrunedSet::forbid_feature(const FeatureSchema& schema, std::size_t feature) {
  if (feature >= schema.dim()) throw ConfigError("feature index out of range");
  if (features_.count(feature)) return AddResult::AlreadyPresent;
  features_.insert(feature);
  if (!satisfiable(schema)) {
    features_.erase(feature);
    return AddResult::Refused;
  }
  return AddResult::Added;
}

PrunedSet::AddResult PrunedSet::forbid_pair(const FeatureSchema& schema, std::size_t a, std::size_t b) {
  if (a >= schema.dim() || b >= schema.dim()) throw ConfigError("feature index out of range");
  if (a == b) return forbid_feature(schema, a);
  if (a > b) std::swap(a, b);
  if (pairs_.count({a, b})) return AddResult::AlreadyPresent;
  // Implied by an existing single-feature constraint.
  if (features_.count(a) || features_.count(b)) return AddResult::AlreadyPresent;
  pairs_.insert({a, b});
  if (!satisfiable(schema)) {
    pairs_.erase({a, b});
    return AddResult::Refused;
  }
  return AddResult::Added;
}

std::size_t PrunedSet::merge(const FeatureSchema& schema, const PrunedSet& delta) {
  std::size_t added = 0;
  for (auto f : delta.features_) added += forbid_feature(schema, f) == AddResult::Added;
  for (const auto& [a, b] : delta.pairs_) added += forbid_pair(schema, a, b) == AddResult::Added;
  return added;
}

bool PrunedSet::admits(const FeatureVector& vec) const {
  for (auto f : features_)
    if (f < vec.size() && vec[f]) return false;
  for (const auto& [a, b] : pairs_)
    if (vec[a] && vec[b]) return false;
  return true;
}

std::vector<std::uint32_t> PrunedSet::surviving_choices(const FeatureSchema& schema, std::size_t g) const {
  std::vector<std::uint32_t> out;
  const std::size_t off = schema.offset(g);
  for (std::uint32_t k = 0; k < schema.group(g).width(); ++k)
    if (!features_.count(off + k)) out.push_back(k);
  return out;
}

bool PrunedSet::satisfiable(const FeatureSchema& schema) const {
  // Binary features can always be 0, which satisfies every pair touching
  // them; only one-hot groups need a joint assignment. Backtrack over those.
  std::vector<std::size_t> onehot;
  std::vector<std::vector<std::uint32_t>> options;
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    if (schema.group(g).kind != GroupKind::OneHot) continue;
    auto opts = surviving_choices(schema, g);
    if (opts.empty()) return false;
    onehot.push_back(g);
    options.push_back(std::move(opts));
  }
  if (pairs_.empty()) return true;

  std::vector<std::size_t> chosen;  // active feature per assigned one-hot group
  std::function<bool(std::size_t)> assign = [&](std::size_t i) -> bool {
    if (i == onehot.size()) return true;
    const std::size_t off = schema.offset(onehot[i]);
    for (auto c : options[i]) {
      const std::size_t f = off + c;
      bool ok = true;
      for (auto prev : chosen)
        if (pair_forbidden(prev, f)) {
          ok = false;
          break;
        }
      if (!ok) continue;
      chosen.push_back(f);
      if (assign(i + 1)) return true;
      chosen.pop_back();
    }
    return false;
  };
  return assign(0);
}

nlohmann::json PrunedSet::to_json(const FeatureSchema& schema) const {
  nlohmann::json feats = nlohmann::json::array();
  for (auto f : features_) feats.push_back({{"index", f}, {"label", schema.label(f)}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : pairs_)
    pairs.push_back({{"a", a}, {"b", b}, {"label_a", schema.label(a)}, {"label_b", schema.label(b)}});
  return {{"forbidden_features", feats}, {"forbidden_pairs", pairs}};
}

PrunedSet PrunedSet::from_json(const nlohmann::json& j) {
  PrunedSet z;
  for (const auto& f : j.at("forbidden_features")) z.features_.insert(f.at("index").get<std::size_t>());
  for (const auto& p : j.at("forbidden_pairs")) {
    auto a = p.at("a").get<std::size_t>();
    auto b = p.at("b").get<std::size_t>();
    z.pairs_.insert({std::min(a, b), std::max(a, b)});
  }
  return z;
}

// --- sampling ---------------------------------------------------------------

namespace {

Architecture propose(const FeatureSchema& schema, const PrunedSet& z, Rng& rng) {
  Architecture arch;
  arch.groups.resize(schema.num_groups());
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    const std::size_t off = schema.offset(g);
    if (grp.kind == GroupKind::OneHot) {
      auto opts = z.surviving_choices(schema, g);
      if (opts.empty()) throw OverPruned("one-hot group " + std::to_string(g) + " has no surviving choice");
      std::uniform_int_distribution<std::size_t> pick(0, opts.size() - 1);
      arch.groups[g] = {opts[pick(rng)]};
    } else {
      auto& bits = arch.groups[g];
      bits.resize(grp.width());
      std::uniform_int_distribution<int> coin(0, 1);
      for (std::size_t k = 0; k < grp.width(); ++k)
        bits[k] = z.feature_forbidden(off + k) ? 0u : static_cast<std::uint32_t>(coin(rng));
    }
  }
  return arch;
}

}  // namespace

Architecture sample_uniform(const FeatureSchema& schema, Rng& rng) { return propose(schema, PrunedSet{}, rng); }

Architecture sample_uniform(const FeatureSchema& schema, std::uint64_t seed) {
  Rng rng(seed);
  return sample_uniform(schema, rng);
}

Architecture sample_constrained(const FeatureSchema& schema, const PrunedSet& z, Rng& rng,
                                std::size_t max_attempts) {
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    Architecture arch = propose(schema, z, rng);
    if (z.forbidden_pairs().empty() || z.admits(encode(arch, schema))) return arch;
  }
  throw OverPruned("no admissible architecture after " + std::to_string(max_attempts) + " attempts");
}

Architecture sample_constrained(const FeatureSchema& schema, const PrunedSet& z, std::uint64_t seed,
                                std::size_t max_attempts) {
  Rng rng(seed);
  return sample_constrained(schema, z, rng, max_attempts);
}

// --- enumeration ------------------------------------------------------------

double space_size_bound(const FeatureSchema& schema, const PrunedSet& z) {
  double size = 1.0;
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    if (grp.kind == GroupKind::OneHot) {
      size *= static_cast<double>(z.surviving_choices(schema, g).size());
    } else {
      for (std::size_t k = 0; k < grp.width(); ++k)
        if (!z.feature_forbidden(schema.offset(g) + k)) size *= 2.0;
    }
  }
  return size;
}

void for_each_architecture(const FeatureSchema& schema, const PrunedSet& z, std::size_t cap,
                           const std::function<void(const Architecture&)>& visit) {
  const double bound = space_size_bound(schema, z);
  if (bound > static_cast<double>(cap))
    throw CapExceeded("space size " + std::to_string(bound) + " exceeds cap " + std::to_string(cap));
  if (bound == 0.0) return;

  // Odometer over "slots": one per one-hot group (surviving choices) and one
  // per free binary bit; the last slot turns fastest.
  struct Slot {
    std::size_t group;
    std::size_t bit;  // binary slots only
    std::vector<std::uint32_t> values;
  };
  std::vector<Slot> slots;
  Architecture arch;
  arch.groups.resize(schema.num_groups());
  for (std::size_t g = 0; g < schema.num_groups(); ++g) {
    const auto& grp = schema.group(g);
    if (grp.kind == GroupKind::OneHot) {
      slots.push_back({g, 0, z.surviving_choices(schema, g)});
      arch.groups[g] = {slots.back().values[0]};
    } else {
      arch.groups[g].assign(grp.width(), 0);
      for (std::size_t k = 0; k < grp.width(); ++k)
        if (!z.feature_forbidden(schema.offset(g) + k)) slots.push_back({g, k, {0, 1}});
    }
  }
  std::vector<std::size_t> pos(slots.size(), 0);
  const bool check_pairs = !z.forbidden_pairs().empty();
  while (true) {
    if (!check_pairs || z.admits(encode(arch, schema))) visit(arch);
    std::size_t s = slots.size();
    while (s > 0) {
      --s;
      auto& slot = slots[s];
      if (++pos[s] < slot.values.size()) {
        const bool onehot = schema.group(slot.group).kind == GroupKind::OneHot;
        arch.groups[slot.group][onehot ? 0 : slot.bit] = slot.values[pos[s]];
        break;
      }
      pos[s] = 0;
      const bool onehot = schema.group(slot.group).kind == GroupKind::OneHot;
      arch.groups[slot.group][onehot ? 0 : slot.bit] = slot.values[0];
      if (s == 0) return;
    }
    if (slots.empty()) return;
  }
}

std::vector<Architecture> enumerate(const FeatureSchema& schema, const PrunedSet& z, std::size_t cap) {
  std::vector<Architecture> out;
  for_each_architecture(schema, z, cap, [&](const Architecture& a) { out.push_back(a); });
  return out;
}

}  // namespace gbdtnas
