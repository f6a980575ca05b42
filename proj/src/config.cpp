#include "arcp/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "arcp/errors.hpp"
#include "arcp/rng.hpp"

namespace arcp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto c = v.find(',', start);
    auto item = trim(std::string_view(v).substr(start, c == std::string::npos ? std::string::npos : c - start));
    if (!item.empty()) out.push_back(item);
    if (c == std::string::npos) break;
    start = c + 1;
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const ConfigMap& map) : map_(map) {}

  bool has(const std::string& key) const { return map_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) {
    used_.insert(key);
    auto it = map_.find(key);
    return it == map_.end() ? def : it->second;
  }

  double real(const std::string& key, double def) {
    used_.insert(key);
    auto it = map_.find(key);
    if (it == map_.end()) return def;
    const auto& s = it->second;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
    return v;
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    used_.insert(key);
    auto it = map_.find(key);
    if (it == map_.end()) return def;
    const auto& s = it->second;
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty())
      throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
  }

  bool flag(const std::string& key, bool def) {
    used_.insert(key);
    auto it = map_.find(key);
    if (it == map_.end()) return def;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + it->second + "'");
  }

  void reject_unused() const {
    for (const auto& [k, v] : map_)
      if (!used_.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap map;
  std::size_t start = 0, lineno = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = trim(std::string_view(text).substr(start, nl == std::string::npos ? std::string::npos : nl - start));
    start = nl == std::string::npos ? text.size() : nl + 1;
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (map.count(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    map[key] = value;
  }
  return map;
}

ConfigMap load_config_map(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: '" + path.string() + "'");
  return parse_config_text(read_file(path));
}

const AttackSpec& RunConfig::attack(const std::string& name) const {
  for (const auto& a : attacks)
    if (a.name == name) return a;
  throw ConfigError("config: no attack named '" + name + "'");
}

RunConfig build_config(const ConfigMap& map) {
  Reader r(map);
  RunConfig c;
  c.alpha = r.real("alpha", 0.1);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("config: alpha must be in (0,1)");
  c.seed = r.count("seed", 0);
  c.replications = r.count("replications", 20);
  if (c.replications < 1) throw ConfigError("config: replications must be >= 1");
  c.out_dir = r.str("out", "out");

  c.data.path = r.str("data.path", "");
  c.data.num_classes = r.count("data.num_classes", c.data.num_classes);
  c.data.dim = r.count("data.dim", c.data.dim);
  c.data.per_class = r.count("data.per_class", c.data.per_class);
  c.data.spread = r.real("data.spread", c.data.spread);
  c.split_mode = as_config_error([&] { return parse_split_mode(r.str("split.mode", "rq12")); });
  c.attack_target = as_config_error([&] { return parse_attack_target(r.str("attack_target", "f0")); });

  const auto names = split_list(r.str("attacks.list", "clean,fgsm,pgd,spsa,cw"));
  if (names.empty()) throw ConfigError("config: attacks.list is empty");
  for (const auto& name : names) {
    const std::string p = "attacks." + name + ".";
    AttackSpec a;
    if (r.has(p + "kind")) {
      a = AttackSpec::defaults(as_config_error([&] { return parse_attack_kind(r.str(p + "kind", "")); }));
    } else {
      a = AttackSpec::defaults(as_config_error([&] { return parse_attack_kind(name); }));
    }
    a.name = name;
    a.epsilon = r.real(p + "epsilon", a.epsilon);
    a.pgd_step = r.real(p + "pgd_step", a.pgd_step);
    a.pgd_iters = r.count(p + "pgd_iters", a.pgd_iters);
    a.spsa_delta = r.real(p + "spsa_delta", a.spsa_delta);
    a.spsa_samples = r.count(p + "spsa_samples", a.spsa_samples);
    a.spsa_step = r.real(p + "spsa_step", a.spsa_step);
    a.spsa_iters = r.count(p + "spsa_iters", a.spsa_iters);
    a.cw_c = r.real(p + "cw_c", a.cw_c);
    a.cw_kappa = r.real(p + "cw_kappa", a.cw_kappa);
    a.cw_steps = r.count(p + "cw_steps", a.cw_steps);
    a.cw_lr = r.real(p + "cw_lr", a.cw_lr);
    a.cw_clip_to_eps = r.flag(p + "cw_clip_to_eps", a.cw_clip_to_eps);
    a.seed = r.count(p + "seed", derive_seed(c.seed, "attack." + name));
    as_config_error([&] { a.validate(); return 0; });
    if (std::any_of(c.attacks.begin(), c.attacks.end(), [&](const AttackSpec& o) { return o.name == name; }))
      throw ConfigError("config: duplicate attack '" + name + "'");
    c.attacks.push_back(a);
  }

  auto& s = c.score;
  s.kind = as_config_error([&] { return parse_score_kind(r.str("score.kind", "APS")); });
  s.base = as_config_error([&] { return parse_score_kind(r.str("score.base", "APS")); });
  s.sigma = r.real("score.sigma", s.sigma);
  s.n_noise = r.count("score.n_noise", s.n_noise);
  s.vrcp_epsilon = r.real("score.vrcp_epsilon", s.vrcp_epsilon);
  s.n_perturb = r.count("score.n_perturb", s.n_perturb);
  s.include_clean_copy = r.flag("score.include_clean_copy", s.include_clean_copy);
  s.seed = r.count("score.seed", derive_seed(c.seed, "score"));
  as_config_error([&] { s.validate(); return 0; });

  auto& t = c.train;
  t.epochs = r.count("train.epochs", t.epochs);
  t.batch_size = r.count("train.batch_size", t.batch_size);
  t.learning_rate = r.real("train.learning_rate", t.learning_rate);
  t.lr_decay = r.real("train.lr_decay", t.lr_decay);
  t.kind = as_config_error([&] { return parse_classifier_kind(r.str("train.kind", "mlp1")); });
  t.hidden = r.count("train.hidden", t.hidden);
  t.seed = r.count("train.seed", derive_seed(c.seed, "train"));
  as_config_error([&] { t.validate(); return 0; });

  c.adversarial_defenses = split_list(r.str("defenses.adversarial", "fgsm,pgd,spsa"));
  for (const auto& d : c.adversarial_defenses) {
    c.attack(d);
    if (d == "normal" || d == "max" || d == "min")
      throw ConfigError("config: defense name '" + d + "' is reserved");
  }
  c.include_max = r.flag("defenses.max", true);
  c.include_min = r.flag("defenses.min", true);
  c.models_dir = r.str("models.dir", "");

  r.reject_unused();
  return c;
}

}  // namespace arcp
