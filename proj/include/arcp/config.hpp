#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "arcp/attacks.hpp"
#include "arcp/conformal.hpp"
#include "arcp/dataio.hpp"
#include "arcp/model.hpp"
#include "arcp/scores.hpp"

namespace arcp {

// Flat `section.key=value` text; '#' starts a comment line.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_map(const std::filesystem::path& path);

struct DataConfig {
  std::string path;  // empty → synthetic
  std::size_t num_classes = 4;
  std::size_t dim = 8;
  std::size_t per_class = 300;
  double spread = 0.12;
};

struct RunConfig {
  double alpha = 0.1;
  std::uint64_t seed = 0;
  std::size_t replications = 20;
  std::filesystem::path out_dir = "out";
  DataConfig data;
  SplitMode split_mode = SplitMode::rq12;
  std::vector<AttackSpec> attacks;
  ScoreSpec score;
  TrainConfig train;
  std::vector<std::string> adversarial_defenses;  // attack names to train defenses against
  bool include_max = true;
  bool include_min = true;
  std::filesystem::path models_dir;  // empty → train in-process
  AttackTarget attack_target = AttackTarget::f0;

  const AttackSpec& attack(const std::string& name) const;
};

/// Builds a validated RunConfig. Unknown keys and bad values raise
/// ConfigError. Sub-seeds not given explicitly derive from `seed`.
RunConfig build_config(const ConfigMap& map);

}  // namespace arcp
