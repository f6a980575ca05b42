#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcp/config.hpp"
#include "arcp/game.hpp"
#include "arcp/metrics.hpp"

namespace arcp {

/// Everything the research-question pipelines share: data, the base split
/// (train/val fixed; cal/eval/test redrawn per replication), the reference
/// model f0 and the defenses built from it.
struct Workspace {
  RunConfig cfg;
  std::optional<Dataset> data;
  SplitIndices base_split;
  std::shared_ptr<const Classifier> reference;  // f0, the "normal" model
  std::vector<Defense> defenses;

  const Dataset& ds() const { return *data; }
};

Dataset load_or_generate_data(const RunConfig& cfg);

// Trains (or loads from cfg.models_dir) the normal model and one
// adversarially trained model per configured attack.
std::vector<std::pair<std::string, std::shared_ptr<const Classifier>>> build_base_models(
    const RunConfig& cfg, const Dataset& ds, std::span<const std::size_t> train_indices);

/// normal, adversarial defenses, then max/min aggregates over the
/// adversarial members (or over normal when there are none).
Workspace prepare_workspace(const RunConfig& cfg, SplitMode mode);

// Split used by replication r.
SplitIndices replication_split(const Workspace& ws, SplitMode mode, std::size_t r);

/// Label-score vectors for every (defense, attack, stream, pool example),
/// computed once and shared by all replications.
class ScoreCache {
 public:
  ScoreCache(const Workspace& ws, std::span<const std::string_view> streams);

  const Vector& scores(std::size_t defense, std::size_t attack, std::string_view stream,
                       std::size_t example) const;

 private:
  std::size_t stream_slot(std::string_view stream) const;

  std::vector<std::string> streams_;
  // [defense][attack][stream] → per dataset index (empty outside the pool)
  std::vector<std::vector<std::vector<std::vector<Vector>>>> table_;
};

struct CellResult {
  std::string defense;
  std::string attack;
  std::vector<MetricsReport> per_replication;
};

struct Rq12Result {
  std::vector<CellResult> rq1;  // calibrated and tested under the same attack
  std::vector<CellResult> rq2;  // conservative threshold, tested under each attack
  std::vector<std::vector<CalibrationResult>> calibrations;  // [replication][defense]
};

Rq12Result run_rq12(const Workspace& ws, const ScoreCache& cache);

struct StrategyResult {
  std::string name;  // "equilibrium", "uniform", or a defense id
  std::vector<MetricsReport> per_replication;
  std::vector<double> size_std_error;  // per replication
};

struct Rq3Replication {
  std::vector<CalibrationResult> calibrations;
  PayoffMatrix eval_payoff;
  PayoffMatrix test_payoff;
  MixedStrategy equilibrium;
};

struct Rq3Result {
  std::vector<Rq3Replication> replications;
  std::vector<StrategyResult> strategies;
};

Rq3Result run_rq3(const Workspace& ws, const ScoreCache& cache);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};
Summary summarize(std::span<const double> values);

std::string report_header();
std::string report_rows(const std::vector<CellResult>& cells, ScoreKind kind);
std::string report_rows(const std::vector<StrategyResult>& strategies, ScoreKind kind);

// Command drivers; each writes its files under cfg.out_dir once all work is done.
void cmd_gen_data(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_rq1(const RunConfig& cfg);
void cmd_rq2(const RunConfig& cfg);
void cmd_rq3(const RunConfig& cfg);
MixedStrategy cmd_solve_game(const std::filesystem::path& matrix_csv,
                             const std::filesystem::path& out_dir);

}  // namespace arcp
