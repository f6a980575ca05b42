#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arcp/conformal.hpp"
#include "arcp/metrics.hpp"

namespace arcp {

struct Defense {
  std::string id;
  std::shared_ptr<const Model> model;
};

/// Rows are defenses (the minimizer), columns attacks (the maximizer);
/// entries are mean prediction-set sizes.
struct PayoffMatrix {
  Matrix values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
};

struct MixedStrategy {
  Vector defender;
  Vector attacker;
  double value = 0.0;
  // Support pair that produced this equilibrium.
  std::vector<std::size_t> defender_support;
  std::vector<std::size_t> attacker_support;
};

/// Support enumeration over square support pairs (size 1, 2, ...; each
/// size in lexicographic order of row then column indices). Each pair's
/// indifference system is solved exactly; a candidate is accepted when both
/// strategies are nonnegative, normalized, and mutual best responses.
/// Returns the first accepted equilibrium, except that a row minimal in every
/// column is returned as a pure defense against its worst column.
MixedStrategy solve_zero_sum(const Matrix& payoff);

/// Every distinct equilibrium found by the same enumeration.
std::vector<MixedStrategy> all_equilibria(const Matrix& payoff);

struct LpSolution {
  double value = 0.0;
  Vector defender;
};

/// min_u max_j (uᵀP)_j over the simplex, via a dense-tableau simplex with
/// Bland's rule on the normalized LP (max Σx s.t. P'ᵀx ≤ 1, x ≥ 0).
LpSolution lp_minimax(const Matrix& payoff);

/// Entry (k, j): mean |Γ| over `indices` attacked by attacks[j] against
/// `attack_target`, scored by defenses[k] at its conservative threshold.
PayoffMatrix build_payoff(std::span<const Defense> defenses, std::span<const AttackSpec> attacks,
                          const Model& attack_target, const Dataset& ds,
                          std::span<const std::size_t> indices, const ScoreSpec& score,
                          std::span<const CalibrationResult> calibrations,
                          std::string_view stream = kEvalStream);

Vector uniform_strategy(std::size_t n);

// Index drawn from a probability vector with the given RNG.
std::size_t sample_index(const Vector& probs, Rng& rng);

/// (defense, attack) pair drawn for one example under a mixed profile.
/// The two draws use independent substreams of `seed` keyed by the example.
std::pair<std::size_t, std::size_t> draw_profile(const Vector& defender, const Vector& attacker,
                                                 std::uint64_t seed, std::size_t example_index);

struct StrategyEvaluation {
  std::vector<PredictionSet> sets;
  std::vector<std::size_t> defense_used;
  std::vector<std::size_t> attack_used;
  MetricsReport metrics;
  double size_std_error = 0.0;  // standard error of the mean set size
};

/// For each example, draws a defense from `defender` and an attack from
/// `attacker` (independent per-example substreams of `seed`), then builds
/// the set with that defense at its conservative threshold.
StrategyEvaluation evaluate_strategy(const Vector& defender, const Vector& attacker,
                                     std::span<const Defense> defenses,
                                     std::span<const AttackSpec> attacks,
                                     const Model& attack_target, const Dataset& ds,
                                     std::span<const std::size_t> indices, const ScoreSpec& score,
                                     std::span<const CalibrationResult> calibrations,
                                     std::uint64_t seed, double alpha);

std::string payoff_to_csv(const PayoffMatrix& p);
PayoffMatrix payoff_from_csv(const std::string& text);
PayoffMatrix read_payoff(const std::filesystem::path& path);

std::string equilibrium_to_json(const MixedStrategy& s, const PayoffMatrix& p);

}  // namespace arcp
