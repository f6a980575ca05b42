#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arcp/attacks.hpp"
#include "arcp/dataio.hpp"
#include "arcp/model.hpp"
#include "arcp/scores.hpp"

namespace arcp {

struct PredictionSet {
  std::vector<std::size_t> labels;  // ascending

  std::size_t size() const noexcept { return labels.size(); }
  bool contains(std::size_t y) const;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// ⌈(n+1)(1−α)⌉-th smallest score, or +∞ when that rank exceeds n.
double conformal_quantile(std::span<const double> scores, double alpha);

PredictionSet prediction_set_from_scores(const Vector& label_scores, double q);

PredictionSet prediction_set(const ScoreSpec& spec, const Model& model, const Vector& x, double q,
                             std::uint64_t instance = 0);

// Scoring substreams. Calibration, evaluation and test draws for the same
// example never share noise.
inline constexpr std::string_view kCalStream = "cal";
inline constexpr std::string_view kEvalStream = "eval";
inline constexpr std::string_view kTestStream = "test";

std::uint64_t score_instance(std::string_view stream, std::size_t example_index);

// Which model the calibration/test attacks are generated against.
enum class AttackTarget { f0, fk };
std::string to_string(AttackTarget t);
AttackTarget parse_attack_target(const std::string& s);

/// Nonconformity scores s_k(g(x_i), y_i) for i in `cal`, where g attacks
/// `attack_target` and `model` scores.
std::vector<double> calibration_scores(const Model& model, const AttackSpec& attack,
                                       const Model& attack_target, const Dataset& ds,
                                       std::span<const std::size_t> cal, const ScoreSpec& score);

double calibrate_known_attack(const Model& model, const AttackSpec& attack,
                              const Model& attack_target, const Dataset& ds,
                              std::span<const std::size_t> cal, const ScoreSpec& score,
                              double alpha);

struct CalibrationResult {
  std::string model_id;
  double alpha = 0.1;
  std::vector<std::pair<std::string, double>> per_attack_q;  // in attack order
  double conservative_q = 0.0;

  double q_for(const std::string& attack_name) const;
};

/// Per-attack thresholds on the same calibration set and their maximum.
CalibrationResult calibrate_conservative(const Model& model, std::span<const AttackSpec> attacks,
                                         const Model& attack_target, const Dataset& ds,
                                         std::span<const std::size_t> cal, const ScoreSpec& score,
                                         double alpha, std::string model_id = "");

/// Attacks each example with `attack` against `attack_target`, scores it
/// with `model` on `stream`, and thresholds at q.
std::vector<PredictionSet> evaluate_pipeline(const Model& model, const Dataset& ds,
                                             std::span<const std::size_t> indices,
                                             const AttackSpec& attack, const Model& attack_target,
                                             const ScoreSpec& score, double q,
                                             std::string_view stream = kTestStream);

std::string calibration_to_json(const CalibrationResult& r);
CalibrationResult calibration_from_json(const std::string& text);

}  // namespace arcp
