#pragma once

#include <cstdint>
#include <string>

#include "arcp/dataio.hpp"
#include "arcp/model.hpp"

namespace arcp {

enum class ScoreKind { THR, APS, RSCP, VRCP_I, VRCP_C };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(const std::string& s);

struct ScoreSpec {
  ScoreKind kind = ScoreKind::APS;
  ScoreKind base = ScoreKind::APS;  // THR or APS; used by the wrapper kinds
  double sigma = 0.05;
  std::size_t n_noise = 32;
  double vrcp_epsilon = 0.1;
  std::size_t n_perturb = 16;
  bool include_clean_copy = true;
  std::uint64_t seed = 0;

  void validate() const;
  bool randomized() const noexcept {
    return kind == ScoreKind::RSCP || kind == ScoreKind::VRCP_I || kind == ScoreKind::VRCP_C;
  }
};

// −p̂ for every label.
Vector thr_scores(const Vector& probs);

// Cumulative probability of all labels ranked at or above y (descending by
// probability, ties broken by label index). Computed as 1 minus the mass
// ranked strictly below y, so the least probable label scores exactly 1.
Vector aps_scores(const Vector& probs);

/// Score of every label for input x. Randomized kinds draw one set of
/// noise/perturbation samples for x (substream `instance` of spec.seed) and
/// share it across labels.
Vector score_all_labels(const ScoreSpec& spec, const Model& model, const Vector& x,
                        std::uint64_t instance = 0);

double score(const ScoreSpec& spec, const Model& model, const Vector& x, std::size_t y,
             std::uint64_t instance = 0);

}  // namespace arcp
