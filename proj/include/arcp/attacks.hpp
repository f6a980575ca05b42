#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arcp/dataio.hpp"
#include "arcp/model.hpp"
#include "arcp/rng.hpp"

namespace arcp {

enum class AttackKind { Clean, FGSM, PGD, SPSA, CW };

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& s);

struct AttackSpec {
  std::string name = "clean";
  AttackKind kind = AttackKind::Clean;
  double epsilon = 0.1;  // ∞-norm budget; unused by CW unless cw_clip_to_eps
  double pgd_step = 0.025;
  std::size_t pgd_iters = 10;
  double spsa_delta = 0.01;
  std::size_t spsa_samples = 8;
  double spsa_step = 0.025;
  std::size_t spsa_iters = 10;
  double cw_c = 1.0;
  double cw_kappa = 0.0;
  std::size_t cw_steps = 100;
  double cw_lr = 0.05;
  bool cw_clip_to_eps = false;
  std::uint64_t seed = 0;

  void validate() const;
  bool randomized() const noexcept { return kind == AttackKind::SPSA; }

  static AttackSpec defaults(AttackKind kind);
};

/// Dispatches to the attack named by `spec.kind`. `instance` selects the
/// random substream (derived from spec.seed) for randomized attacks; callers
/// pass the example's dataset index so results are order independent.
Vector apply_attack(const AttackSpec& spec, const Model& model, const Vector& x, std::size_t y,
                    std::uint64_t instance = 0);

/// clip_[0,1](x + ε·sign(∇_x loss)), with sign(0) = 0.
Vector fgsm(const Model& model, const Vector& x, std::size_t y, double epsilon);

/// Iterated signed-gradient steps from x, each projected onto the ε-ball
/// around x intersected with the unit box.
Vector pgd(const Model& model, const Vector& x, std::size_t y, double epsilon, double step,
           std::size_t iters);

/// Mean over `samples` Rademacher directions r of
/// (L(x + δr) − L(x − δr)) / (2δ) · r.
Vector spsa_gradient_estimate(const Model& model, const Vector& x, std::size_t y, double delta,
                              std::size_t samples, Rng& rng);

Vector spsa(const Model& model, const Vector& x, std::size_t y, const AttackSpec& spec,
            std::uint64_t instance = 0);

/// Untargeted margin Z_y − max_{j≠y} Z_j.
double logit_margin(const Model& model, const Vector& x, std::size_t y);

/// Gradient descent on ‖x′ − x‖² + c·max(margin(x′), −κ) over w with
/// x′ = (tanh(w) + 1) / 2.
Vector cw(const Model& model, const Vector& x, std::size_t y, const AttackSpec& spec);

/// Attacks ds[i] for every i in `indices`, using i as the instance id.
std::vector<Vector> attack_examples(const AttackSpec& spec, const Model& model, const Dataset& ds,
                                    std::span<const std::size_t> indices);

}  // namespace arcp
