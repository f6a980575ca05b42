#include "arcp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "arcp/errors.hpp"

namespace arcp {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Clean: return "Clean";
    case AttackKind::FGSM: return "FGSM";
    case AttackKind::PGD: return "PGD";
    case AttackKind::SPSA: return "SPSA";
    case AttackKind::CW: return "CW";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "CLEAN") return AttackKind::Clean;
  if (u == "FGSM") return AttackKind::FGSM;
  if (u == "PGD") return AttackKind::PGD;
  if (u == "SPSA") return AttackKind::SPSA;
  if (u == "CW") return AttackKind::CW;
  throw ParameterError("unknown attack kind '" + s + "'");
}

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw ParameterError("attack '" + name + "': epsilon must be >= 0");
  switch (kind) {
    case AttackKind::Clean:
    case AttackKind::FGSM:
      break;
    case AttackKind::PGD:
      if (!(pgd_step > 0.0)) throw ParameterError("attack '" + name + "': pgd_step must be > 0");
      if (pgd_iters < 1) throw ParameterError("attack '" + name + "': pgd_iters must be >= 1");
      break;
    case AttackKind::SPSA:
      if (!(spsa_delta > 0.0)) throw ParameterError("attack '" + name + "': spsa_delta must be > 0");
      if (!(spsa_step > 0.0)) throw ParameterError("attack '" + name + "': spsa_step must be > 0");
      if (spsa_samples < 1) throw ParameterError("attack '" + name + "': spsa_samples must be >= 1");
      if (spsa_iters < 1) throw ParameterError("attack '" + name + "': spsa_iters must be >= 1");
      break;
    case AttackKind::CW:
      if (!(cw_c >= 0.0)) throw ParameterError("attack '" + name + "': cw_c must be >= 0");
      if (!(cw_kappa >= 0.0)) throw ParameterError("attack '" + name + "': cw_kappa must be >= 0");
      if (cw_steps < 1) throw ParameterError("attack '" + name + "': cw_steps must be >= 1");
      if (!(cw_lr > 0.0)) throw ParameterError("attack '" + name + "': cw_lr must be > 0");
      break;
  }
}

AttackSpec AttackSpec::defaults(AttackKind kind) {
  AttackSpec s;
  s.kind = kind;
  s.name = to_string(kind);
  std::transform(s.name.begin(), s.name.end(), s.name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (kind == AttackKind::Clean) s.epsilon = 0.0;
  return s;
}

namespace {

void check_input(const Model& model, const Vector& x, std::size_t y) {
  if (static_cast<std::size_t>(x.size()) != model.dim())
    throw DimensionError("attack: input has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.dim()));
  if (y >= model.num_classes()) throw ParameterError("attack: label out of range");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vector checked_gradient(const Model& model, const Vector& x, std::size_t y) {
  Vector g = input_gradient(model, x, y);
  if (!g.allFinite()) throw NumericError("attack: non-finite input gradient");
  return g;
}

// One signed step followed by projection onto ball(origin, ε) ∩ [0,1]^d.
void signed_step(Vector& cur, const Vector& origin, const Vector& direction, double step,
                 double epsilon) {
  for (Eigen::Index j = 0; j < cur.size(); ++j) {
    const double lo = std::max(0.0, origin[j] - epsilon);
    const double hi = std::min(1.0, origin[j] + epsilon);
    cur[j] = std::clamp(cur[j] + step * sign(direction[j]), lo, hi);
  }
}

}  // namespace

Vector fgsm(const Model& model, const Vector& x, std::size_t y, double epsilon) {
  check_input(model, x, y);
  const Vector g = checked_gradient(model, x, y);
  Vector out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    out[j] = std::clamp(x[j] + epsilon * sign(g[j]), 0.0, 1.0);
  return out;
}

Vector pgd(const Model& model, const Vector& x, std::size_t y, double epsilon, double step,
           std::size_t iters) {
  check_input(model, x, y);
  if (!(step > 0.0)) throw ParameterError("pgd: step must be > 0");
  Vector cur = x;
  for (std::size_t t = 0; t < iters; ++t) signed_step(cur, x, checked_gradient(model, cur, y), step, epsilon);
  return cur;
}

Vector spsa_gradient_estimate(const Model& model, const Vector& x, std::size_t y, double delta,
                              std::size_t samples, Rng& rng) {
  check_input(model, x, y);
  if (samples < 1) throw ParameterError("spsa: samples must be >= 1");
  std::bernoulli_distribution coin(0.5);
  Vector est = Vector::Zero(x.size());
  Vector r(x.size());
  for (std::size_t s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < r.size(); ++j) r[j] = coin(rng) ? 1.0 : -1.0;
    const double diff = loss(model, x + delta * r, y) - loss(model, x - delta * r, y);
    est += (diff / (2.0 * delta)) * r;
  }
  est /= static_cast<double>(samples);
  if (!est.allFinite()) throw NumericError("spsa: non-finite gradient estimate");
  return est;
}

Vector spsa(const Model& model, const Vector& x, std::size_t y, const AttackSpec& spec,
            std::uint64_t instance) {
  check_input(model, x, y);
  Rng rng = make_rng(spec.seed, "attack.spsa", instance);
  Vector cur = x;
  for (std::size_t t = 0; t < spec.spsa_iters; ++t) {
    const Vector est = spsa_gradient_estimate(model, cur, y, spec.spsa_delta, spec.spsa_samples, rng);
    signed_step(cur, x, est, spec.spsa_step, spec.epsilon);
  }
  return cur;
}

double logit_margin(const Model& model, const Vector& x, std::size_t y) {
  const Vector z = model.logits(x);
  double other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < z.size(); ++j)
    if (static_cast<std::size_t>(j) != y) other = std::max(other, z[j]);
  return z[static_cast<Eigen::Index>(y)] - other;
}

Vector cw(const Model& model, const Vector& x, std::size_t y, const AttackSpec& spec) {
  check_input(model, x, y);
  if (spec.cw_steps < 1) throw ParameterError("cw: cw_steps must be >= 1");
  if (model.num_classes() < 2) throw ParameterError("cw: needs at least two classes");
  constexpr double kBoxMargin = 1e-6;
  Vector w(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    w[j] = std::atanh(2.0 * std::clamp(x[j], kBoxMargin, 1.0 - kBoxMargin) - 1.0);

  auto to_box = [](const Vector& v) { return ((v.array().tanh() + 1.0) * 0.5).matrix().eval(); };
  const auto yi = static_cast<Eigen::Index>(y);

  for (std::size_t step = 0; step < spec.cw_steps; ++step) {
    const Vector xp = to_box(w);
    Vector grad_x = 2.0 * (xp - x);
    if (spec.cw_c > 0.0) {
      const Vector z = model.logits(xp);
      Eigen::Index best_other = yi == 0 ? 1 : 0;
      for (Eigen::Index j = 0; j < z.size(); ++j)
        if (j != yi && z[j] > z[best_other]) best_other = j;
      const double margin = z[yi] - z[best_other];
      if (margin > -spec.cw_kappa) {
        const Matrix J = model.logit_jacobian(xp);
        grad_x += spec.cw_c * (J.row(yi) - J.row(best_other)).transpose();
      }
    }
    const Vector dxdw = (0.5 * (1.0 - w.array().tanh().square())).matrix();
    const Vector grad_w = grad_x.cwiseProduct(dxdw);
    if (!grad_w.allFinite()) throw NumericError("cw: non-finite gradient");
    w -= spec.cw_lr * grad_w;
  }
  Vector out = to_box(w);
  if (spec.cw_clip_to_eps) {
    for (Eigen::Index j = 0; j < out.size(); ++j)
      out[j] = std::clamp(out[j], std::max(0.0, x[j] - spec.epsilon),
                          std::min(1.0, x[j] + spec.epsilon));
  }
  return out;
}

Vector apply_attack(const AttackSpec& spec, const Model& model, const Vector& x, std::size_t y,
                    std::uint64_t instance) {
  spec.validate();
  check_input(model, x, y);
  switch (spec.kind) {
    case AttackKind::Clean: return x;
    case AttackKind::FGSM: return fgsm(model, x, y, spec.epsilon);
    case AttackKind::PGD: return pgd(model, x, y, spec.epsilon, spec.pgd_step, spec.pgd_iters);
    case AttackKind::SPSA: return spsa(model, x, y, spec, instance);
    case AttackKind::CW: return cw(model, x, y, spec);
  }
  throw ParameterError("apply_attack: unknown kind");
}

std::vector<Vector> attack_examples(const AttackSpec& spec, const Model& model, const Dataset& ds,
                                    std::span<const std::size_t> indices) {
  std::vector<Vector> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(apply_attack(spec, model, ds[i].features, ds[i].label, i));
  return out;
}

}  // namespace arcp
