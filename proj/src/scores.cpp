#include "arcp/scores.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "arcp/errors.hpp"
#include "arcp/rng.hpp"

namespace arcp {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::THR: return "THR";
    case ScoreKind::APS: return "APS";
    case ScoreKind::RSCP: return "RSCP";
    case ScoreKind::VRCP_I: return "VRCP_I";
    case ScoreKind::VRCP_C: return "VRCP_C";
  }
  return "?";
}

ScoreKind parse_score_kind(const std::string& s) {
  std::string u = s;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  if (u == "THR") return ScoreKind::THR;
  if (u == "APS") return ScoreKind::APS;
  if (u == "RSCP") return ScoreKind::RSCP;
  if (u == "VRCP_I") return ScoreKind::VRCP_I;
  if (u == "VRCP_C") return ScoreKind::VRCP_C;
  throw ParameterError("unknown score kind '" + s + "'");
}

void ScoreSpec::validate() const {
  if (base != ScoreKind::THR && base != ScoreKind::APS)
    throw ParameterError("score: base must be THR or APS");
  if (kind == ScoreKind::RSCP) {
    if (!(sigma > 0.0)) throw ParameterError("score: sigma must be > 0");
    if (n_noise < 1) throw ParameterError("score: n_noise must be >= 1");
  }
  if (kind == ScoreKind::VRCP_I || kind == ScoreKind::VRCP_C) {
    if (!(vrcp_epsilon >= 0.0)) throw ParameterError("score: vrcp_epsilon must be >= 0");
    if (n_perturb < 1) throw ParameterError("score: n_perturb must be >= 1");
  }
}

Vector thr_scores(const Vector& probs) { return -probs; }

Vector aps_scores(const Vector& probs) {
  const auto C = static_cast<std::size_t>(probs.size());
  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probs[static_cast<Eigen::Index>(a)] > probs[static_cast<Eigen::Index>(b)];
  });
  Vector out(probs.size());
  double below = 0.0;
  for (std::size_t r = C; r-- > 0;) {
    const auto label = static_cast<Eigen::Index>(order[r]);
    out[label] = 1.0 - below;
    below += probs[label];
  }
  return out;
}

namespace {

Vector base_scores(ScoreKind base, const Model& model, const Vector& x) {
  const Vector p = probabilities(model, x);
  return base == ScoreKind::THR ? thr_scores(p) : aps_scores(p);
}

}  // namespace

Vector score_all_labels(const ScoreSpec& spec, const Model& model, const Vector& x,
                        std::uint64_t instance) {
  spec.validate();
  if (static_cast<std::size_t>(x.size()) != model.dim())
    throw DimensionError("score: input has dimension " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.dim()));
  switch (spec.kind) {
    case ScoreKind::THR:
    case ScoreKind::APS:
      return base_scores(spec.kind, model, x);
    case ScoreKind::RSCP: {
      Rng rng = make_rng(spec.seed, "score.rscp", instance);
      std::normal_distribution<double> noise(0.0, spec.sigma);
      Vector sum = Vector::Zero(static_cast<Eigen::Index>(model.num_classes()));
      Vector xn(x.size());
      for (std::size_t s = 0; s < spec.n_noise; ++s) {
        for (Eigen::Index j = 0; j < x.size(); ++j) xn[j] = std::clamp(x[j] + noise(rng), 0.0, 1.0);
        sum += base_scores(spec.base, model, xn);
      }
      return sum / static_cast<double>(spec.n_noise);
    }
    case ScoreKind::VRCP_I:
    case ScoreKind::VRCP_C: {
      const bool lower = spec.kind == ScoreKind::VRCP_I;
      Rng rng = make_rng(spec.seed, "score.vrcp", instance);
      std::uniform_real_distribution<double> u(-spec.vrcp_epsilon, spec.vrcp_epsilon);
      Vector acc;
      auto fold = [&](const Vector& s) {
        if (acc.size() == 0) acc = s;
        else if (lower) acc = acc.cwiseMin(s);
        else acc = acc.cwiseMax(s);
      };
      if (spec.include_clean_copy) fold(base_scores(spec.base, model, x));
      Vector xp(x.size());
      for (std::size_t s = 0; s < spec.n_perturb; ++s) {
        for (Eigen::Index j = 0; j < x.size(); ++j) xp[j] = std::clamp(x[j] + u(rng), 0.0, 1.0);
        fold(base_scores(spec.base, model, xp));
      }
      return acc;
    }
  }
  throw ParameterError("score: unknown kind");
}

double score(const ScoreSpec& spec, const Model& model, const Vector& x, std::size_t y,
             std::uint64_t instance) {
  if (y >= model.num_classes()) throw ParameterError("score: invalid label " + std::to_string(y));
  return score_all_labels(spec, model, x, instance)[static_cast<Eigen::Index>(y)];
}

}  // namespace arcp
