#include "arcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "arcp/errors.hpp"
#include "arcp/rng.hpp"

namespace arcp {

bool PredictionSet::contains(std::size_t y) const {
  return std::binary_search(labels.begin(), labels.end(), y);
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw ParameterError("conformal_quantile: empty scores");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("conformal_quantile: alpha must be in (0,1)");
  const std::size_t n = scores.size();
  // Guard the ceiling against representation error, e.g. 20·0.9 = 18.000000000000004.
  const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (k > n) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(scores.begin(), scores.end());
  const std::size_t rank = std::max<std::size_t>(k, 1) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
  return sorted[rank];
}

PredictionSet prediction_set_from_scores(const Vector& label_scores, double q) {
  PredictionSet s;
  for (Eigen::Index y = 0; y < label_scores.size(); ++y)
    if (label_scores[y] <= q) s.labels.push_back(static_cast<std::size_t>(y));
  return s;
}

PredictionSet prediction_set(const ScoreSpec& spec, const Model& model, const Vector& x, double q,
                             std::uint64_t instance) {
  return prediction_set_from_scores(score_all_labels(spec, model, x, instance), q);
}

std::uint64_t score_instance(std::string_view stream, std::size_t example_index) {
  return derive_seed(example_index, stream);
}

std::string to_string(AttackTarget t) { return t == AttackTarget::f0 ? "f0" : "fk"; }

AttackTarget parse_attack_target(const std::string& s) {
  if (s == "f0") return AttackTarget::f0;
  if (s == "fk") return AttackTarget::fk;
  throw ParameterError("unknown attack target '" + s + "' (expected f0 or fk)");
}

std::vector<double> calibration_scores(const Model& model, const AttackSpec& attack,
                                       const Model& attack_target, const Dataset& ds,
                                       std::span<const std::size_t> cal, const ScoreSpec& score) {
  std::vector<double> out;
  out.reserve(cal.size());
  for (std::size_t i : cal) {
    const auto& ex = ds[i];
    const Vector xa = apply_attack(attack, attack_target, ex.features, ex.label, i);
    out.push_back(arcp::score(score, model, xa, ex.label, score_instance(kCalStream, i)));
  }
  return out;
}

double calibrate_known_attack(const Model& model, const AttackSpec& attack,
                              const Model& attack_target, const Dataset& ds,
                              std::span<const std::size_t> cal, const ScoreSpec& score,
                              double alpha) {
  if (cal.empty()) throw ParameterError("calibrate: empty calibration set");
  const auto scores = calibration_scores(model, attack, attack_target, ds, cal, score);
  return conformal_quantile(scores, alpha);
}

double CalibrationResult::q_for(const std::string& attack_name) const {
  for (const auto& [name, q] : per_attack_q)
    if (name == attack_name) return q;
  throw ParameterError("calibration for '" + model_id + "' has no attack '" + attack_name + "'");
}

CalibrationResult calibrate_conservative(const Model& model, std::span<const AttackSpec> attacks,
                                         const Model& attack_target, const Dataset& ds,
                                         std::span<const std::size_t> cal, const ScoreSpec& score,
                                         double alpha, std::string model_id) {
  if (attacks.empty()) throw ParameterError("calibrate_conservative: empty attack set");
  CalibrationResult r;
  r.model_id = std::move(model_id);
  r.alpha = alpha;
  r.conservative_q = -std::numeric_limits<double>::infinity();
  for (const auto& a : attacks) {
    const double q = calibrate_known_attack(model, a, attack_target, ds, cal, score, alpha);
    r.per_attack_q.emplace_back(a.name, q);
    r.conservative_q = std::max(r.conservative_q, q);
  }
  return r;
}

std::vector<PredictionSet> evaluate_pipeline(const Model& model, const Dataset& ds,
                                             std::span<const std::size_t> indices,
                                             const AttackSpec& attack, const Model& attack_target,
                                             const ScoreSpec& score, double q,
                                             std::string_view stream) {
  std::vector<PredictionSet> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& ex = ds[i];
    const Vector xa = apply_attack(attack, attack_target, ex.features, ex.label, i);
    out.push_back(prediction_set(score, model, xa, q, score_instance(stream, i)));
  }
  return out;
}

namespace {

nlohmann::ordered_json q_json(double q) {
  if (std::isinf(q)) return q > 0 ? "inf" : "-inf";
  return q;
}

double q_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw FormatError("calibration: bad threshold '" + s + "'");
  }
  if (!j.is_number()) throw FormatError("calibration: threshold is not a number");
  return j.get<double>();
}

}  // namespace

std::string calibration_to_json(const CalibrationResult& r) {
  nlohmann::ordered_json j;
  j["model_id"] = r.model_id;
  j["alpha"] = r.alpha;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [name, q] : r.per_attack_q) per[name] = q_json(q);
  j["per_attack_q"] = per;
  j["conservative_q"] = q_json(r.conservative_q);
  return j.dump(1) + "\n";
}

CalibrationResult calibration_from_json(const std::string& text) {
  try {
    auto j = nlohmann::ordered_json::parse(text);
    CalibrationResult r;
    r.model_id = j.at("model_id").get<std::string>();
    r.alpha = j.at("alpha").get<double>();
    for (const auto& [name, v] : j.at("per_attack_q").items()) r.per_attack_q.emplace_back(name, q_from_json(v));
    r.conservative_q = q_from_json(j.at("conservative_q"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("calibration: ") + e.what());
  }
}

}  // namespace arcp
