#include "arcp/game.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include "json.hpp"

#include "arcp/errors.hpp"
#include "arcp/format.hpp"
#include "arcp/rng.hpp"

namespace arcp {

namespace {

void check_payoff(const Matrix& P) {
  if (P.rows() == 0 || P.cols() == 0) throw ParameterError("game: empty payoff matrix");
  if (!P.allFinite()) throw ParameterError("game: payoff matrix has non-finite entries");
}

// Advances `idx` (k ascending indices below n) to the next combination in
// lexicographic order; false when exhausted.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
  const std::size_t k = idx.size();
  for (std::size_t i = k; i-- > 0;) {
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

// Solves the bordered indifference system [[M, -1], [1ᵀ, 0]] (s, w) = (0, 1).
std::optional<Vector> solve_indifference(const Matrix& M) {
  const Eigen::Index k = M.rows();
  Matrix B = Matrix::Zero(k + 1, k + 1);
  B.topLeftCorner(k, k) = M;
  B.topRightCorner(k, 1).setConstant(-1.0);
  B.bottomLeftCorner(1, k).setConstant(1.0);
  Vector rhs = Vector::Zero(k + 1);
  rhs[k] = 1.0;
  Eigen::FullPivLU<Matrix> lu(B);
  if (!lu.isInvertible()) return std::nullopt;
  Vector sol = lu.solve(rhs);
  if (!sol.allFinite() || (B * sol - rhs).cwiseAbs().maxCoeff() > 1e-10) return std::nullopt;
  return sol;
}

// Clamps round-off negatives; rejects anything meaningfully negative.
bool clean_probabilities(Vector& v, double tol) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < -tol) return false;
    if (v[i] < 0.0) v[i] = 0.0;
  }
  const double s = v.sum();
  if (!(s > 0.0)) return false;
  v /= s;
  return true;
}

template <typename OnEquilibrium>
void enumerate_equilibria(const Matrix& P, OnEquilibrium&& on_eq) {
  check_payoff(P);
  const auto p = static_cast<std::size_t>(P.rows());
  const auto m = static_cast<std::size_t>(P.cols());
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;

  for (std::size_t k = 1; k <= std::min(p, m); ++k) {
    std::vector<std::size_t> rows(k);
    for (std::size_t i = 0; i < k; ++i) rows[i] = i;
    do {
      std::vector<std::size_t> cols(k);
      for (std::size_t i = 0; i < k; ++i) cols[i] = i;
      do {
        Matrix sub(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b)
            sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                P(static_cast<Eigen::Index>(rows[a]), static_cast<Eigen::Index>(cols[b]));
        // Attacker mix makes the chosen rows indifferent; defender mix makes
        // the chosen columns indifferent.
        auto att = solve_indifference(sub);
        auto def = solve_indifference(sub.transpose());
        if (!att || !def) continue;
        Vector v_sub = att->head(static_cast<Eigen::Index>(k));
        Vector u_sub = def->head(static_cast<Eigen::Index>(k));
        if (!clean_probabilities(v_sub, tol) || !clean_probabilities(u_sub, tol)) continue;

        MixedStrategy s;
        s.defender = Vector::Zero(P.rows());
        s.attacker = Vector::Zero(P.cols());
        for (std::size_t a = 0; a < k; ++a) {
          s.defender[static_cast<Eigen::Index>(rows[a])] = u_sub[static_cast<Eigen::Index>(a)];
          s.attacker[static_cast<Eigen::Index>(cols[a])] = v_sub[static_cast<Eigen::Index>(a)];
        }
        const Vector row_costs = P * s.attacker;               // defender's expected cost per row
        const Vector col_gains = P.transpose() * s.defender;   // attacker's gain per column
        const double value = s.defender.dot(row_costs);
        if (row_costs.minCoeff() < value - tol) continue;  // defender could do better
        if (col_gains.maxCoeff() > value + tol) continue;  // attacker could do better
        s.value = value;
        s.defender_support = rows;
        s.attacker_support = cols;
        if (!on_eq(std::move(s))) return;
      } while (next_combination(cols, m));
    } while (next_combination(rows, p));
  }
}

}  // namespace

MixedStrategy solve_zero_sum(const Matrix& payoff) {
  check_payoff(payoff);
  // A row no larger than every other row in every column is optimal against
  // any attacker; prefer it over other tied equilibria.
  for (Eigen::Index k = 0; k < payoff.rows(); ++k) {
    if (!((payoff.rowwise() - payoff.row(k)).array() >= 0.0).all()) continue;
    Eigen::Index j = 0;
    const double value = payoff.row(k).maxCoeff(&j);
    MixedStrategy s;
    s.defender = Vector::Zero(payoff.rows());
    s.attacker = Vector::Zero(payoff.cols());
    s.defender[k] = 1.0;
    s.attacker[j] = 1.0;
    s.value = value;
    s.defender_support = {static_cast<std::size_t>(k)};
    s.attacker_support = {static_cast<std::size_t>(j)};
    return s;
  }
  std::optional<MixedStrategy> found;
  enumerate_equilibria(payoff, [&](MixedStrategy s) {
    found = std::move(s);
    return false;
  });
  if (!found) throw NumericError("solve_zero_sum: no equilibrium found (tolerance problem)");
  return *found;
}

std::vector<MixedStrategy> all_equilibria(const Matrix& payoff) {
  std::vector<MixedStrategy> out;
  enumerate_equilibria(payoff, [&](MixedStrategy s) {
    const bool dup = std::any_of(out.begin(), out.end(), [&](const MixedStrategy& e) {
      return (e.defender - s.defender).cwiseAbs().maxCoeff() < 1e-9 &&
             (e.attacker - s.attacker).cwiseAbs().maxCoeff() < 1e-9;
    });
    if (!dup) out.push_back(std::move(s));
    return true;
  });
  if (out.empty()) throw NumericError("all_equilibria: no equilibrium found (tolerance problem)");
  return out;
}

LpSolution lp_minimax(const Matrix& payoff) {
  check_payoff(payoff);
  const Eigen::Index p = payoff.rows();
  const Eigen::Index m = payoff.cols();
  // Shift so every entry is >= 1; the game value shifts by the same amount.
  const double shift = 1.0 - payoff.minCoeff();
  const Matrix A = (payoff.array() + shift).matrix().transpose();  // m×p

  // Tableau: m constraint rows over p structural + m slack columns + rhs,
  // plus the objective row (reduced costs, maximizing Σx).
  const Eigen::Index ncols = p + m + 1;
  Matrix T = Matrix::Zero(m + 1, ncols);
  T.topLeftCorner(m, p) = A;
  T.block(0, p, m, m).setIdentity();
  T.col(ncols - 1).head(m).setOnes();
  T.row(m).head(p).setConstant(-1.0);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = p + i;

  constexpr double eps = 1e-12;
  for (int iter = 0; iter < 100000; ++iter) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < p + m; ++j)
      if (T(m, j) < -eps) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (T(i, enter) <= eps) continue;
      const double ratio = T(i, ncols - 1) / T(i, enter);
      // Bland: among minimal ratios, the smallest basic variable leaves.
      const bool tie = leave >= 0 && std::abs(ratio - best) <= eps;
      if (leave < 0 || (!tie && ratio < best) ||
          (tie && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave < 0) throw NumericError("lp_minimax: unbounded LP");
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i)
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
  }

  Vector x = Vector::Zero(p);
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[static_cast<std::size_t>(i)] < p) x[basis[static_cast<std::size_t>(i)]] = T(i, ncols - 1);
  const double total = x.sum();
  if (!(total > 0.0)) throw NumericError("lp_minimax: degenerate solution");
  LpSolution sol;
  sol.defender = x / total;
  sol.value = 1.0 / total - shift;
  return sol;
}

Vector uniform_strategy(std::size_t n) {
  if (n == 0) throw ParameterError("uniform_strategy: n must be >= 1");
  return Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
}

std::size_t sample_index(const Vector& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng) * probs.sum();
  double cum = 0.0;
  Eigen::Index last_positive = -1;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cum += probs[i];
    if (r < cum) return static_cast<std::size_t>(i);
  }
  if (last_positive < 0) throw ParameterError("sample_index: no positive probability");
  return static_cast<std::size_t>(last_positive);
}

std::pair<std::size_t, std::size_t> draw_profile(const Vector& defender, const Vector& attacker,
                                                 std::uint64_t seed, std::size_t example_index) {
  Rng drng = make_rng(seed, "strategy.defender", example_index);
  Rng arng = make_rng(seed, "strategy.attacker", example_index);
  const std::size_t k = sample_index(defender, drng);
  const std::size_t j = sample_index(attacker, arng);
  return {k, j};
}

namespace {

const CalibrationResult& find_calibration(std::span<const CalibrationResult> calibrations,
                                          const std::string& id) {
  for (const auto& c : calibrations)
    if (c.model_id == id) return c;
  throw ParameterError("missing calibration for defense '" + id + "'");
}

}  // namespace

PayoffMatrix build_payoff(std::span<const Defense> defenses, std::span<const AttackSpec> attacks,
                          const Model& attack_target, const Dataset& ds,
                          std::span<const std::size_t> indices, const ScoreSpec& score,
                          std::span<const CalibrationResult> calibrations, std::string_view stream) {
  if (defenses.empty() || attacks.empty()) throw ParameterError("build_payoff: empty strategy set");
  if (indices.empty()) throw ParameterError("build_payoff: empty evaluation set");
  std::vector<double> thresholds;
  for (const auto& d : defenses) thresholds.push_back(find_calibration(calibrations, d.id).conservative_q);

  PayoffMatrix P;
  P.values = Matrix::Zero(static_cast<Eigen::Index>(defenses.size()),
                          static_cast<Eigen::Index>(attacks.size()));
  for (const auto& d : defenses) P.row_ids.push_back(d.id);
  for (const auto& a : attacks) P.col_ids.push_back(a.name);

  for (std::size_t j = 0; j < attacks.size(); ++j) {
    const auto attacked = attack_examples(attacks[j], attack_target, ds, indices);
    for (std::size_t k = 0; k < defenses.size(); ++k) {
      std::size_t total = 0;
      for (std::size_t e = 0; e < indices.size(); ++e)
        total += prediction_set(score, *defenses[k].model, attacked[e], thresholds[k],
                                score_instance(stream, indices[e]))
                     .size();
      P.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          static_cast<double>(total) / static_cast<double>(indices.size());
    }
  }
  return P;
}

StrategyEvaluation evaluate_strategy(const Vector& defender, const Vector& attacker,
                                     std::span<const Defense> defenses,
                                     std::span<const AttackSpec> attacks,
                                     const Model& attack_target, const Dataset& ds,
                                     std::span<const std::size_t> indices, const ScoreSpec& score,
                                     std::span<const CalibrationResult> calibrations,
                                     std::uint64_t seed, double alpha) {
  if (static_cast<std::size_t>(defender.size()) != defenses.size())
    throw DimensionError("evaluate_strategy: defender strategy length mismatch");
  if (static_cast<std::size_t>(attacker.size()) != attacks.size())
    throw DimensionError("evaluate_strategy: attacker strategy length mismatch");
  if (indices.empty()) throw ParameterError("evaluate_strategy: empty test set");
  std::vector<double> thresholds;
  for (const auto& d : defenses) thresholds.push_back(find_calibration(calibrations, d.id).conservative_q);

  StrategyEvaluation out;
  std::vector<std::size_t> labels;
  for (std::size_t i : indices) {
    const auto& ex = ds[i];
    const auto [k, j] = draw_profile(defender, attacker, seed, i);
    const Vector xa = apply_attack(attacks[j], attack_target, ex.features, ex.label, i);
    out.sets.push_back(prediction_set(score, *defenses[k].model, xa, thresholds[k],
                                      score_instance(kTestStream, i)));
    out.defense_used.push_back(k);
    out.attack_used.push_back(j);
    labels.push_back(ex.label);
  }
  out.metrics = compute_metrics(out.sets, labels, alpha, ds.num_classes());
  const double n = static_cast<double>(out.sets.size());
  double ss = 0.0;
  for (const auto& s : out.sets) {
    const double dlt = static_cast<double>(s.size()) - out.metrics.mean_size;
    ss += dlt * dlt;
  }
  out.size_std_error = out.sets.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::string payoff_to_csv(const PayoffMatrix& p) {
  std::string out = "defense";
  for (const auto& c : p.col_ids) out += "," + c;
  out += '\n';
  for (Eigen::Index k = 0; k < p.values.rows(); ++k) {
    out += p.row_ids[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < p.values.cols(); ++j) out += "," + format_double(p.values(k, j));
    out += '\n';
  }
  return out;
}

PayoffMatrix payoff_from_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    start = nl == std::string::npos ? text.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t s = 0;
    while (true) {
      auto c = line.find(',', s);
      cells.push_back(line.substr(s, c == std::string::npos ? std::string::npos : c - s));
      if (c == std::string::npos) break;
      s = c + 1;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw FormatError("payoff matrix: no rows");
  if (rows[0].empty() || rows[0][0] != "defense")
    throw FormatError("payoff matrix: header must start with 'defense'", 1);
  PayoffMatrix P;
  P.col_ids.assign(rows[0].begin() + 1, rows[0].end());
  if (P.col_ids.empty()) throw FormatError("payoff matrix: no attack columns", 1);
  P.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(P.col_ids.size()));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != P.col_ids.size() + 1)
      throw FormatError("payoff matrix: wrong column count", r + 1);
    P.row_ids.push_back(rows[r][0]);
    for (std::size_t j = 0; j < P.col_ids.size(); ++j) {
      const auto& cell = rows[r][j + 1];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v))
        throw FormatError("payoff matrix: bad number '" + cell + "'", r + 1);
      P.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return P;
}

PayoffMatrix read_payoff(const std::filesystem::path& path) {
  try {
    return payoff_from_csv(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string equilibrium_to_json(const MixedStrategy& s, const PayoffMatrix& p) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json d = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < p.row_ids.size(); ++k) d[p.row_ids[k]] = s.defender[static_cast<Eigen::Index>(k)];
  nlohmann::ordered_json a = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < p.col_ids.size(); ++k) a[p.col_ids[k]] = s.attacker[static_cast<Eigen::Index>(k)];
  j["defender"] = d;
  j["attacker"] = a;
  j["value"] = s.value;
  return j.dump(1) + "\n";
}

}  // namespace arcp
