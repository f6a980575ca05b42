// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
//
// Usage: acceptance [arcp-binary config-file]
// The two arguments drive the CLI determinism check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "arcp/attacks.hpp"
#include "arcp/conformal.hpp"
#include "arcp/game.hpp"
#include "arcp/metrics.hpp"
#include "arcp/pipeline.hpp"
#include "arcp/rng.hpp"
#include "arcp/scores.hpp"
#include "test_util.hpp"

using namespace arcp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.clear();
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << std::fixed << v;
  return ss.str();
}

Summary summarize_vec(const std::vector<double>& v) { return summarize(v); }

// Standard error of the mean.
double std_error(const std::vector<double>& v) {
  return summarize_vec(v).sd / std::sqrt(static_cast<double>(v.size()));
}

// Configuration shared by the statistical pipeline checks.
ConfigMap pipeline_config(std::size_t replications) {
  return parse_config_text(
      "seed=2024\n"
      "replications=" + std::to_string(replications) + "\n"
      "data.num_classes=3\ndata.dim=4\ndata.per_class=250\ndata.spread=0.15\n"
      "train.epochs=40\ntrain.hidden=12\n"
      "attacks.list=clean,fgsm,pgd,spsa,cw\n"
      "attacks.fgsm.epsilon=0.1\nattacks.pgd.epsilon=0.1\nattacks.spsa.epsilon=0.1\n"
      "attacks.cw.cw_steps=60\n"
      "defenses.adversarial=fgsm,pgd,spsa\n"
      "score.kind=APS\n");
}

// --------------------------------------------------------------------------

Outcome split_conformal_validity() {
  Outcome o;
  const auto t0 = Clock::now();
  const Dataset ds = generate_synthetic(3, 4, 450, 0.15, 101);
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double fr[] = {0.25, 0.75};
  const auto parts = stratified_partition(ds, all, fr, 102);
  TrainConfig tc;
  tc.epochs = 30;
  tc.hidden = 8;
  tc.seed = 103;
  const Classifier model = train(ds, parts[0], tc);

  ScoreSpec thr;
  thr.kind = ScoreKind::THR;
  const auto clean = AttackSpec::defaults(AttackKind::Clean);
  const std::size_t n_cal = 200, R = 500;
  std::vector<double> cov;
  for (std::size_t r = 0; r < R; ++r) {
    auto pool = parts[1];
    Rng rng = make_rng(104, "acceptance.resplit", r);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<std::size_t> cal(pool.begin(), pool.begin() + n_cal);
    const std::vector<std::size_t> test(pool.begin() + n_cal, pool.end());
    const double q = calibrate_known_attack(model, clean, model, ds, cal, thr, 0.1);
    const auto sets = evaluate_pipeline(model, ds, test, clean, model, thr, q);
    std::vector<std::size_t> labels;
    for (auto i : test) labels.push_back(ds[i].label);
    cov.push_back(coverage(sets, labels));
  }
  const double mean = summarize_vec(cov).mean;
  const double secs = seconds_since(t0);
  o.detail = "mean coverage " + fmt(mean) + " over " + std::to_string(R) + " re-splits, " + fmt(secs, 1) + "s";
  o.require(mean >= 0.896 && mean <= 0.912, "mean coverage " + fmt(mean) + " outside [0.896, 0.912]");
  o.require(secs < 60.0, "took " + fmt(secs, 1) + "s");
  return o;
}

struct Rq12Run {
  Workspace ws;
  Rq12Result res;
  double seconds = 0.0;
};

const Rq12Run& rq12_run() {
  static const Rq12Run run = [] {
    Rq12Run r;
    const auto t0 = Clock::now();
    r.ws = prepare_workspace(build_config(pipeline_config(100)), SplitMode::rq12);
    const std::string_view streams[] = {kCalStream, kTestStream};
    const ScoreCache cache(r.ws, streams);
    r.res = run_rq12(r.ws, cache);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

std::vector<double> coverages(const CellResult& c) {
  std::vector<double> v;
  for (const auto& m : c.per_replication) v.push_back(m.coverage);
  return v;
}

std::vector<double> sizes(const CellResult& c) {
  std::vector<double> v;
  for (const auto& m : c.per_replication) v.push_back(m.mean_size);
  return v;
}

Outcome robust_coverage() {
  Outcome o;
  const auto& run = rq12_run();
  double worst_margin = std::numeric_limits<double>::infinity();
  std::string worst;
  for (const auto& cell : run.res.rq2) {
    const auto c = coverages(cell);
    const double mean = summarize_vec(c).mean;
    const double bound = 0.9 - 2.0 * std_error(c);
    if (mean - bound < worst_margin) {
      worst_margin = mean - bound;
      worst = cell.defense + "/" + cell.attack + " coverage " + fmt(mean);
    }
    o.require(mean >= bound, cell.defense + "/" + cell.attack + " coverage " + fmt(mean) + " < " + fmt(bound));
  }
  if (o.pass) o.detail = "lowest margin " + worst + ", R=100, " + fmt(run.seconds, 1) + "s";
  o.require(run.seconds < 300.0, "took " + fmt(run.seconds, 1) + "s");
  return o;
}

Outcome conservative_dominates_known() {
  Outcome o;
  const auto& run = rq12_run();
  std::size_t cells = 0;
  for (std::size_t c = 0; c < run.res.rq1.size(); ++c) {
    const auto& known = run.res.rq1[c];
    const auto& cons = run.res.rq2[c];
    for (int metric = 0; metric < 2; ++metric) {
      const auto a = metric == 0 ? coverages(known) : sizes(known);
      const auto b = metric == 0 ? coverages(cons) : sizes(cons);
      std::vector<double> diff;
      for (std::size_t r = 0; r < a.size(); ++r) diff.push_back(b[r] - a[r]);
      const double d = summarize_vec(diff).mean;
      o.require(d >= -2.0 * std_error(diff), known.defense + "/" + known.attack +
                                                (metric == 0 ? " coverage" : " size") + " drops by " + fmt(-d));
    }
    ++cells;
  }
  if (o.pass) o.detail = std::to_string(cells) + " (defense, attack) cells";
  return o;
}

Matrix random_matrix(Rng& rng, Eigen::Index p, Eigen::Index m) {
  Matrix P(p, m);
  for (Eigen::Index i = 0; i < p; ++i) P.row(i) = testutil::uniform_vector(rng, m, 0, 3).transpose();
  return P;
}

Outcome nash_solver() {
  Outcome o;
  Rng rng(401);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Matrix P = random_matrix(rng, 6, 5);
    worst = std::max(worst, std::abs(solve_zero_sum(P).value - lp_minimax(P).value));
  }
  o.require(worst <= 1e-7, "LP disagreement " + std::to_string(worst));

  Matrix pennies(2, 2);
  pennies << 1, -1, -1, 1;
  const auto s = solve_zero_sum(pennies);
  const bool half = std::abs(s.defender[0] - 0.5) <= 1e-9 && std::abs(s.defender[1] - 0.5) <= 1e-9 &&
                    std::abs(s.attacker[0] - 0.5) <= 1e-9 && std::abs(s.attacker[1] - 0.5) <= 1e-9 &&
                    std::abs(s.value) <= 1e-9;
  o.require(half, "matching pennies not ((0.5,0.5),(0.5,0.5),0)");

  int dominated_ok = 0;
  for (int t = 0; t < 200; ++t) {
    Matrix P = random_matrix(rng, 6, 5);
    const auto bad = static_cast<Eigen::Index>(testutil::uniform_index(rng, 6));
    const auto good = (bad + 1 + static_cast<Eigen::Index>(testutil::uniform_index(rng, 5))) % 6;
    P.row(bad) = P.row(good).array() + 1e-3 + testutil::uniform_vector(rng, 5, 0, 0.5).transpose().array();
    dominated_ok += solve_zero_sum(P).defender[bad] == 0.0;
  }
  o.require(dominated_ok == 200, "dominated row played in " + std::to_string(200 - dominated_ok) + " games");
  if (o.pass) o.detail = "max |value - LP| " + std::to_string(worst) + ", pennies exact, 200/200 dominated rows unused";
  return o;
}

Outcome equilibrium_beats_uniform() {
  Outcome o;
  const std::size_t R = 100;
  auto map = pipeline_config(R);
  map["split.mode"] = "rq3";
  const auto ws = prepare_workspace(build_config(map), SplitMode::rq3);
  const std::string_view streams[] = {kCalStream, kEvalStream, kTestStream};
  const ScoreCache cache(ws, streams);
  const auto res = run_rq3(ws, cache);

  std::vector<double> diff;
  for (std::size_t r = 0; r < R; ++r)
    diff.push_back(res.strategies[0].per_replication[r].mean_size - res.strategies[1].per_replication[r].mean_size);
  const double d = summarize_vec(diff).mean;
  const double se = std_error(diff);
  o.require(d <= 2.0 * se, "equilibrium size exceeds uniform by " + fmt(d) + " (2se " + fmt(2 * se) + ")");

  // Whenever some eval row is minimal in every column, the solver plays a pure such row.
  std::size_t dominant = 0, pure = 0;
  for (const auto& rep : res.replications) {
    const auto& P = rep.eval_payoff.values;
    const Vector col_min = P.colwise().minCoeff().transpose();
    std::vector<Eigen::Index> minimal_rows;
    for (Eigen::Index k = 0; k < P.rows(); ++k)
      if ((P.row(k).transpose().array() == col_min.array()).all()) minimal_rows.push_back(k);
    if (minimal_rows.empty()) continue;
    ++dominant;
    for (auto k : minimal_rows)
      if (rep.equilibrium.defender[k] == 1.0) {
        ++pure;
        break;
      }
  }
  o.require(pure == dominant, std::to_string(dominant - pure) + " replications with a minimal row not played purely");

  // Forced case so the property is exercised even when no replication has such a row.
  Rng rng(501);
  int forced_ok = 0;
  for (int t = 0; t < 100; ++t) {
    Matrix P = random_matrix(rng, 6, 5);
    const auto best = static_cast<Eigen::Index>(testutil::uniform_index(rng, 6));
    for (Eigen::Index j = 0; j < 5; ++j) P(best, j) = P.col(j).minCoeff() - 1e-3;
    forced_ok += solve_zero_sum(P).defender[best] == 1.0;
  }
  o.require(forced_ok == 100, "forced minimal row not pure in " + std::to_string(100 - forced_ok) + " games");
  if (o.pass)
    o.detail = "mean size diff (equilibrium - uniform) " + fmt(d) + " +/- " + fmt(se) + "; minimal row in " +
               std::to_string(dominant) + "/" + std::to_string(R) + " eval payoffs, all played purely";
  return o;
}

Outcome attack_contracts() {
  Outcome o;
  Rng rng(601);
  int ball = 0, box = 0, pgd_fgsm = 0, cw_zero = 0, clean_id = 0;
  const int N = 1000;
  for (int t = 0; t < N; ++t) {
    const std::size_t C = 2 + testutil::uniform_index(rng, 4);
    const std::size_t d = 1 + testutil::uniform_index(rng, 6);
    const auto kind = t % 2 ? ClassifierKind::mlp1 : ClassifierKind::linear;
    const auto m = Classifier::random(kind, C, d, 5, rng(), 3.0);
    const Vector x = testutil::uniform_vector(rng, static_cast<Eigen::Index>(d));
    const std::size_t y = testutil::uniform_index(rng, C);
    const double eps = testutil::uniform_vector(rng, 1, 0.01, 0.3)[0];

    auto pgd_spec = AttackSpec::defaults(AttackKind::PGD);
    pgd_spec.epsilon = eps;
    pgd_spec.pgd_iters = 5;
    pgd_spec.pgd_step = eps / 3;
    auto spsa_spec = AttackSpec::defaults(AttackKind::SPSA);
    spsa_spec.epsilon = eps;
    spsa_spec.spsa_iters = 3;
    spsa_spec.spsa_samples = 4;
    spsa_spec.seed = rng();
    const Vector outs[] = {fgsm(m, x, y, eps), apply_attack(pgd_spec, m, x, y),
                           apply_attack(spsa_spec, m, x, y, static_cast<std::uint64_t>(t))};
    bool in_ball = true, in_box = true;
    for (const auto& xa : outs) {
      in_ball = in_ball && (xa - x).cwiseAbs().maxCoeff() <= eps + 1e-12;
      in_box = in_box && testutil::in_unit_box(xa);
    }
    ball += in_ball;
    box += in_box;

    const Vector one = pgd(m, x, y, eps, eps * (1.0 + testutil::uniform_vector(rng, 1)[0]), 1);
    pgd_fgsm += one == fgsm(m, x, y, eps);

    auto cw_spec = AttackSpec::defaults(AttackKind::CW);
    cw_spec.cw_c = 0.0;
    cw_spec.cw_steps = 50;
    cw_zero += (cw(m, x, y, cw_spec) - x).cwiseAbs().maxCoeff() <= 1e-3;

    const Vector c = apply_attack(AttackSpec::defaults(AttackKind::Clean), m, x, y);
    clean_id += c.size() == x.size() &&
                std::memcmp(c.data(), x.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  }
  o.require(ball == N, std::to_string(N - ball) + " outputs outside the eps-ball");
  o.require(box == N, std::to_string(N - box) + " outputs outside the unit box");
  o.require(pgd_fgsm == N, std::to_string(N - pgd_fgsm) + " single-step PGD runs differ from FGSM");
  o.require(cw_zero == N, std::to_string(N - cw_zero) + " CW(c=0) runs moved more than 1e-3");
  o.require(clean_id == N, std::to_string(N - clean_id) + " Clean outputs differ from input");
  if (o.pass) o.detail = "1000 instances: ball, box, PGD(1)=FGSM, CW(c=0), Clean identity";
  return o;
}

Vector fd_parameter_gradient(const Classifier& m, const Vector& x, std::size_t y, double h = 1e-5) {
  auto flat = m.flat_parameters();
  Vector g(static_cast<Eigen::Index>(flat.size()));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double orig = flat[i];
    flat[i] = orig + h;
    const double up = loss(m.with_flat_parameters(flat), x, y);
    flat[i] = orig - h;
    const double down = loss(m.with_flat_parameters(flat), x, y);
    flat[i] = orig;
    g[static_cast<Eigen::Index>(i)] = (up - down) / (2 * h);
  }
  return g;
}

Outcome gradient_fidelity() {
  Outcome o;
  Rng rng(701);
  double worst_in = 0.0, worst_param = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto kind = t % 2 ? ClassifierKind::mlp1 : ClassifierKind::linear;
    const std::size_t C = 2 + testutil::uniform_index(rng, 4);
    const std::size_t d = 1 + testutil::uniform_index(rng, 6);
    const auto m = Classifier::random(kind, C, d, 5, rng(), 2.0);
    const Vector x = testutil::uniform_vector(rng, static_cast<Eigen::Index>(d));
    const std::size_t y = testutil::uniform_index(rng, C);
    worst_in = std::max(worst_in, testutil::rel_error(input_gradient(m, x, y), testutil::fd_input_gradient(m, x, y)));
    const auto analytic = Classifier::flatten(kind, m.parameter_gradient(x, y));
    const Vector a = Eigen::Map<const Vector>(analytic.data(), static_cast<Eigen::Index>(analytic.size()));
    worst_param = std::max(worst_param, testutil::rel_error(a, fd_parameter_gradient(m, x, y)));
  }
  o.require(worst_in < 1e-4, "input gradient rel error " + std::to_string(worst_in));
  o.require(worst_param < 1e-4, "parameter gradient rel error " + std::to_string(worst_param));
  if (o.pass)
    o.detail = "max rel error input " + std::to_string(worst_in) + ", parameters " + std::to_string(worst_param);
  return o;
}

Outcome score_sandwich() {
  Outcome o;
  Rng rng(801);
  int sandwich = 0, smooth = 0;
  const int N = 200;
  for (int t = 0; t < N; ++t) {
    const std::size_t C = 2 + testutil::uniform_index(rng, 5);
    const std::size_t d = 1 + testutil::uniform_index(rng, 5);
    const auto m = Classifier::random(t % 2 ? ClassifierKind::mlp1 : ClassifierKind::linear, C, d, 4, rng(), 4.0);
    const Vector x = testutil::uniform_vector(rng, static_cast<Eigen::Index>(d));
    bool ok = true, near = true;
    for (auto base : {ScoreKind::THR, ScoreKind::APS}) {
      ScoreSpec b;
      b.kind = base;
      ScoreSpec lo = b, hi = b, rs = b;
      lo.kind = ScoreKind::VRCP_I;
      hi.kind = ScoreKind::VRCP_C;
      rs.kind = ScoreKind::RSCP;
      lo.base = hi.base = rs.base = base;
      lo.include_clean_copy = hi.include_clean_copy = true;
      lo.seed = hi.seed = rs.seed = rng();
      rs.sigma = 1e-8;
      const Vector mid = score_all_labels(b, m, x);
      ok = ok && (score_all_labels(lo, m, x, t).array() <= mid.array()).all() &&
           (mid.array() <= score_all_labels(hi, m, x, t).array()).all();
      near = near && (score_all_labels(rs, m, x, t) - mid).cwiseAbs().maxCoeff() <= 1e-6;
    }
    sandwich += ok;
    smooth += near;
  }
  Vector p(3);
  p << 0.7, 0.2, 0.1;
  const Vector aps = aps_scores(p);
  o.require(sandwich == N, std::to_string(N - sandwich) + " instances break VRCP_I <= base <= VRCP_C");
  o.require(smooth == N, std::to_string(N - smooth) + " instances where RSCP(1e-8) differs from base");
  o.require(aps[0] == 0.7 && aps[1] == 0.9 && aps[2] == 1.0, "APS of (0.7,0.2,0.1) not (0.7,0.9,1.0)");
  if (o.pass) o.detail = "200 instances x {THR, APS}; APS (0.7, 0.9, 1.0) exact";
  return o;
}

// Brute force: for each stratum, scan all examples.
std::optional<double> sscv_brute_force(const std::vector<PredictionSet>& sets, const std::vector<std::size_t>& labels,
                                       double alpha, const Strata& strata) {
  std::optional<double> worst;
  for (const auto& stratum : strata) {
    int members = 0, hits = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      if (std::find(stratum.begin(), stratum.end(), sets[i].labels.size()) == stratum.end()) continue;
      ++members;
      hits += std::find(sets[i].labels.begin(), sets[i].labels.end(), labels[i]) != sets[i].labels.end();
    }
    if (members == 0) continue;
    const double dev = std::abs(static_cast<double>(hits) / members - (1.0 - alpha));
    if (!worst || dev > *worst) worst = dev;
  }
  return worst;
}

Outcome sscv_oracle() {
  Outcome o;
  Rng rng(901);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t C = 2 + testutil::uniform_index(rng, 8);
    const std::size_t n = 1 + testutil::uniform_index(rng, 300);
    std::vector<PredictionSet> sets(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t y = 0; y < C; ++y)
        if (testutil::uniform_index(rng, 2)) sets[i].labels.push_back(y);
      labels[i] = testutil::uniform_index(rng, C);
    }
    // Contiguous size bins of random widths.
    Strata strata;
    for (std::size_t s = 0; s <= C;) {
      const std::size_t w = 1 + testutil::uniform_index(rng, 3);
      std::vector<std::size_t> bin;
      for (std::size_t k = s; k < std::min(C + 1, s + w); ++k) bin.push_back(k);
      strata.push_back(bin);
      s += w;
    }
    const double alpha = testutil::uniform_vector(rng, 1, 0.01, 0.4)[0];
    const auto got = sscv(sets, labels, alpha, strata);
    const auto want = sscv_brute_force(sets, labels, alpha, strata);
    agree += got.has_value() == want.has_value() && (!got || std::abs(*got - *want) <= 1e-12);
  }
  o.require(agree == 100, std::to_string(100 - agree) + " of 100 inputs disagree");
  if (o.pass) o.detail = "100/100 random inputs within 1e-12";
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome cli_determinism(int argc, char** argv) {
  Outcome o;
  if (argc < 3) {
    o.require(false, "needs the CLI binary and a config path");
    return o;
  }
  const std::string bin = argv[1], config = argv[2];
  const auto root = testutil::scratch_dir("acceptance_cli");
  for (const char* run : {"a", "b"}) {
    const auto dir = root / run;
    for (const char* cmd : {"gen-data", "train", "rq1", "rq2", "rq3"}) {
      const std::string line = "\"" + bin + "\" " + cmd + " --config \"" + config + "\" --out \"" + dir.string() +
                               "\" > /dev/null";
      o.require(std::system(line.c_str()) == 0, std::string(cmd) + " failed");
    }
    const std::string solve = "\"" + bin + "\" solve-game \"" + (dir / "payoff_eval.csv").string() + "\" --out \"" +
                              (dir / "solved").string() + "\" > /dev/null";
    o.require(std::system(solve.c_str()) == 0, "solve-game failed");
  }
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = std::filesystem::relative(e.path(), root / "a");
    o.require(slurp(e.path()) == slurp(root / "b" / rel), rel.string() + " differs");
  }
  o.require(files >= 10, "only " + std::to_string(files) + " output files");
  if (o.pass) o.detail = std::to_string(files) + " files byte-identical across two runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"split-conformal validity", split_conformal_validity},
      {"robust coverage under the conservative threshold", robust_coverage},
      {"conservative threshold dominates known-attack threshold", conservative_dominates_known},
      {"zero-sum solver correctness", nash_solver},
      {"equilibrium defense vs uniform", equilibrium_beats_uniform},
      {"attack contracts", attack_contracts},
      {"gradient fidelity", gradient_fidelity},
      {"score sandwich", score_sandwich},
      {"SSCV oracle", sscv_oracle},
      {"CLI determinism", [&] { return cli_determinism(argc, argv); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
