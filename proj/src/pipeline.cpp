#include "arcp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "arcp/errors.hpp"
#include "arcp/format.hpp"
#include "arcp/rng.hpp"

namespace arcp {

namespace {

std::vector<std::size_t> labels_of(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds[i].label);
  return out;
}

std::vector<double> true_label_scores(const ScoreCache& cache, const Dataset& ds, std::size_t k,
                                      std::size_t j, std::string_view stream,
                                      std::span<const std::size_t> idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(cache.scores(k, j, stream, i)[static_cast<Eigen::Index>(ds[i].label)]);
  return out;
}

std::vector<PredictionSet> cached_sets(const ScoreCache& cache, std::size_t k, std::size_t j,
                                       std::string_view stream, std::span<const std::size_t> idx,
                                       double q) {
  std::vector<PredictionSet> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(prediction_set_from_scores(cache.scores(k, j, stream, i), q));
  return out;
}

CalibrationResult cached_calibration(const Workspace& ws, const ScoreCache& cache, std::size_t k,
                                     std::span<const std::size_t> cal) {
  CalibrationResult res;
  res.model_id = ws.defenses[k].id;
  res.alpha = ws.cfg.alpha;
  res.conservative_q = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ws.cfg.attacks.size(); ++j) {
    const auto s = true_label_scores(cache, ws.ds(), k, j, kCalStream, cal);
    const double q = conformal_quantile(s, ws.cfg.alpha);
    res.per_attack_q.emplace_back(ws.cfg.attacks[j].name, q);
    res.conservative_q = std::max(res.conservative_q, q);
  }
  return res;
}

PayoffMatrix cached_payoff(const Workspace& ws, const ScoreCache& cache,
                           std::span<const CalibrationResult> cals, std::string_view stream,
                           std::span<const std::size_t> idx) {
  const auto K = ws.defenses.size();
  const auto J = ws.cfg.attacks.size();
  PayoffMatrix p;
  p.values = Matrix::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(J));
  for (const auto& d : ws.defenses) p.row_ids.push_back(d.id);
  for (const auto& a : ws.cfg.attacks) p.col_ids.push_back(a.name);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j)
      p.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          mean_size(cached_sets(cache, k, j, stream, idx, cals[k].conservative_q));
  return p;
}

double size_std_error(std::span<const PredictionSet> sets) {
  if (sets.size() < 2) return 0.0;
  const double m = mean_size(sets);
  double ss = 0.0;
  for (const auto& s : sets) ss += (static_cast<double>(s.size()) - m) * (static_cast<double>(s.size()) - m);
  return std::sqrt(ss / static_cast<double>(sets.size() - 1) / static_cast<double>(sets.size()));
}

std::string summary_cells(const std::vector<MetricsReport>& reps) {
  std::vector<double> cov, size, sv;
  for (const auto& r : reps) {
    cov.push_back(r.coverage);
    size.push_back(r.mean_size);
    if (r.sscv) sv.push_back(*r.sscv);
  }
  const auto c = summarize(cov);
  const auto s = summarize(size);
  std::string out = format_fixed(c.mean) + "," + format_fixed(c.sd) + "," + format_fixed(s.mean) +
                    "," + format_fixed(s.sd) + ",";
  if (sv.empty()) return out + "NA,NA";
  const auto v = summarize(sv);
  return out + format_fixed(v.mean) + "," + format_fixed(v.sd);
}

std::uint64_t data_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "data"); }
std::uint64_t split_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, "split"); }

}  // namespace

Dataset load_or_generate_data(const RunConfig& cfg) {
  if (!cfg.data.path.empty()) return read_dataset(cfg.data.path);
  return generate_synthetic(cfg.data.num_classes, cfg.data.dim, cfg.data.per_class, cfg.data.spread,
                            data_seed(cfg));
}

std::vector<std::pair<std::string, std::shared_ptr<const Classifier>>> build_base_models(
    const RunConfig& cfg, const Dataset& ds, std::span<const std::size_t> train_indices) {
  std::vector<std::pair<std::string, std::shared_ptr<const Classifier>>> out;
  if (!cfg.models_dir.empty()) {
    auto load = [&](const std::string& id) {
      auto c = std::make_shared<const Classifier>(load_classifier(cfg.models_dir / (id + ".json")));
      if (c->num_classes() != ds.num_classes() || c->dim() != ds.dim())
        throw DimensionError("model '" + id + "' does not match the dataset shape");
      out.emplace_back(id, std::move(c));
    };
    load("normal");
    for (const auto& name : cfg.adversarial_defenses) load(name);
    return out;
  }
  auto normal = std::make_shared<const Classifier>(train(ds, train_indices, cfg.train));
  out.emplace_back("normal", normal);
  for (const auto& name : cfg.adversarial_defenses) {
    const AttackSpec& a = cfg.attack(name);
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, "adversarial." + name);
    out.emplace_back(name, std::make_shared<const Classifier>(train(ds, train_indices, tc, &a, normal.get())));
  }
  return out;
}

Workspace prepare_workspace(const RunConfig& cfg, SplitMode mode) {
  if (cfg.attacks.empty()) throw ParameterError("attack list is empty");
  Workspace ws;
  ws.cfg = cfg;
  ws.data = load_or_generate_data(cfg);
  ws.base_split = stratified_split(ws.ds(), mode, split_seed(cfg));
  auto models = build_base_models(cfg, ws.ds(), ws.base_split.train);
  ws.reference = models.front().second;
  std::vector<std::shared_ptr<const Model>> members;
  for (const auto& [id, m] : models) {
    ws.defenses.push_back({id, m});
    if (id != "normal") members.push_back(m);
  }
  if (members.empty()) members.push_back(ws.reference);
  if (cfg.include_max)
    ws.defenses.push_back({"max", std::make_shared<const AggregateClassifier>(members, AggregateMode::max)});
  if (cfg.include_min)
    ws.defenses.push_back({"min", std::make_shared<const AggregateClassifier>(members, AggregateMode::min)});
  return ws;
}

SplitIndices replication_split(const Workspace& ws, SplitMode mode, std::size_t r) {
  return resplit_pool(ws.ds(), ws.base_split, mode, derive_seed(ws.cfg.seed, "replication", r));
}

ScoreCache::ScoreCache(const Workspace& ws, std::span<const std::string_view> streams) {
  for (auto s : streams) streams_.emplace_back(s);
  const Dataset& ds = ws.ds();
  auto pool = ws.base_split.pool();
  std::sort(pool.begin(), pool.end());
  const auto K = ws.defenses.size();
  const auto J = ws.cfg.attacks.size();
  const auto S = streams_.size();
  table_.assign(K, std::vector<std::vector<std::vector<Vector>>>(
                       J, std::vector<std::vector<Vector>>(S, std::vector<Vector>(ds.size()))));

  const bool randomized = ws.cfg.score.randomized();
  for (std::size_t j = 0; j < J; ++j) {
    const AttackSpec& attack = ws.cfg.attacks[j];
    std::vector<Vector> shared;
    if (ws.cfg.attack_target == AttackTarget::f0)
      shared = attack_examples(attack, *ws.reference, ds, pool);
    for (std::size_t k = 0; k < K; ++k) {
      const Model& model = *ws.defenses[k].model;
      const std::vector<Vector> own = ws.cfg.attack_target == AttackTarget::fk
                                          ? attack_examples(attack, model, ds, pool)
                                          : std::vector<Vector>{};
      const auto& attacked = ws.cfg.attack_target == AttackTarget::f0 ? shared : own;
      for (std::size_t s = 0; s < S; ++s) {
        auto& slot = table_[k][j][s];
        for (std::size_t n = 0; n < pool.size(); ++n) {
          const auto i = pool[n];
          if (!randomized && s > 0) {
            slot[i] = table_[k][j][0][i];
          } else {
            slot[i] = score_all_labels(ws.cfg.score, model, attacked[n], score_instance(streams_[s], i));
          }
        }
      }
    }
  }
}

std::size_t ScoreCache::stream_slot(std::string_view stream) const {
  for (std::size_t s = 0; s < streams_.size(); ++s)
    if (streams_[s] == stream) return s;
  throw ParameterError("score cache: stream '" + std::string(stream) + "' was not computed");
}

const Vector& ScoreCache::scores(std::size_t defense, std::size_t attack, std::string_view stream,
                                 std::size_t example) const {
  const auto& v = table_.at(defense).at(attack).at(stream_slot(stream)).at(example);
  if (v.size() == 0) throw ParameterError("score cache: example outside the calibration/test pool");
  return v;
}

Rq12Result run_rq12(const Workspace& ws, const ScoreCache& cache) {
  const auto K = ws.defenses.size();
  const auto J = ws.cfg.attacks.size();
  const auto C = ws.ds().num_classes();
  const double alpha = ws.cfg.alpha;
  Rq12Result res;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) {
      res.rq1.push_back({ws.defenses[k].id, ws.cfg.attacks[j].name, {}});
      res.rq2.push_back({ws.defenses[k].id, ws.cfg.attacks[j].name, {}});
    }

  for (std::size_t r = 0; r < ws.cfg.replications; ++r) {
    const auto split = replication_split(ws, SplitMode::rq12, r);
    const auto labels = labels_of(ws.ds(), split.test);
    std::vector<CalibrationResult> cals;
    for (std::size_t k = 0; k < K; ++k) {
      cals.push_back(cached_calibration(ws, cache, k, split.cal));
      for (std::size_t j = 0; j < J; ++j) {
        const auto cell = k * J + j;
        const auto known = cached_sets(cache, k, j, kTestStream, split.test, cals[k].per_attack_q[j].second);
        res.rq1[cell].per_replication.push_back(compute_metrics(known, labels, alpha, C));
        const auto cons = cached_sets(cache, k, j, kTestStream, split.test, cals[k].conservative_q);
        res.rq2[cell].per_replication.push_back(compute_metrics(cons, labels, alpha, C));
      }
    }
    res.calibrations.push_back(std::move(cals));
  }
  return res;
}

Rq3Result run_rq3(const Workspace& ws, const ScoreCache& cache) {
  const auto K = ws.defenses.size();
  const auto C = ws.ds().num_classes();
  const double alpha = ws.cfg.alpha;
  Rq3Result res;
  res.strategies.push_back({"equilibrium", {}, {}});
  res.strategies.push_back({"uniform", {}, {}});
  for (const auto& d : ws.defenses) res.strategies.push_back({d.id, {}, {}});

  for (std::size_t r = 0; r < ws.cfg.replications; ++r) {
    const auto split = replication_split(ws, SplitMode::rq3, r);
    Rq3Replication rep;
    for (std::size_t k = 0; k < K; ++k) rep.calibrations.push_back(cached_calibration(ws, cache, k, split.cal));
    rep.eval_payoff = cached_payoff(ws, cache, rep.calibrations, kEvalStream, split.eval);
    rep.test_payoff = cached_payoff(ws, cache, rep.calibrations, kTestStream, split.test);
    rep.equilibrium = solve_zero_sum(rep.eval_payoff.values);

    // Every strategy faces the same attacker draws.
    const auto seed = derive_seed(ws.cfg.seed, "strategy", r);
    const auto labels = labels_of(ws.ds(), split.test);
    std::vector<Vector> defenders{rep.equilibrium.defender, uniform_strategy(K)};
    for (std::size_t k = 0; k < K; ++k) {
      Vector pure = Vector::Zero(static_cast<Eigen::Index>(K));
      pure[static_cast<Eigen::Index>(k)] = 1.0;
      defenders.push_back(pure);
    }
    for (std::size_t s = 0; s < defenders.size(); ++s) {
      std::vector<PredictionSet> sets;
      sets.reserve(split.test.size());
      for (auto i : split.test) {
        const auto [k, j] = draw_profile(defenders[s], rep.equilibrium.attacker, seed, i);
        sets.push_back(prediction_set_from_scores(cache.scores(k, j, kTestStream, i),
                                                  rep.calibrations[k].conservative_q));
      }
      res.strategies[s].per_replication.push_back(compute_metrics(sets, labels, alpha, C));
      res.strategies[s].size_std_error.push_back(size_std_error(sets));
    }
    res.replications.push_back(std::move(rep));
  }
  return res;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string report_header() {
  return "defense,attack,score_kind,coverage_mean,coverage_sd,size_mean,size_sd,sscv_mean,sscv_sd\n";
}

std::string report_rows(const std::vector<CellResult>& cells, ScoreKind kind) {
  std::string out;
  for (const auto& c : cells)
    out += c.defense + "," + c.attack + "," + to_string(kind) + "," + summary_cells(c.per_replication) + "\n";
  return out;
}

std::string report_rows(const std::vector<StrategyResult>& strategies, ScoreKind kind) {
  std::string out;
  for (const auto& s : strategies)
    out += s.name + ",equilibrium_attacker," + to_string(kind) + "," + summary_cells(s.per_replication) + "\n";
  return out;
}

void cmd_gen_data(const RunConfig& cfg) {
  const Dataset ds = load_or_generate_data(cfg);
  const auto split = stratified_split(ds, cfg.split_mode, split_seed(cfg));
  std::filesystem::create_directories(cfg.out_dir);
  write_dataset(ds, cfg.out_dir / "dataset.csv");
  write_split(split, cfg.out_dir / "split.json");
}

void cmd_train(const RunConfig& cfg) {
  const Dataset ds = load_or_generate_data(cfg);
  const auto split = stratified_split(ds, cfg.split_mode, split_seed(cfg));
  RunConfig fresh = cfg;
  fresh.models_dir.clear();
  const auto models = build_base_models(fresh, ds, split.train);
  std::filesystem::create_directories(cfg.out_dir / "models");
  for (const auto& [id, m] : models) save_classifier(*m, cfg.out_dir / "models" / (id + ".json"));
  write_split(split, cfg.out_dir / "split.json");
}

namespace {

void write_calibrations(const RunConfig& cfg, const std::vector<CalibrationResult>& cals) {
  for (const auto& c : cals)
    write_file_atomic(cfg.out_dir / ("calibration_" + c.model_id + ".json"), calibration_to_json(c));
}

}  // namespace

void cmd_rq1(const RunConfig& cfg) {
  const auto ws = prepare_workspace(cfg, SplitMode::rq12);
  const std::string_view streams[] = {kCalStream, kTestStream};
  const ScoreCache cache(ws, streams);
  const auto res = run_rq12(ws, cache);
  std::filesystem::create_directories(cfg.out_dir);
  write_file_atomic(cfg.out_dir / "rq1_report.csv", report_header() + report_rows(res.rq1, cfg.score.kind));
}

void cmd_rq2(const RunConfig& cfg) {
  const auto ws = prepare_workspace(cfg, SplitMode::rq12);
  const std::string_view streams[] = {kCalStream, kTestStream};
  const ScoreCache cache(ws, streams);
  const auto res = run_rq12(ws, cache);
  std::filesystem::create_directories(cfg.out_dir);
  write_file_atomic(cfg.out_dir / "rq2_report.csv", report_header() + report_rows(res.rq2, cfg.score.kind));
  write_calibrations(cfg, res.calibrations.front());
}

void cmd_rq3(const RunConfig& cfg) {
  const auto ws = prepare_workspace(cfg, SplitMode::rq3);
  const std::string_view streams[] = {kCalStream, kEvalStream, kTestStream};
  const ScoreCache cache(ws, streams);
  const auto res = run_rq3(ws, cache);
  const auto& first = res.replications.front();
  std::filesystem::create_directories(cfg.out_dir);
  write_file_atomic(cfg.out_dir / "payoff_eval.csv", payoff_to_csv(first.eval_payoff));
  write_file_atomic(cfg.out_dir / "payoff_test.csv", payoff_to_csv(first.test_payoff));
  write_file_atomic(cfg.out_dir / "equilibrium.json", equilibrium_to_json(first.equilibrium, first.eval_payoff));
  write_file_atomic(cfg.out_dir / "rq3_report.csv", report_header() + report_rows(res.strategies, cfg.score.kind));
  write_calibrations(cfg, first.calibrations);
}

MixedStrategy cmd_solve_game(const std::filesystem::path& matrix_csv,
                             const std::filesystem::path& out_dir) {
  const auto p = read_payoff(matrix_csv);
  const auto eq = solve_zero_sum(p.values);
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "equilibrium.json", equilibrium_to_json(eq, p));
  return eq;
}

}  // namespace arcp
