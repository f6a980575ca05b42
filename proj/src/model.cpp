#include "arcp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "arcp/attacks.hpp"
#include "arcp/errors.hpp"
#include "arcp/rng.hpp"

namespace arcp {

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

Vector probabilities(const Model& model, const Vector& x) { return softmax(model.logits(x)); }

double loss(const Model& model, const Vector& x, std::size_t y) {
  if (y >= model.num_classes()) throw ParameterError("loss: label out of range");
  const Vector z = model.logits(x);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return lse - z[static_cast<Eigen::Index>(y)];
}

Vector input_gradient(const Model& model, const Vector& x, std::size_t y) {
  if (y >= model.num_classes()) throw ParameterError("input_gradient: label out of range");
  Vector g = probabilities(model, x);
  g[static_cast<Eigen::Index>(y)] -= 1.0;
  return model.logit_jacobian(x).transpose() * g;
}

std::size_t predict(const Model& model, const Vector& x) {
  Eigen::Index best = 0;
  model.logits(x).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

std::string to_string(ClassifierKind kind) {
  return kind == ClassifierKind::linear ? "linear" : "mlp1";
}

ClassifierKind parse_classifier_kind(const std::string& s) {
  if (s == "linear") return ClassifierKind::linear;
  if (s == "mlp1") return ClassifierKind::mlp1;
  throw ParameterError("unknown classifier kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Classifier

namespace {

bool all_finite(const Matrix& m) { return m.size() == 0 || m.allFinite(); }

}  // namespace

Classifier::Classifier(ClassifierKind kind, ClassifierParams params)
    : kind_(kind), params_(std::move(params)) {
  const auto& p = params_;
  if (p.w1.rows() == 0 || p.w1.cols() == 0) throw ParameterError("classifier: empty w1");
  if (p.b1.size() != p.w1.rows()) throw DimensionError("classifier: b1 does not match w1");
  if (kind_ == ClassifierKind::mlp1) {
    if (p.w2.cols() != p.w1.rows()) throw DimensionError("classifier: w2 does not match hidden");
    if (p.b2.size() != p.w2.rows()) throw DimensionError("classifier: b2 does not match w2");
    if (p.w2.rows() < 1) throw ParameterError("classifier: no classes");
  } else if (p.w2.size() != 0 || p.b2.size() != 0) {
    throw ParameterError("classifier: linear model has second-layer parameters");
  }
  if (!all_finite(p.w1) || !all_finite(p.b1) || !all_finite(p.w2) || !all_finite(p.b2))
    throw NumericError("classifier: non-finite parameter");
}

Classifier Classifier::zeros(ClassifierKind kind, std::size_t num_classes, std::size_t dim,
                             std::size_t hidden) {
  const auto C = static_cast<Eigen::Index>(num_classes);
  const auto d = static_cast<Eigen::Index>(dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  ClassifierParams p;
  if (kind == ClassifierKind::linear) {
    p.w1 = Matrix::Zero(C, d);
    p.b1 = Vector::Zero(C);
  } else {
    p.w1 = Matrix::Zero(h, d);
    p.b1 = Vector::Zero(h);
    p.w2 = Matrix::Zero(C, h);
    p.b2 = Vector::Zero(C);
  }
  return Classifier(kind, std::move(p));
}

Classifier Classifier::random(ClassifierKind kind, std::size_t num_classes, std::size_t dim,
                              std::size_t hidden, std::uint64_t seed, double scale) {
  Classifier c = zeros(kind, num_classes, dim, hidden);
  Rng rng(seed);
  auto fill = [&](Matrix& m) {
    std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = n(rng);
  };
  fill(c.params_.w1);
  if (kind == ClassifierKind::mlp1) fill(c.params_.w2);
  return c;
}

std::size_t Classifier::hidden() const noexcept {
  return kind_ == ClassifierKind::mlp1 ? static_cast<std::size_t>(params_.w1.rows()) : 0;
}

std::size_t Classifier::num_classes() const {
  return static_cast<std::size_t>(kind_ == ClassifierKind::linear ? params_.w1.rows()
                                                                  : params_.w2.rows());
}

std::size_t Classifier::dim() const { return static_cast<std::size_t>(params_.w1.cols()); }

void Classifier::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim())
    throw DimensionError("classifier expects dimension " + std::to_string(dim()) + ", got " +
                         std::to_string(x.size()));
}

Vector Classifier::logits(const Vector& x) const {
  check_input(x);
  if (kind_ == ClassifierKind::linear) return params_.w1 * x + params_.b1;
  Vector h = (params_.w1 * x + params_.b1).array().tanh().matrix();
  return params_.w2 * h + params_.b2;
}

Matrix Classifier::logit_jacobian(const Vector& x) const {
  check_input(x);
  if (kind_ == ClassifierKind::linear) return params_.w1;
  Vector h = (params_.w1 * x + params_.b1).array().tanh().matrix();
  Vector dh = (1.0 - h.array().square()).matrix();
  return params_.w2 * dh.asDiagonal() * params_.w1;
}

ClassifierParams Classifier::parameter_gradient(const Vector& x, std::size_t y) const {
  check_input(x);
  if (y >= num_classes()) throw ParameterError("parameter_gradient: label out of range");
  ClassifierParams g;
  if (kind_ == ClassifierKind::linear) {
    Vector gz = softmax(params_.w1 * x + params_.b1);
    gz[static_cast<Eigen::Index>(y)] -= 1.0;
    g.w1 = gz * x.transpose();
    g.b1 = gz;
    return g;
  }
  Vector h = (params_.w1 * x + params_.b1).array().tanh().matrix();
  Vector gz = softmax(params_.w2 * h + params_.b2);
  gz[static_cast<Eigen::Index>(y)] -= 1.0;
  g.w2 = gz * h.transpose();
  g.b2 = gz;
  Vector ga = ((params_.w2.transpose() * gz).array() * (1.0 - h.array().square())).matrix();
  g.w1 = ga * x.transpose();
  g.b1 = ga;
  return g;
}

std::vector<double> Classifier::flatten(ClassifierKind kind, const ClassifierParams& p) {
  std::vector<double> out;
  auto push_matrix = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  };
  auto push_vector = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  };
  push_matrix(p.w1);
  push_vector(p.b1);
  if (kind == ClassifierKind::mlp1) {
    push_matrix(p.w2);
    push_vector(p.b2);
  }
  return out;
}

std::vector<double> Classifier::flat_parameters() const { return flatten(kind_, params_); }

Classifier Classifier::with_flat_parameters(std::span<const double> flat) const {
  ClassifierParams p = params_;
  std::size_t pos = 0;
  auto take_matrix = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat[pos++];
  };
  auto take_vector = [&](Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = flat[pos++];
  };
  if (flat.size() != flat_parameters().size())
    throw DimensionError("with_flat_parameters: wrong parameter count");
  take_matrix(p.w1);
  take_vector(p.b1);
  if (kind_ == ClassifierKind::mlp1) {
    take_matrix(p.w2);
    take_vector(p.b2);
  }
  return Classifier(kind_, std::move(p));
}

bool operator==(const Classifier& a, const Classifier& b) {
  return a.kind_ == b.kind_ && a.flat_parameters() == b.flat_parameters() &&
         a.num_classes() == b.num_classes() && a.dim() == b.dim();
}

// ---------------------------------------------------------------------------
// AggregateClassifier

AggregateClassifier::AggregateClassifier(std::vector<std::shared_ptr<const Model>> members,
                                         AggregateMode mode)
    : members_(std::move(members)), mode_(mode) {
  if (members_.empty()) throw ParameterError("aggregate classifier needs at least one member");
  for (const auto& m : members_) {
    if (!m) throw ParameterError("aggregate classifier: null member");
    if (m->num_classes() != members_.front()->num_classes() ||
        m->dim() != members_.front()->dim())
      throw DimensionError("aggregate classifier members disagree on (C, d)");
  }
}

std::size_t AggregateClassifier::num_classes() const { return members_.front()->num_classes(); }
std::size_t AggregateClassifier::dim() const { return members_.front()->dim(); }

Vector AggregateClassifier::logits(const Vector& x) const {
  Vector out = members_.front()->logits(x);
  for (std::size_t k = 1; k < members_.size(); ++k) {
    Vector z = members_[k]->logits(x);
    if (mode_ == AggregateMode::max) out = out.cwiseMax(z);
    else out = out.cwiseMin(z);
  }
  return out;
}

Matrix AggregateClassifier::logit_jacobian(const Vector& x) const {
  std::vector<Vector> zs;
  zs.reserve(members_.size());
  for (const auto& m : members_) zs.push_back(m->logits(x));
  const auto C = static_cast<Eigen::Index>(num_classes());
  std::vector<std::size_t> pick(static_cast<std::size_t>(C), 0);
  for (Eigen::Index c = 0; c < C; ++c) {
    for (std::size_t k = 1; k < zs.size(); ++k) {
      const double cur = zs[pick[static_cast<std::size_t>(c)]][c];
      if (mode_ == AggregateMode::max ? zs[k][c] > cur : zs[k][c] < cur)
        pick[static_cast<std::size_t>(c)] = k;
    }
  }
  Matrix J(C, static_cast<Eigen::Index>(dim()));
  std::vector<Matrix> jac(members_.size());
  for (Eigen::Index c = 0; c < C; ++c) {
    const std::size_t k = pick[static_cast<std::size_t>(c)];
    if (jac[k].size() == 0) jac[k] = members_[k]->logit_jacobian(x);
    J.row(c) = jac[k].row(c);
  }
  return J;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("train: learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParameterError("train: lr_decay must be in (0,1]");
  if (kind == ClassifierKind::mlp1 && hidden < 1) throw ParameterError("train: hidden must be >= 1");
}

Classifier train(const Dataset& ds, std::span<const std::size_t> indices, const TrainConfig& cfg,
                 const AttackSpec* attack, const Model* target_model) {
  cfg.validate();
  if (indices.empty()) throw ParameterError("train: empty index set");
  if (attack && !target_model) throw ParameterError("train: attack requires a target model");
  if (attack) attack->validate();
  for (std::size_t i : indices)
    if (i >= ds.size()) throw ParameterError("train: index out of range");

  const bool attacked = attack && attack->kind != AttackKind::Clean;
  Classifier model = Classifier::random(cfg.kind, ds.num_classes(), ds.dim(), cfg.hidden,
                                        derive_seed(cfg.seed, "train.init"));
  ClassifierParams params = model.params();

  // Deterministic attacks against the fixed target give the same inputs every
  // epoch, so they are generated once.
  std::vector<Vector> fixed_inputs;
  if (attacked && !attack->randomized())
    fixed_inputs = attack_examples(*attack, *target_model, ds, indices);

  std::vector<std::size_t> order(indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = make_rng(cfg.seed, "train.shuffle");
  double lr = cfg.learning_rate;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    AttackSpec epoch_attack;
    if (attacked && attack->randomized()) {
      epoch_attack = *attack;
      epoch_attack.seed = derive_seed(attack->seed, "train.epoch", epoch);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Classifier current(cfg.kind, params);
      ClassifierParams acc;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t pos = order[b];
        const std::size_t idx = indices[pos];
        const auto& ex = ds[idx];
        ClassifierParams g;
        if (!attacked) {
          g = current.parameter_gradient(ex.features, ex.label);
        } else if (!attack->randomized()) {
          g = current.parameter_gradient(fixed_inputs[pos], ex.label);
        } else {
          g = current.parameter_gradient(
              apply_attack(epoch_attack, *target_model, ex.features, ex.label, idx), ex.label);
        }
        if (b == start) {
          acc = std::move(g);
        } else {
          acc.w1 += g.w1;
          acc.b1 += g.b1;
          if (cfg.kind == ClassifierKind::mlp1) {
            acc.w2 += g.w2;
            acc.b2 += g.b2;
          }
        }
      }
      const double step = lr / static_cast<double>(end - start);
      params.w1 -= step * acc.w1;
      params.b1 -= step * acc.b1;
      if (cfg.kind == ClassifierKind::mlp1) {
        params.w2 -= step * acc.w2;
        params.b2 -= step * acc.b2;
      }
    }
    lr *= cfg.lr_decay;
  }
  return Classifier(cfg.kind, std::move(params));
}

double accuracy(const Model& model, const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ParameterError("accuracy: empty index set");
  std::size_t hits = 0;
  for (std::size_t i : indices) hits += predict(model, ds[i].features) == ds[i].label;
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::ordered_json matrix_json(const Matrix& m) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

nlohmann::ordered_json vector_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Matrix read_matrix(const nlohmann::json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  if (!j.contains(key) || !j[key].is_array()) throw FormatError(std::string("missing '") + key + "'");
  const auto& arr = j[key];
  if (static_cast<Eigen::Index>(arr.size()) != rows * cols)
    throw FormatError(std::string("'") + key + "' has wrong length");
  Matrix m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!arr[pos].is_number()) throw FormatError(std::string("non-number in '") + key + "'");
      m(i, c) = arr[pos++].get<double>();
    }
  return m;
}

}  // namespace

std::string classifier_to_json(const Classifier& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind());
  j["num_classes"] = c.num_classes();
  j["dim"] = c.dim();
  j["hidden"] = c.hidden();
  j["w1"] = matrix_json(c.params().w1);
  j["b1"] = vector_json(c.params().b1);
  if (c.kind() == ClassifierKind::mlp1) {
    j["w2"] = matrix_json(c.params().w2);
    j["b2"] = vector_json(c.params().b2);
  }
  return j.dump() + "\n";
}

Classifier classifier_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    const auto kind = parse_classifier_kind(j.at("kind").get<std::string>());
    const auto C = j.at("num_classes").get<Eigen::Index>();
    const auto d = j.at("dim").get<Eigen::Index>();
    ClassifierParams p;
    if (kind == ClassifierKind::linear) {
      p.w1 = read_matrix(j, "w1", C, d);
      p.b1 = read_matrix(j, "b1", C, 1);
    } else {
      const auto h = j.at("hidden").get<Eigen::Index>();
      p.w1 = read_matrix(j, "w1", h, d);
      p.b1 = read_matrix(j, "b1", h, 1);
      p.w2 = read_matrix(j, "w2", C, h);
      p.b2 = read_matrix(j, "b2", C, 1);
    }
    return Classifier(kind, std::move(p));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

void save_classifier(const Classifier& c, const std::filesystem::path& path) {
  write_file_atomic(path, classifier_to_json(c));
}

Classifier load_classifier(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw FormatError("model file not found: '" + path.string() + "'");
  try {
    return classifier_from_json(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace arcp
