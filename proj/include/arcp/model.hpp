#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arcp/dataio.hpp"

namespace arcp {

struct AttackSpec;

/// Anything that maps a feature vector to class logits and can report the
/// logit Jacobian with respect to its input. Implementations are immutable
/// and safe to share across threads.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::size_t num_classes() const = 0;
  virtual std::size_t dim() const = 0;

  /// Raw class scores Z(x), length C. Throws DimensionError if |x| != d.
  virtual Vector logits(const Vector& x) const = 0;

  /// dZ/dx, a C×d matrix.
  virtual Matrix logit_jacobian(const Vector& x) const = 0;
};

/// Numerically stable softmax; sums to 1 within rounding.
Vector softmax(const Vector& z);

Vector probabilities(const Model& model, const Vector& x);

/// Cross-entropy −ln p̂_y(x).
double loss(const Model& model, const Vector& x, std::size_t y);

/// ∇_x loss, computed as Jᵀ(p − e_y).
Vector input_gradient(const Model& model, const Vector& x, std::size_t y);

std::size_t predict(const Model& model, const Vector& x);

enum class ClassifierKind { linear, mlp1 };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& s);

// Same layout as Classifier's parameters; used for gradients.
struct ClassifierParams {
  Matrix w1;  // linear: C×d, mlp1: h×d
  Vector b1;
  Matrix w2;  // mlp1 only: C×h
  Vector b2;
};

/// Softmax classifier: either a linear map or a one-hidden-layer tanh MLP.
class Classifier final : public Model {
 public:
  Classifier(ClassifierKind kind, ClassifierParams params);

  static Classifier zeros(ClassifierKind kind, std::size_t num_classes, std::size_t dim,
                          std::size_t hidden = 32);
  // Xavier-style Gaussian init scaled by 1/sqrt(fan_in); zero biases.
  static Classifier random(ClassifierKind kind, std::size_t num_classes, std::size_t dim,
                           std::size_t hidden, std::uint64_t seed, double scale = 1.0);

  ClassifierKind kind() const noexcept { return kind_; }
  const ClassifierParams& params() const noexcept { return params_; }
  std::size_t hidden() const noexcept;

  std::size_t num_classes() const override;
  std::size_t dim() const override;
  Vector logits(const Vector& x) const override;
  Matrix logit_jacobian(const Vector& x) const override;

  /// Gradient of loss(x, y) with respect to every parameter.
  ClassifierParams parameter_gradient(const Vector& x, std::size_t y) const;

  // Flat row-major view: w1, b1, then w2, b2 for mlp1.
  std::vector<double> flat_parameters() const;
  Classifier with_flat_parameters(std::span<const double> flat) const;
  static std::vector<double> flatten(ClassifierKind kind, const ClassifierParams& p);

  friend bool operator==(const Classifier& a, const Classifier& b);

 private:
  void check_input(const Vector& x) const;

  ClassifierKind kind_;
  ClassifierParams params_;
};

enum class AggregateMode { max, min };

/// Element-wise max or min over member logits.
class AggregateClassifier final : public Model {
 public:
  AggregateClassifier(std::vector<std::shared_ptr<const Model>> members, AggregateMode mode);

  AggregateMode mode() const noexcept { return mode_; }
  const std::vector<std::shared_ptr<const Model>>& members() const noexcept { return members_; }

  std::size_t num_classes() const override;
  std::size_t dim() const override;
  Vector logits(const Vector& x) const override;
  // Row c is taken from the member selecting class c (first one on ties).
  Matrix logit_jacobian(const Vector& x) const override;

 private:
  std::vector<std::shared_ptr<const Model>> members_;
  AggregateMode mode_;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double lr_decay = 0.99;
  std::uint64_t seed = 0;
  ClassifierKind kind = ClassifierKind::mlp1;
  std::size_t hidden = 32;

  void validate() const;
};

/// Minibatch SGD on cross-entropy.
///
/// With an attack, every batch is replaced by its attacked version against
/// `target_model` (the fixed reference model) before the gradient step.
/// Attacks are regenerated each epoch; randomized attacks draw from a
/// per-(epoch, example) substream, deterministic ones are computed once.
Classifier train(const Dataset& ds, std::span<const std::size_t> indices,
                 const TrainConfig& cfg, const AttackSpec* attack = nullptr,
                 const Model* target_model = nullptr);

double accuracy(const Model& model, const Dataset& ds, std::span<const std::size_t> indices);

std::string classifier_to_json(const Classifier& c);
Classifier classifier_from_json(const std::string& text);
void save_classifier(const Classifier& c, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace arcp
