#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace arcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct LabeledExample {
  Vector features;  // every coordinate in [0,1]
  std::size_t label = 0;

  friend bool operator==(const LabeledExample& a, const LabeledExample& b) {
    return a.label == b.label && a.features.size() == b.features.size() &&
           a.features == b.features;
  }
};

/// Immutable collection of labeled examples in the unit box.
///
/// Construction validates that all examples share one dimension, every
/// feature lies in [0,1], every label is below `num_classes`, and every
/// class occurs at least once.
class Dataset {
 public:
  Dataset(std::vector<LabeledExample> examples, std::size_t num_classes);

  std::size_t size() const noexcept { return examples_.size(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t dim() const noexcept { return dim_; }
  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<LabeledExample>& examples() const noexcept { return examples_; }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.num_classes_ == b.num_classes_ && a.dim_ == b.dim_ && a.examples_ == b.examples_;
  }

 private:
  std::vector<LabeledExample> examples_;
  std::size_t num_classes_;
  std::size_t dim_;
};

enum class SplitMode { rq12, rq3 };

SplitMode parse_split_mode(const std::string& s);
std::string to_string(SplitMode mode);

struct SplitIndices {
  std::vector<std::size_t> train, val, cal, eval, test;

  // cal ∪ eval ∪ test, in that order.
  std::vector<std::size_t> pool() const;

  friend bool operator==(const SplitIndices&, const SplitIndices&) = default;
};

Dataset generate_synthetic(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                           double spread, std::uint64_t seed);

// Splits `indices` per class into consecutive shuffled chunks sized by
// largest-remainder allocation of `fractions` (which must sum to 1).
std::vector<std::vector<std::size_t>> stratified_partition(const Dataset& ds,
                                                           std::span<const std::size_t> indices,
                                                           std::span<const double> fractions,
                                                           std::uint64_t seed);

// 50% train / 10% val / 40% pool, then the pool is split per mode:
// rq12 → cal 50% / test 50%, rq3 → cal 25% / eval 25% / test 50%.
SplitIndices stratified_split(const Dataset& ds, SplitMode mode, std::uint64_t seed);

// Keeps train/val of `base` and redraws cal/eval/test from its pool.
SplitIndices resplit_pool(const Dataset& ds, const SplitIndices& base, SplitMode mode,
                          std::uint64_t seed);

Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
std::string format_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

SplitIndices read_split(const std::filesystem::path& path);
void write_split(const SplitIndices& split, const std::filesystem::path& path);

// Writes through a temporary sibling file and renames, so readers never see
// a partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace arcp
