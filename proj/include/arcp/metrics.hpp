#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arcp/conformal.hpp"

namespace arcp {

// A stratum is a set of prediction-set sizes; strata must partition {0..C}.
using Strata = std::vector<std::vector<std::size_t>>;

double coverage(std::span<const PredictionSet> sets, std::span<const std::size_t> labels);
double mean_size(std::span<const PredictionSet> sets);

// {0}, {1}, ..., {C}
Strata singleton_strata(std::size_t num_classes);

/// Size-stratified coverage violation: max over nonempty strata of
/// |stratum coverage − (1−α)|. nullopt when every stratum is empty.
std::optional<double> sscv(std::span<const PredictionSet> sets, std::span<const std::size_t> labels,
                           double alpha, const Strata& strata);

struct StratumReport {
  std::vector<std::size_t> sizes;
  std::size_t count = 0;
  double coverage = 0.0;  // meaningful only when count > 0
};

struct MetricsReport {
  double coverage = 0.0;
  double mean_size = 0.0;
  std::optional<double> sscv;
  std::vector<StratumReport> strata;
};

MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::size_t> labels, double alpha,
                              std::size_t num_classes);
MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::size_t> labels, double alpha,
                              const Strata& strata);

std::string metrics_to_json(const MetricsReport& r);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& r);

}  // namespace arcp
