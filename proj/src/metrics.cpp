#include "arcp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "arcp/errors.hpp"
#include "arcp/format.hpp"

namespace arcp {

namespace {

void check_lengths(std::span<const PredictionSet> sets, std::span<const std::size_t> labels) {
  if (sets.size() != labels.size()) throw ParameterError("metrics: sets and labels differ in length");
  if (sets.empty()) throw ParameterError("metrics: no prediction sets");
}

// Returns C, the largest size covered, after checking the partition.
std::size_t check_strata(const Strata& strata) {
  std::size_t max_size = 0;
  for (const auto& s : strata)
    for (std::size_t v : s) max_size = std::max(max_size, v);
  std::vector<int> seen(max_size + 1, 0);
  for (const auto& s : strata)
    for (std::size_t v : s)
      if (++seen[v] > 1) throw ParameterError("sscv: strata overlap at size " + std::to_string(v));
  for (std::size_t v = 0; v <= max_size; ++v)
    if (!seen[v]) throw ParameterError("sscv: strata do not cover size " + std::to_string(v));
  return max_size;
}

}  // namespace

double coverage(std::span<const PredictionSet> sets, std::span<const std::size_t> labels) {
  check_lengths(sets, labels);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) covered += sets[i].contains(labels[i]);
  return static_cast<double>(covered) / static_cast<double>(sets.size());
}

double mean_size(std::span<const PredictionSet> sets) {
  if (sets.empty()) throw ParameterError("metrics: no prediction sets");
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

Strata singleton_strata(std::size_t num_classes) {
  Strata s;
  for (std::size_t v = 0; v <= num_classes; ++v) s.push_back({v});
  return s;
}

MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::size_t> labels, double alpha,
                              const Strata& strata) {
  check_lengths(sets, labels);
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("metrics: alpha must be in (0,1)");
  const std::size_t C = check_strata(strata);

  std::vector<std::size_t> stratum_of(C + 1);
  for (std::size_t k = 0; k < strata.size(); ++k)
    for (std::size_t v : strata[k]) stratum_of[v] = k;

  MetricsReport r;
  r.strata.resize(strata.size());
  std::vector<std::size_t> hits(strata.size(), 0);
  for (std::size_t k = 0; k < strata.size(); ++k) r.strata[k].sizes = strata[k];
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].size() > C) throw ParameterError("metrics: prediction set larger than strata allow");
    const std::size_t k = stratum_of[sets[i].size()];
    ++r.strata[k].count;
    hits[k] += sets[i].contains(labels[i]);
  }
  for (std::size_t k = 0; k < strata.size(); ++k) {
    if (r.strata[k].count == 0) continue;
    r.strata[k].coverage = static_cast<double>(hits[k]) / static_cast<double>(r.strata[k].count);
    const double dev = std::abs(r.strata[k].coverage - (1.0 - alpha));
    r.sscv = r.sscv ? std::max(*r.sscv, dev) : dev;
  }
  r.coverage = coverage(sets, labels);
  r.mean_size = mean_size(sets);
  return r;
}

MetricsReport compute_metrics(std::span<const PredictionSet> sets,
                              std::span<const std::size_t> labels, double alpha,
                              std::size_t num_classes) {
  return compute_metrics(sets, labels, alpha, singleton_strata(num_classes));
}

std::optional<double> sscv(std::span<const PredictionSet> sets, std::span<const std::size_t> labels,
                           double alpha, const Strata& strata) {
  return compute_metrics(sets, labels, alpha, strata).sscv;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["coverage"] = r.coverage;
  j["mean_size"] = r.mean_size;
  if (r.sscv) j["sscv"] = *r.sscv;
  else j["sscv"] = "undefined";
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : r.strata) {
    nlohmann::ordered_json e;
    e["sizes"] = s.sizes;
    e["count"] = s.count;
    if (s.count) e["coverage"] = s.coverage;
    else e["coverage"] = nullptr;
    arr.push_back(e);
  }
  j["strata"] = arr;
  return j.dump(1) + "\n";
}

std::string metrics_csv_header() { return "coverage,mean_size,sscv"; }

std::string metrics_csv_row(const MetricsReport& r) {
  return format_double(r.coverage) + "," + format_double(r.mean_size) + "," +
         (r.sscv ? format_double(*r.sscv) : std::string("undefined"));
}

}  // namespace arcp
