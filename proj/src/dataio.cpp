#include "arcp/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "arcp/errors.hpp"
#include "arcp/format.hpp"
#include "arcp/rng.hpp"

namespace arcp {

Dataset::Dataset(std::vector<LabeledExample> examples, std::size_t num_classes)
    : examples_(std::move(examples)), num_classes_(num_classes), dim_(0) {
  if (examples_.empty()) throw ParameterError("dataset has no examples");
  if (num_classes_ < 1) throw ParameterError("dataset needs at least one class");
  dim_ = static_cast<std::size_t>(examples_.front().features.size());
  if (dim_ == 0) throw ParameterError("dataset features are empty");
  std::vector<bool> seen(num_classes_, false);
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (static_cast<std::size_t>(ex.features.size()) != dim_)
      throw DimensionError("example " + std::to_string(i) + " has dimension " +
                           std::to_string(ex.features.size()) + ", expected " +
                           std::to_string(dim_));
    if (ex.label >= num_classes_)
      throw ParameterError("example " + std::to_string(i) + " has label " +
                           std::to_string(ex.label) + " >= num_classes");
    for (Eigen::Index j = 0; j < ex.features.size(); ++j) {
      double v = ex.features[j];
      if (!(v >= 0.0 && v <= 1.0))
        throw ParameterError("example " + std::to_string(i) + " feature outside [0,1]");
    }
    seen[ex.label] = true;
  }
  for (std::size_t c = 0; c < num_classes_; ++c)
    if (!seen[c]) throw ParameterError("class " + std::to_string(c) + " has no examples");
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "rq12") return SplitMode::rq12;
  if (s == "rq3") return SplitMode::rq3;
  throw ParameterError("unknown split mode '" + s + "'");
}

std::string to_string(SplitMode mode) { return mode == SplitMode::rq12 ? "rq12" : "rq3"; }

std::vector<std::size_t> SplitIndices::pool() const {
  std::vector<std::size_t> out;
  out.reserve(cal.size() + eval.size() + test.size());
  out.insert(out.end(), cal.begin(), cal.end());
  out.insert(out.end(), eval.begin(), eval.end());
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

Dataset generate_synthetic(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                           double spread, std::uint64_t seed) {
  if (num_classes < 2) throw ParameterError("generate_synthetic: num_classes must be >= 2");
  if (dim < 1) throw ParameterError("generate_synthetic: dim must be >= 1");
  if (per_class < 1) throw ParameterError("generate_synthetic: per_class must be >= 1");
  if (!(spread > 0.0) || !std::isfinite(spread))
    throw ParameterError("generate_synthetic: spread must be positive");

  Rng mean_rng = make_rng(seed, "synthetic.means");
  std::uniform_real_distribution<double> mean_dist(0.2, 0.8);
  std::vector<Vector> means(num_classes, Vector(static_cast<Eigen::Index>(dim)));
  for (auto& m : means)
    for (Eigen::Index j = 0; j < m.size(); ++j) m[j] = mean_dist(mean_rng);

  Rng noise_rng = make_rng(seed, "synthetic.noise");
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<LabeledExample> examples;
  examples.reserve(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Vector x(static_cast<Eigen::Index>(dim));
      for (Eigen::Index j = 0; j < x.size(); ++j)
        x[j] = std::clamp(means[c][j] + noise(noise_rng), 0.0, 1.0);
      examples.push_back({std::move(x), c});
    }
  }
  return Dataset(std::move(examples), num_classes);
}

namespace {

// Largest-remainder apportionment of n items over fractions; ties in the
// fractional part go to the earlier slot.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    double quota = static_cast<double>(n) * fractions[k];
    double fl = std::floor(quota + 1e-9);
    counts[k] = static_cast<std::size_t>(fl);
    assigned += counts[k];
    remainders.emplace_back(quota - fl, k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];
  return counts;
}

}  // namespace

std::vector<std::vector<std::size_t>> stratified_partition(const Dataset& ds,
                                                           std::span<const std::size_t> indices,
                                                           std::span<const double> fractions,
                                                           std::uint64_t seed) {
  if (fractions.empty()) throw ParameterError("stratified_partition: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ParameterError("stratified_partition: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ParameterError("stratified_partition: fractions must sum to 1");

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw ParameterError("stratified_partition: index out of range");
    by_class[ds[i].label].push_back(i);
  }

  std::vector<std::vector<std::size_t>> parts(fractions.size());
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    std::sort(members.begin(), members.end());
    Rng rng = make_rng(seed, "stratify", c);
    std::shuffle(members.begin(), members.end(), rng);
    auto counts = apportion(members.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      parts[k].insert(parts[k].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                      members.begin() + static_cast<std::ptrdiff_t>(pos + counts[k]));
      pos += counts[k];
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

namespace {

void split_pool(const Dataset& ds, std::span<const std::size_t> pool, SplitMode mode,
                std::uint64_t seed, SplitIndices& out) {
  if (mode == SplitMode::rq12) {
    const double fr[] = {0.5, 0.5};
    auto parts = stratified_partition(ds, pool, fr, derive_seed(seed, "split.pool"));
    out.cal = std::move(parts[0]);
    out.eval.clear();
    out.test = std::move(parts[1]);
  } else {
    const double fr[] = {0.25, 0.25, 0.5};
    auto parts = stratified_partition(ds, pool, fr, derive_seed(seed, "split.pool"));
    out.cal = std::move(parts[0]);
    out.eval = std::move(parts[1]);
    out.test = std::move(parts[2]);
  }
}

}  // namespace

SplitIndices stratified_split(const Dataset& ds, SplitMode mode, std::uint64_t seed) {
  std::vector<std::size_t> per_class(ds.num_classes(), 0);
  for (const auto& ex : ds.examples()) ++per_class[ex.label];
  for (std::size_t c = 0; c < per_class.size(); ++c)
    if (per_class[c] < 2)
      throw ParameterError("stratified_split: class " + std::to_string(c) +
                           " has fewer than 2 examples");

  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const double outer[] = {0.5, 0.1, 0.4};
  auto parts = stratified_partition(ds, all, outer, derive_seed(seed, "split.outer"));
  SplitIndices out;
  out.train = std::move(parts[0]);
  out.val = std::move(parts[1]);
  split_pool(ds, parts[2], mode, seed, out);
  return out;
}

SplitIndices resplit_pool(const Dataset& ds, const SplitIndices& base, SplitMode mode,
                          std::uint64_t seed) {
  SplitIndices out;
  out.train = base.train;
  out.val = base.val;
  auto pool = base.pool();
  std::sort(pool.begin(), pool.end());
  split_pool(ds, pool, mode, seed, out);
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + tmp.string() + "'");
    out << contents;
    if (!out) throw FormatError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string format_dataset(const Dataset& ds) {
  std::string out = "label";
  for (std::size_t j = 0; j < ds.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const auto& ex : ds.examples()) {
    out += std::to_string(ex.label);
    for (Eigen::Index j = 0; j < ex.features.size(); ++j) {
      out += ',';
      out += format_double(ex.features[j]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      lines.push_back(rest.substr(0, nl));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  // Trailing blank lines are tolerated; blank lines inside are not.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("no rows");

  auto header = split_commas(lines[0]);
  if (header.size() < 2 || header[0] != "label")
    throw FormatError("header must be 'label,f0,...'", 1);
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "f" + std::to_string(j - 1))
      throw FormatError("unexpected header column '" + std::string(header[j]) + "'", 1);
  const std::size_t dim = header.size() - 1;
  if (lines.size() < 2) throw FormatError("no rows");

  std::vector<LabeledExample> examples;
  std::size_t max_label = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t lineno = li + 1;
    auto cells = split_commas(lines[li]);
    if (cells.size() != dim + 1)
      throw FormatError("expected " + std::to_string(dim + 1) + " columns, found " +
                            std::to_string(cells.size()),
                        lineno);
    std::size_t label = 0;
    {
      auto c = cells[0];
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), label);
      if (ec != std::errc() || p != c.data() + c.size() || c.empty())
        throw FormatError("unknown label '" + std::string(c) + "'", lineno);
    }
    Vector x(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < dim; ++j) {
      auto c = cells[j + 1];
      double v = 0.0;
      auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || p != c.data() + c.size() || c.empty())
        throw FormatError("malformed feature '" + std::string(c) + "'", lineno);
      if (!(v >= 0.0 && v <= 1.0))
        throw FormatError("feature f" + std::to_string(j) + " = " + std::string(c) +
                              " outside [0,1]",
                          lineno);
      x[static_cast<Eigen::Index>(j)] = v;
    }
    max_label = std::max(max_label, label);
    examples.push_back({std::move(x), label});
  }
  try {
    return Dataset(std::move(examples), max_label + 1);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

Dataset read_dataset(const std::filesystem::path& path) {
  try {
    return parse_dataset(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, format_dataset(ds));
}

SplitIndices read_split(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  SplitIndices s;
  auto get = [&](const char* key, std::vector<std::size_t>& dst) {
    if (!j.contains(key) || !j[key].is_array())
      throw FormatError(path.string() + ": missing array '" + key + "'");
    for (const auto& v : j[key]) {
      if (!v.is_number_unsigned())
        throw FormatError(path.string() + ": non-index entry in '" + key + "'");
      dst.push_back(v.get<std::size_t>());
    }
  };
  get("train", s.train);
  get("val", s.val);
  get("cal", s.cal);
  get("eval", s.eval);
  get("test", s.test);
  return s;
}

void write_split(const SplitIndices& split, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["cal"] = split.cal;
  j["eval"] = split.eval;
  j["test"] = split.test;
  write_file_atomic(path, j.dump(1) + "\n");
}

}  // namespace arcp
