#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "arcp/dataio.hpp"
#include "arcp/model.hpp"
#include "arcp/rng.hpp"

namespace testutil {

using arcp::Matrix;
using arcp::Vector;

inline Vector uniform_vector(arcp::Rng& rng, Eigen::Index d, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = u(rng);
  return v;
}

inline std::size_t uniform_index(arcp::Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Linear model with the given weights and biases.
inline arcp::Classifier linear(const Matrix& w, const Vector& b) {
  arcp::ClassifierParams p;
  p.w1 = w;
  p.b1 = b;
  return arcp::Classifier(arcp::ClassifierKind::linear, p);
}

// Central finite difference of the loss along each input coordinate.
inline Vector fd_input_gradient(const arcp::Model& m, const Vector& x, std::size_t y, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (arcp::loss(m, xp, y) - arcp::loss(m, xm, y)) / (2 * h);
  }
  return g;
}

// ‖a − b‖ / max(‖a‖, ‖b‖, floor): relative error that stays meaningful near zero.
inline double rel_error(const Vector& a, const Vector& b, double floor = 1e-6) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

inline bool in_unit_box(const Vector& x) {
  return (x.array() >= 0.0).all() && (x.array() <= 1.0).all();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("arcp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
