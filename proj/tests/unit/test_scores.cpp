#include "doctest.h"

#include <cmath>

#include "arcp/errors.hpp"
#include "arcp/scores.hpp"
#include "test_util.hpp"

using namespace arcp;

namespace {

Vector probs3() {
  Vector p(3);
  p << 0.7, 0.2, 0.1;
  return p;
}

// Linear model with constant logits reproducing a given distribution.
Classifier constant_model(const Vector& p, std::size_t d = 2) {
  return testutil::linear(Matrix::Zero(p.size(), d), p.array().log().matrix());
}

ScoreSpec spec_of(ScoreKind kind, ScoreKind base = ScoreKind::APS, std::uint64_t seed = 1) {
  ScoreSpec s;
  s.kind = kind;
  s.base = base;
  s.seed = seed;
  return s;
}

struct Instance {
  Classifier model;
  Vector x;
};

Instance random_instance(Rng& rng) {
  const std::size_t C = 2 + testutil::uniform_index(rng, 5);
  const std::size_t d = 1 + testutil::uniform_index(rng, 5);
  const auto kind = rng() & 1 ? ClassifierKind::mlp1 : ClassifierKind::linear;
  return {Classifier::random(kind, C, d, 4, rng(), 4.0),
          testutil::uniform_vector(rng, static_cast<Eigen::Index>(d))};
}

}  // namespace

TEST_CASE("THR and APS hand-computed values") {
  const Vector t = thr_scores(probs3());
  CHECK(t[0] == -0.7);
  const Vector a = aps_scores(probs3());
  CHECK(a[0] == 0.7);
  CHECK(a[1] == 0.9);
  CHECK(a[2] == 1.0);
}

TEST_CASE("APS ties are broken by label index") {
  Vector p(3);
  p << 0.4, 0.2, 0.4;
  const Vector a = aps_scores(p);
  CHECK(a[0] == doctest::Approx(0.4));
  CHECK(a[2] == doctest::Approx(0.8));
  CHECK(a[1] == 1.0);
}

TEST_CASE("score dispatches through the model") {
  const auto m = constant_model(probs3());
  const Vector x = Vector::Constant(2, 0.5);
  CHECK(score(spec_of(ScoreKind::THR), m, x, 0) == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(score(spec_of(ScoreKind::APS), m, x, 1) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK_THROWS_AS(score(spec_of(ScoreKind::APS), m, x, 3), ParameterError);
  CHECK_THROWS_AS(score(spec_of(ScoreKind::APS), m, Vector::Zero(3), 0), DimensionError);
}

TEST_CASE("property: THR/APS ranges and monotonicity") {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const auto inst = random_instance(rng);
    const Vector p = probabilities(inst.model, inst.x);
    const Vector a = score_all_labels(spec_of(ScoreKind::APS), inst.model, inst.x);
    const Vector h = score_all_labels(spec_of(ScoreKind::THR), inst.model, inst.x);
    CHECK(h == thr_scores(p));
    CHECK((a.array() > 0.0).all());
    CHECK((a.array() <= 1.0).all());
    CHECK((h.array() >= -1.0).all());
    CHECK((h.array() < 0.0).all());
    Eigen::Index least = 0;
    p.minCoeff(&least);
    CHECK(a.maxCoeff() == 1.0);
    for (Eigen::Index u = 0; u < p.size(); ++u)
      for (Eigen::Index v = 0; v < p.size(); ++v)
        if (p[u] > p[v]) {
          CHECK(a[u] < a[v]);
          CHECK(h[u] < h[v]);
        }
  }
}

TEST_CASE("property: VRCP sandwich with the clean copy") {
  Rng rng(22);
  for (int t = 0; t < 200; ++t) {
    const auto inst = random_instance(rng);
    for (auto base : {ScoreKind::THR, ScoreKind::APS}) {
      const std::uint64_t seed = rng();
      const Vector lo = score_all_labels(spec_of(ScoreKind::VRCP_I, base, seed), inst.model, inst.x, t);
      const Vector mid = score_all_labels(spec_of(base), inst.model, inst.x);
      const Vector hi = score_all_labels(spec_of(ScoreKind::VRCP_C, base, seed), inst.model, inst.x, t);
      CHECK((lo.array() <= mid.array()).all());
      CHECK((mid.array() <= hi.array()).all());
    }
  }
}

TEST_CASE("property: VRCP bounds widen with more nested samples") {
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng);
    const std::uint64_t seed = rng();
    auto lo = spec_of(ScoreKind::VRCP_I, ScoreKind::APS, seed);
    auto hi = spec_of(ScoreKind::VRCP_C, ScoreKind::APS, seed);
    lo.include_clean_copy = hi.include_clean_copy = false;
    Vector prev_lo, prev_hi;
    for (std::size_t n : {1, 2, 5, 16, 40}) {
      lo.n_perturb = hi.n_perturb = n;
      const Vector l = score_all_labels(lo, inst.model, inst.x, 7);
      const Vector h = score_all_labels(hi, inst.model, inst.x, 7);
      CHECK((l.array() <= h.array()).all());
      if (prev_lo.size()) {
        CHECK((l.array() <= prev_lo.array()).all());
        CHECK((h.array() >= prev_hi.array()).all());
      }
      prev_lo = l;
      prev_hi = h;
    }
  }
}

TEST_CASE("property: RSCP with vanishing noise equals the base score") {
  Rng rng(24);
  for (int t = 0; t < 100; ++t) {
    const auto inst = random_instance(rng);
    for (auto base : {ScoreKind::THR, ScoreKind::APS}) {
      auto s = spec_of(ScoreKind::RSCP, base, rng());
      s.sigma = 1e-8;
      const Vector r = score_all_labels(s, inst.model, inst.x, t);
      const Vector b = score_all_labels(spec_of(base), inst.model, inst.x);
      CHECK((r - b).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("randomized scores are deterministic per (seed, instance)") {
  Rng rng(25);
  const auto inst = random_instance(rng);
  for (auto kind : {ScoreKind::RSCP, ScoreKind::VRCP_I, ScoreKind::VRCP_C}) {
    auto s = spec_of(kind, ScoreKind::APS, 5);
    s.sigma = 0.3;
    s.vrcp_epsilon = 0.3;
    const Vector a = score_all_labels(s, inst.model, inst.x, 3);
    CHECK(a == score_all_labels(s, inst.model, inst.x, 3));
    CHECK(score(s, inst.model, inst.x, 1, 3) == a[1]);
    CHECK_FALSE(a == score_all_labels(s, inst.model, inst.x, 4));
  }
}

TEST_CASE("score spec parsing and validation") {
  CHECK(parse_score_kind("aps") == ScoreKind::APS);
  CHECK(parse_score_kind("vrcp-i") == ScoreKind::VRCP_I);
  CHECK(parse_score_kind("VRCP_C") == ScoreKind::VRCP_C);
  CHECK_THROWS_AS(parse_score_kind("raps"), ParameterError);
  auto s = spec_of(ScoreKind::RSCP, ScoreKind::RSCP);
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = spec_of(ScoreKind::RSCP);
  s.n_noise = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = spec_of(ScoreKind::VRCP_I);
  s.n_perturb = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
}
