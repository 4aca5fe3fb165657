#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vidq/error.hpp"
#include "vidq/numcore.hpp"

using namespace vidq;

TEST(Cosine, Examples) {
  const Vector a{1, 2, 3};
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_NEAR(cosine_similarity(Vector{1, 0}, Vector{1, 1}), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(Vector{0, 0}, Vector{1, 1}), InvalidArgument);
  EXPECT_THROW(cosine_similarity(Vector{1, 0}, Vector{1, 0, 0}), InvalidArgument);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const Vector x = oracle::random_vector(rng, 7);
    const Vector y = oracle::random_vector(rng, 7);
    const double alpha = std::exp(rng.normal(0.0, 2.0));
    Vector ax = x;
    for (double& v : ax) v *= alpha;
    const double s = cosine_similarity(x, y);
    EXPECT_NEAR(s, cosine_similarity(y, x), 1e-12);
    EXPECT_NEAR(s, cosine_similarity(ax, y), 1e-12);
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(Softmax, Examples) {
  EXPECT_EQ(stable_softmax(Vector{0, 0}), (Vector{0.5, 0.5}));
  EXPECT_EQ(stable_softmax(Vector{-123.5}), (Vector{1.0}));
  const Vector p = stable_softmax(Vector{1, 0});
  // e/(e+1) to 20 digits.
  EXPECT_NEAR(p[0], 0.73105857863000487925, 1e-15);
  EXPECT_NEAR(p[1], 0.26894142136999512075, 1e-15);
}

TEST(Softmax, Errors) {
  EXPECT_THROW(stable_softmax(Vector{}), InvalidArgument);
  EXPECT_THROW(stable_softmax(Vector{1.0, NAN}), InvalidArgument);
  EXPECT_THROW(stable_softmax(Vector{INFINITY}), InvalidArgument);
}

TEST(Softmax, SumsToOneIncludingExtremes) {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    Vector z = oracle::random_vector(rng, 1 + rng.uniform_index(20), 50.0);
    if (t % 3 == 0) z[rng.uniform_index(z.size())] = 1e4;
    if (t % 5 == 0) z[rng.uniform_index(z.size())] = -1e4;
    const Vector p = stable_softmax(z);
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Sgd, Examples) {
  const Vector a = sgd_step(Vector{1, 1}, Vector{1, -1}, 0.1);
  EXPECT_NEAR(a[0], 0.9, 1e-15);
  EXPECT_NEAR(a[1], 1.1, 1e-15);
  EXPECT_EQ(sgd_step(Vector{3, -2}, Vector{0, 0}, 7.0), (Vector{3, -2}));
  EXPECT_EQ(sgd_step(Vector{0.5}, Vector{2.0}, 0.25), (Vector{0.0}));
  EXPECT_EQ(sgd_step(Vector{0.3, 4}, Vector{5, 6}, 0.0), (Vector{0.3, 4}));
  EXPECT_THROW(sgd_step(Vector{1}, Vector{1, 2}, 0.1), InvalidArgument);
}

TEST(MatVec, AgainstLoops) {
  Rng rng(5);
  const Matrix w = oracle::random_matrix(rng, 3, 4);
  const Vector x = oracle::random_vector(rng, 4);
  const Vector y = oracle::random_vector(rng, 3);
  const Vector wx = matvec(w, x);
  const Vector wty = matvec_transposed(w, y);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += w(r, c) * x[c];
    EXPECT_NEAR(wx[r], s, 1e-14);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 3; ++r) s += w(r, c) * y[r];
    EXPECT_NEAR(wty[c], s, 1e-14);
  }
}

TEST(Finite, RequireFiniteNamesTensor) {
  const Vector ok{1, 2};
  EXPECT_NO_THROW(require_finite(ok, "w"));
  const Vector bad{1, NAN};
  try {
    require_finite(bad, "head weights");
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head weights"), std::string::npos);
  }
}

TEST(GradCheck, QuadraticIsExact) {
  const Vector p{0.3, -1.2, 2.5};
  const Vector g{0.6, -2.4, 5.0};
  const auto r = finite_diff_check(
      [](std::span<const double> q) {
        double s = 0;
        for (double v : q) s += v * v;
        return s;
      },
      p, g, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-7);
  EXPECT_EQ(r.num_params, 3u);
}

TEST(GradCheck, ConstantLoss) {
  const Vector p{1, 2};
  const Vector g{0, 0};
  const auto r = finite_diff_check([](std::span<const double>) { return 4.0; }, p, g, 1e-5);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsWrongGradientAndNonFinite) {
  const Vector p{1.0, 2.0};
  const Vector wrong{2.0, 0.0};
  const auto r = finite_diff_check([](std::span<const double> q) { return q[0] * q[0] + q[1] * q[1]; }, p,
                                   wrong, 1e-5);
  EXPECT_GT(r.max_rel_error, 0.5);
  EXPECT_EQ(r.worst_param_index, 1u);
  EXPECT_THROW(finite_diff_check([](std::span<const double>) { return NAN; }, p, wrong, 1e-5), NumericError);
}
