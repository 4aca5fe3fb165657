#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vidq/error.hpp"
#include "vidq/evalkit.hpp"

using namespace vidq;

TEST(Auc, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.4, 0.8};
  EXPECT_EQ(auc(s, std::vector<int>{0, 0, 1, 1}), 0.875);
  EXPECT_EQ(oracle::pairwise_auc(s, std::vector<int>{0, 0, 1, 1}), 0.875);
  EXPECT_EQ(auc(s, std::vector<int>{0, 0, 0, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{3, 2, 1}, std::vector<int>{0, 1, 1}), 0.0);
  EXPECT_EQ(auc(std::vector<double>{1, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}), 0.5);
}

TEST(Auc, SingleClassThrows) {
  const std::vector<double> s{0.2, 0.3};
  EXPECT_THROW(auc(s, std::vector<int>{1, 1}), InvalidArgument);
  EXPECT_THROW(auc(s, std::vector<int>{0, 0}), InvalidArgument);
  EXPECT_THROW(auc(s, std::vector<int>{0}), InvalidArgument);
}

TEST(Auc, EqualsPairwiseOracleExactly) {
  Rng rng(1);
  for (std::size_t n : {2, 3, 10, 57, 400, 2000}) {
    for (int t = 0; t < 5; ++t) {
      std::vector<double> s(n);
      std::vector<int> y(n);
      // Coarse rounding forces many ties.
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = std::round(rng.normal() * 4.0) / 4.0;
        y[i] = rng.uniform() < 0.3 ? 1 : 0;
      }
      y[0] = 1;
      y[1] = 0;
      EXPECT_EQ(auc(s, y), oracle::pairwise_auc(s, y)) << "n=" << n;
    }
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(200), u(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(rng.normal() * 8.0) / 8.0;
      u[i] = std::exp(3.0 * s[i]) - 7.0;
      y[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    EXPECT_EQ(auc(s, y), auc(u, y));
  }
}

TEST(QuantError, Examples) {
  const CodebookSet books(Matrix(1, 2, Vector{0, 0}), {Matrix(1, 1, Vector{0}), Matrix(1, 1, Vector{0})});
  EXPECT_EQ(quantization_error(std::vector<Vector>{{0, 0}}, books), 0.0);
  EXPECT_EQ(quantization_error(std::vector<Vector>{{2, 0}}, books), 4.0);
  EXPECT_EQ(quantization_error(std::vector<Vector>{{2, 0}, {0, 0}}, books), 2.0);
}

TEST(QuantError, ZeroIffRepresentableAndNonnegative) {
  Rng rng(3);
  const CodebookSet books(oracle::random_matrix(rng, 1, 4),
                          {oracle::random_matrix(rng, 3, 2), oracle::random_matrix(rng, 3, 2)});
  std::vector<Vector> exact;
  for (std::size_t a = 0; a < 3; ++a) exact.push_back(decode_visual_id({0, {a, 2 - a}}, books));
  EXPECT_NEAR(quantization_error(exact, books), 0.0, 1e-24);
  for (int t = 0; t < 20; ++t) {
    EXPECT_GT(quantization_error(std::vector<Vector>{oracle::random_vector(rng, 4)}, books), 0.0);
  }
}

TEST(QuantError, SupersetBookNeverWorse) {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix coarse = oracle::random_matrix(rng, 8, 8);
    std::vector<Matrix> big;
    std::vector<Matrix> small;
    for (int k = 0; k < 4; ++k) {
      big.push_back(oracle::random_matrix(rng, 256, 2));
      Matrix s(64, 2);
      for (std::size_t r = 0; r < 64; ++r) {
        for (std::size_t c = 0; c < 2; ++c) s(r, c) = big.back()(r, c);
      }
      small.push_back(s);
    }
    std::vector<Vector> xs;
    for (int i = 0; i < 100; ++i) xs.push_back(oracle::random_vector(rng, 8, 2.0));
    EXPECT_LE(quantization_error(xs, CodebookSet(coarse, big)), quantization_error(xs, CodebookSet(coarse, small)));
  }
}

TEST(Coherence, IdenticalFeatures) {
  const std::vector<Vector> f(5, Vector{1, 2, 3});
  const std::vector<VisualId> ids{{0, {1}}, {0, {1}}, {1, {0}}, {1, {0}}, {2, {2}}};
  const Coherence c = same_id_coherence(f, ids);
  EXPECT_NEAR(c.within, 1.0, 1e-12);
  EXPECT_NEAR(c.global, 1.0, 1e-12);
  EXPECT_EQ(c.within_pairs, 2u);
}

TEST(Coherence, OrthogonalClustersMatchEnumeration) {
  for (std::size_t m : {2, 3, 6}) {
    std::vector<Vector> f;
    std::vector<VisualId> ids;
    for (std::size_t i = 0; i < m; ++i) {
      f.push_back({1, 0});
      ids.push_back({0, {0}});
      f.push_back({0, 1});
      ids.push_back({1, {0}});
    }
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < f.size(); ++a) {
      for (std::size_t b = a + 1; b < f.size(); ++b) {
        sum += f[a][0] * f[b][0] + f[a][1] * f[b][1];
        ++pairs;
      }
    }
    const Coherence c = same_id_coherence(f, ids);
    EXPECT_NEAR(c.within, 1.0, 1e-12);
    EXPECT_NEAR(c.global, sum / static_cast<double>(pairs), 1e-12);
    EXPECT_NEAR(c.global, (m - 1.0) / (2.0 * m - 1.0), 1e-12);
  }
}

TEST(Coherence, NoSharedIdThrows) {
  const std::vector<Vector> f{{1, 0}, {0, 1}};
  const std::vector<VisualId> ids{{0, {0}}, {0, {1}}};
  EXPECT_THROW(same_id_coherence(f, ids), InvalidArgument);
}

namespace {

CtrModel small_model() {
  const std::vector<ClickRecord> train{{"u1", "old1", 1}, {"u2", "old1", 0}, {"u1", "old2", 0}};
  return init_ctr_model(train, CtrConfig{2, 2, 2, 3, 2, 0.5}, VisualTableShape{2, {2}}, 3);
}

}  // namespace

TEST(Cohort, CountsPartitionRecords) {
  const CtrModel m = small_model();
  const AdVisualMap map{{"old1", {0, {0}}}, {"old2", {1, {1}}}, {"new1", {1, {0}}}, {"new2", {0, {1}}}};
  const std::vector<ClickRecord> eval{{"u1", "old1", 1}, {"u2", "old2", 0}, {"u1", "new1", 1},
                                      {"u3", "new2", 0}, {"u2", "new1", 0}};
  const std::set<std::string> fresh = unseen_ads(std::vector<ClickRecord>{{"x", "old1", 1}, {"x", "old2", 0}}, eval);
  EXPECT_EQ(fresh, (std::set<std::string>{"new1", "new2"}));
  const EvalReport r = cohort_report(m, eval, map, fresh, 0.25);
  EXPECT_EQ(r.n_new, 3u);
  EXPECT_EQ(r.n_old, 2u);
  EXPECT_EQ(r.n_new + r.n_old, eval.size());
  ASSERT_TRUE(r.auc_new_ads.has_value());
  ASSERT_TRUE(r.auc_old_ads.has_value());
  EXPECT_EQ(r.mean_quant_error, 0.25);
  EXPECT_FALSE(r.baseline);

  std::vector<double> s;
  std::vector<int> y;
  for (const auto& e : eval) {
    s.push_back(predict_logit(m.params, resolve_example(e, m, map)));
    y.push_back(e.label);
  }
  EXPECT_EQ(r.auc, oracle::pairwise_auc(s, y));
}

TEST(Cohort, AllNewLeavesOldUndefined) {
  const CtrModel m = small_model();
  const AdVisualMap map{{"n1", {0, {0}}}, {"n2", {1, {1}}}};
  const std::vector<ClickRecord> eval{{"u1", "n1", 1}, {"u2", "n2", 0}};
  const EvalReport r = cohort_report(m, eval, map, {"n1", "n2"});
  EXPECT_EQ(r.n_old, 0u);
  EXPECT_FALSE(r.auc_old_ads.has_value());
  const auto kv = report_metrics(r);
  bool found = false;
  for (const auto& [k, v] : kv) {
    if (k == "auc_old_ads") {
      EXPECT_EQ(v, "undefined");
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Cohort, SingleClassCohortUndefined) {
  const CtrModel m = small_model();
  const AdVisualMap map{{"old1", {0, {0}}}, {"n1", {1, {1}}}};
  const std::vector<ClickRecord> eval{{"u1", "old1", 1}, {"u2", "old1", 0}, {"u1", "n1", 1}};
  const EvalReport r = cohort_report(m, eval, map, {"n1"});
  EXPECT_FALSE(r.auc_new_ads.has_value());
  EXPECT_TRUE(r.auc_old_ads.has_value());
}

TEST(Report, MetricOrderAndDelta) {
  EvalReport r;
  r.auc = 0.75;
  r.auc_new_ads = 0.5;
  r.n_new = 4;
  r.n_old = 6;
  r.baseline = true;
  const auto kv = report_metrics(r);
  std::vector<std::string> keys;
  for (const auto& [k, v] : kv) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"baseline", "auc", "auc_new_ads", "auc_old_ads", "n_new", "n_old",
                                            "n_total", "mean_quant_error"}));
  EXPECT_EQ(kv[0].second, "true");
  EXPECT_EQ(kv[1].second, "0.75");
  EXPECT_EQ(kv[6].second, "10");
  EXPECT_EQ(auc_delta_curve(std::vector<double>{0.7, 0.8}, std::vector<double>{0.6, 0.9}).size(), 2u);
  EXPECT_THROW(auc_delta_curve(std::vector<double>{0.7}, std::vector<double>{}), InvalidArgument);
}
