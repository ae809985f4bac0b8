#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles/merit_oracle.hpp"
#include "support.hpp"
#include "torclass/cfs.hpp"
#include "torclass/error.hpp"
#include "torclass/random.hpp"

using namespace torclass;
using namespace torclass::cfs;

namespace {

CorrelationStats make_stats(std::vector<double> rcf, double rff_off) {
  CorrelationStats s;
  s.num_features = rcf.size();
  s.feature_class = std::move(rcf);
  s.feature_feature.assign(s.num_features * s.num_features, rff_off);
  for (std::size_t i = 0; i < s.num_features; ++i) {
    s.feature_feature[i * s.num_features + i] = 1.0;
    s.names.push_back("f" + std::to_string(i));
  }
  return s;
}

std::vector<std::vector<double>> matrix(const CorrelationStats& s) {
  std::vector<std::vector<double>> m(s.num_features, std::vector<double>(s.num_features));
  for (std::size_t i = 0; i < s.num_features; ++i) {
    for (std::size_t j = 0; j < s.num_features; ++j) m[i][j] = s.ff(i, j);
  }
  return m;
}

}  // namespace

TEST(Correlation, Examples) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_DOUBLE_EQ(correlation(x, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(correlation(x, std::vector<double>{3, 2, 1}), -1.0);
  EXPECT_EQ(correlation(x, std::vector<double>{5, 5, 5}), 0.0);
  EXPECT_THROW(correlation(x, std::vector<double>{1, 2}), DataError);
}

TEST(BuildStats, ShapeDuplicatesAndLabelCopy) {
  data::Dataset ds({"a", "a_copy", "y", "noise"}, data::default_class_names());
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.normal();
    ds.add(std::vector<double>{a, a, static_cast<double>(i % 2), rng.normal()}, i % 2);
  }
  const auto s = build_stats(ds);
  ASSERT_EQ(s.num_features, 4u);
  EXPECT_DOUBLE_EQ(s.ff(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(s.feature_class[2], 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.ff(i, i), 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(s.ff(i, j), s.ff(j, i));
      EXPECT_GE(s.ff(i, j), 0.0);
      EXPECT_LE(s.ff(i, j), 1.0);
    }
  }
}

TEST(Merit, ClosedForms) {
  const auto single = make_stats({0.8}, 0.0);
  const std::vector<std::size_t> s0{0};
  EXPECT_DOUBLE_EQ(merit(s0, single), 0.8);
  const std::vector<std::size_t> both{0, 1};
  EXPECT_NEAR(merit(both, make_stats({0.8, 0.8}, 1.0)), 0.8, 1e-15);
  EXPECT_NEAR(merit(both, make_stats({0.8, 0.8}, 0.0)), 1.6 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(merit(std::vector<std::size_t>{}, single), UsageError);
}

TEST(Merit, PerfectDuplicatesNeverGain) {
  for (std::size_t k = 2; k <= 8; ++k) {
    const auto s = make_stats(std::vector<double>(k, 0.37), 1.0);
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    EXPECT_NEAR(merit(idx, s), 0.37, 1e-15);
  }
}

TEST(Merit, MatchesDirectEvaluation) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const auto s = build_stats(testing_support::random_dataset(rng, 3 + rng.uniform_index(10), 60));
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < s.num_features; ++i) {
      if (rng.uniform01() < 0.5) subset.push_back(i);
    }
    if (subset.empty()) subset.push_back(rng.uniform_index(s.num_features));
    EXPECT_NEAR(merit(subset, s), oracle::cfs_merit(subset, s.feature_class, matrix(s)), 1e-12);
  }
}

TEST(Merit, InvariantUnderAffineRescaling) {
  Rng rng(3);
  const auto ds = testing_support::random_dataset(rng, 6);
  data::Dataset scaled(ds.schema(), ds.class_names());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<double> x(ds.row(i).begin(), ds.row(i).end());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (j % 2 ? -3.5 : 1e3) * x[j] + 17.0 * static_cast<double>(j);
    scaled.add(x, ds.label(i));
  }
  const auto a = build_stats(ds);
  const auto b = build_stats(scaled);
  const std::vector<std::size_t> subset{0, 2, 3, 5};
  EXPECT_NEAR(merit(subset, a), merit(subset, b), 1e-12);
}

TEST(BestFirst, DominantFeatureAndDegenerateCases) {
  const auto s = make_stats({0.1, 0.1, 0.9, 0.1}, 0.0);
  const auto r = best_first_search(s);
  EXPECT_NE(std::find(r.indices.begin(), r.indices.end(), 2u), r.indices.end());
  EXPECT_EQ(r.addition_order.front(), 2u);
  EXPECT_NEAR(r.merit, exhaustive_search(s).merit, 1e-15);

  const auto noise = make_stats({0, 0, 0}, 0.0);
  const auto z = best_first_search(noise);
  EXPECT_EQ(z.indices, std::vector<std::size_t>{0});
  EXPECT_EQ(z.merit, 0.0);
}

TEST(BestFirst, RespectsMaxSubsetSize) {
  const auto s = make_stats({0.5, 0.5, 0.5, 0.5, 0.5}, 0.0);
  SearchConfig cfg;
  cfg.max_subset_size = 2;
  EXPECT_EQ(best_first_search(s, cfg).indices.size(), 2u);
  EXPECT_EQ(best_first_search(s).indices.size(), 5u);
}

TEST(BestFirst, AgreesWithExhaustiveAndNeverExceedsIt) {
  Rng rng(4);
  int matches = 0;
  for (int t = 0; t < 100; ++t) {
    const auto s = build_stats(testing_support::random_dataset(rng, 4 + rng.uniform_index(9)));
    const auto bf = best_first_search(s);
    const auto ex = exhaustive_search(s);
    EXPECT_LE(bf.merit, ex.merit + 1e-12);
    for (std::size_t i = 0; i < s.num_features; ++i) EXPECT_GE(bf.merit, s.feature_class[i] - 1e-12);
    matches += std::fabs(bf.merit - ex.merit) <= 1e-12;
  }
  EXPECT_GE(matches, 95);
}

TEST(Exhaustive, HandEnumerationAndTieBreak) {
  // Features 0 and 1 are complementary; 2 is redundant with 0.
  CorrelationStats s = make_stats({0.6, 0.5, 0.55}, 0.0);
  s.feature_feature[0 * 3 + 2] = s.feature_feature[2 * 3 + 0] = 0.9;
  s.feature_feature[1 * 3 + 2] = s.feature_feature[2 * 3 + 1] = 0.2;
  const auto m = matrix(s);
  const std::vector<std::vector<std::size_t>> all{{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}};
  std::vector<std::size_t> best;
  double best_merit = -1;
  for (const auto& sub : all) {
    const double v = oracle::cfs_merit(sub, s.feature_class, m);
    if (v > best_merit) {
      best_merit = v;
      best = sub;
    }
  }
  const auto ex = exhaustive_search(s);
  EXPECT_EQ(ex.indices, best);
  EXPECT_NEAR(ex.merit, best_merit, 1e-15);

  EXPECT_EQ(exhaustive_search(make_stats({0.3}, 0.0)).indices, std::vector<std::size_t>{0});
  // Two tied optima: {0} and {1} have equal merit, {0,1} is a perfect duplicate pair.
  EXPECT_EQ(exhaustive_search(make_stats({0.4, 0.4}, 1.0)).indices, std::vector<std::size_t>{0});
  EXPECT_THROW(exhaustive_search(make_stats(std::vector<double>(21, 0.1), 0.0)), UsageError);
}

TEST(Exhaustive, MatchesPlainEnumeration) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto s = build_stats(testing_support::random_dataset(rng, 3 + rng.uniform_index(8), 80));
    EXPECT_NEAR(exhaustive_search(s).merit, oracle::best_merit(s.num_features, s.feature_class, matrix(s)), 1e-12);
  }
}

TEST(RedundantFixture, NoDuplicatePairCoSelected) {
  // Twelve columns: six informative, four copies (two exact, two noisy), two noise.
  std::istringstream text(R"([synth]
classes = 2
count.0 = 300
count.1 = 300
mean.0 = 0, 0, 0, 0, 0, 0
mean.1 = 0.7, 0.7, 0.7, 0.7, 0.7, 0.7
covariance.0 = equicorr:-0.1225
covariance.1 = equicorr:-0.1225
duplicates = 0:0, 1:0, 2:0.05, 3:0.1
noise_features = 2
)");
  const auto spec = data::SynthSpec::from_config(KvConfig::parse(text));
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto synth = data::generate_synthetic(spec, seed);
    const auto stats = build_stats(synth.dataset);
    for (const auto& result : {best_first_search(stats), exhaustive_search(stats)}) {
      for (auto i : result.indices) {
        if (synth.roles[i] != data::FeatureRole::Duplicate) continue;
        EXPECT_EQ(std::find(result.indices.begin(), result.indices.end(), synth.duplicate_of[i]), result.indices.end())
            << "seed " << seed << ": column " << i << " selected with its source";
      }
    }
  }
}

TEST(SelectionReport, ListsMeritPathAndMatrix) {
  const auto s = make_stats({0.2, 0.9, 0.5}, 0.1);
  const auto r = best_first_search(s);
  std::ostringstream out;
  write_selection_report(out, r, s);
  const auto text = out.str();
  EXPECT_NE(text.find("1,f1,"), std::string::npos);
  EXPECT_NE(text.find("feature,f0,f1,f2"), std::string::npos);
}
