#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "support.hpp"
#include "torclass/cfs.hpp"
#include "torclass/error.hpp"
#include "torclass/dataset.hpp"
#include "torclass/flow_meter.hpp"

using namespace torclass;
using namespace torclass::data;

namespace {

Dataset balanced(std::size_t per_class, std::size_t width = 2) {
  std::vector<std::string> schema;
  for (std::size_t j = 0; j < width; ++j) schema.push_back("f" + std::to_string(j));
  Dataset ds(schema, default_class_names());
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    std::vector<double> x(width, static_cast<double>(i));
    ds.add(x, static_cast<int>(i % 2));
  }
  return ds;
}

std::string flow_csv(const std::vector<std::string>& labels, std::size_t columns = 29) {
  std::ostringstream s;
  torclass::flow::write_flow_csv_header(s);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    for (std::size_t j = 0; j + 1 < columns; ++j) s << (j == 0 ? "10.0.0." + std::to_string(r + 1) : std::to_string(r + j)) << ',';
    s << labels[r] << '\n';
  }
  return s.str();
}

std::string load_error(const std::string& text) {
  std::istringstream in(text);
  try {
    load_flow_csv(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadFlowCsv, LoadsAndFoldsLabelCase) {
  std::istringstream in(flow_csv({"Tor", "nonTor", "TOR", "NONTOR"}));
  const auto ds = load_flow_csv(in);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.width(), 28u);
  EXPECT_EQ(ds.num_classes(), 2u);
  EXPECT_EQ(ds.labels(), (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(ds.at(0, 0), 0x0A000001);  // dotted quad converted
  EXPECT_EQ(ds.at(1, 1), 2.0);
}

TEST(LoadFlowCsv, SchemaErrors) {
  auto short_row = flow_csv({"Tor", "Tor"});
  const auto second = short_row.find('\n', short_row.find('\n') + 1) + 1;
  short_row = short_row.substr(0, second) + flow_csv({"Tor"}, 28).substr(flow_csv({"Tor"}, 28).find('\n') + 1);
  EXPECT_NE(load_error(short_row).find("expected 29 columns at row 3"), std::string::npos) << load_error(short_row);
  EXPECT_NE(load_error(flow_csv({"Tor", "maybe"})).find("unknown label"), std::string::npos);
  EXPECT_NE(load_error(flow_csv({"Tor", "Unlabeled"})).find("unlabeled"), std::string::npos);
  EXPECT_NE(load_error("a,b\n1,2\n").find("label"), std::string::npos);
  EXPECT_NE(load_error("a,label\nx,Tor\n").find("non-numeric"), std::string::npos);
}

TEST(LoadFlowCsv, AcceptsPublishedColumnSpellings) {
  EXPECT_EQ(canonical_column_name(" Source IP"), "src_ip");
  EXPECT_EQ(canonical_column_name(" Destination Port"), "dst_port");
  EXPECT_EQ(canonical_column_name("Flow Bytes/s"), "flow_bytes_per_s");
  EXPECT_EQ(canonical_column_name(" Flow Packets/s"), "flow_packets_per_s");
  EXPECT_EQ(canonical_column_name(" Flow IAT Mean"), "flow_iat_mean");
  EXPECT_EQ(canonical_column_name("Fwd IAT Mean"), "fwd_iat_mean");
  EXPECT_EQ(canonical_column_name(" Bwd IAT Min"), "bwd_iat_min");
  EXPECT_EQ(canonical_column_name("Active Mean"), "active_mean");
  EXPECT_EQ(canonical_column_name(" Idle Max"), "idle_max");
  EXPECT_EQ(canonical_column_name(" Flow Duration"), "flow_duration");
  EXPECT_EQ(canonical_column_name("label"), "label");
  EXPECT_EQ(canonical_column_name("Label"), "label");
}

TEST(StratifiedSplit, SeventyFifteenFifteen) {
  const auto ds = balanced(50);
  const auto s = stratified_split(ds, {});
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.validation.size(), 15u);
  EXPECT_EQ(s.test.size(), 15u);
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    std::size_t tor = 0;
    for (auto i : *part) tor += ds.label(i) == 1;
    const std::size_t nontor = part->size() - tor;
    if (part == &s.train) {
      EXPECT_EQ(tor, 35u);
      EXPECT_EQ(nontor, 35u);
    } else {
      EXPECT_TRUE((tor == 7 && nontor == 8) || (tor == 8 && nontor == 7));
    }
  }
}

TEST(StratifiedSplit, DeterministicPerSeedAndSeedSensitive) {
  const auto ds = balanced(50);
  const auto a = stratified_split(ds, {0.7, 0.15, 0.15, 1});
  const auto b = stratified_split(ds, {0.7, 0.15, 0.15, 1});
  const auto c = stratified_split(ds, {0.7, 0.15, 0.15, 2});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
  EXPECT_EQ(a.train.size(), c.train.size());
  EXPECT_EQ(a.test.size(), c.test.size());
}

TEST(StratifiedSplit, PartitionAndStratificationProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n0 = 3 + rng.uniform_index(60);
    const std::size_t n1 = 3 + rng.uniform_index(60);
    Dataset ds({"x"}, default_class_names());
    std::vector<int> labels(n0, 0);
    labels.insert(labels.end(), n1, 1);
    rng.shuffle(std::span<int>(labels));
    for (auto l : labels) ds.add(std::vector<double>{1.0}, l);
    const SplitSpec spec{0.7, 0.15, 0.15, static_cast<std::uint64_t>(trial)};
    const auto s = stratified_split(ds, spec);
    std::vector<std::size_t> all;
    for (const auto* p : {&s.train, &s.validation, &s.test}) all.insert(all.end(), p->begin(), p->end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
    const double ratios[] = {0.7, 0.15, 0.15};
    const std::vector<std::size_t>* parts[] = {&s.train, &s.validation, &s.test};
    for (int c = 0; c < 2; ++c) {
      const double n = c == 0 ? static_cast<double>(n0) : static_cast<double>(n1);
      for (int p = 0; p < 3; ++p) {
        double count = 0;
        for (auto i : *parts[p]) count += ds.label(i) == c;
        EXPECT_GE(count, 1.0);
        if (n == 3) {
          // One per split is the only allocation giving every split both classes.
          EXPECT_EQ(count, 1.0);
        } else {
          EXPECT_LE(std::fabs(count - n * ratios[p]), 1.0 + 1e-9) << "n=" << n << " part " << p;
        }
      }
    }
  }
}

TEST(StratifiedSplit, Errors) {
  Dataset ds({"x"}, default_class_names());
  for (int i = 0; i < 10; ++i) ds.add(std::vector<double>{1.0}, i < 8 ? 0 : 1);
  EXPECT_THROW(stratified_split(ds, {}), DataError);
  EXPECT_THROW(stratified_split(balanced(5), {0.7, 0.2, 0.2, 1}), UsageError);
  EXPECT_THROW(stratified_split(balanced(5), {1.0, 0.0, 0.0, 1}), UsageError);
}

TEST(KFold, SizesAndPartition) {
  const auto folds = kfold_indices(balanced(50), 10, 3);
  ASSERT_EQ(folds.size(), 10u);
  std::set<std::size_t> seen;
  const auto ds = balanced(50);
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 10u);
    std::size_t tor = 0;
    for (auto i : f) {
      EXPECT_TRUE(seen.insert(i).second);
      tor += ds.label(i) == 1;
    }
    EXPECT_EQ(tor, 5u);
  }
  EXPECT_EQ(seen.size(), 100u);
  const auto two = kfold_indices(balanced(5), 2, 1);
  EXPECT_EQ(two[0].size(), 5u);
  EXPECT_EQ(two[1].size(), 5u);
  EXPECT_THROW(kfold_indices(balanced(5), 6, 1), DataError);
  EXPECT_THROW(kfold_indices(balanced(5), 1, 1), UsageError);
}

TEST(Scaler, ZScoreAndConstantPassThrough) {
  Dataset ds({"a", "b"}, default_class_names());
  ds.add(std::vector<double>{1, 5}, 0);
  ds.add(std::vector<double>{2, 5}, 1);
  ds.add(std::vector<double>{3, 5}, 0);
  const auto sc = fit_scaler(ds);
  const auto z = apply_scaler(sc, ds);
  EXPECT_NEAR(z.at(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(z.at(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(z.at(2, 0), 1.224744871391589, 1e-12);
  EXPECT_TRUE(sc.constant[1]);
  EXPECT_FALSE(sc.constant[0]);
  EXPECT_EQ(z.at(0, 1), 5.0);
  EXPECT_EQ(sc.apply(std::vector<double>{2, 5})[0], 0.0);
}

TEST(Scaler, TrainingMomentsAndRoundTrip) {
  Rng rng(17);
  Dataset ds({"a", "b", "c"}, default_class_names());
  for (int i = 0; i < 200; ++i) {
    ds.add(std::vector<double>{rng.normal() * 1e4 + 3, rng.uniform(-5, 5), rng.normal() * 1e-3}, i % 2);
  }
  const auto sc = fit_scaler(ds);
  const auto z = apply_scaler(sc, ds);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto col = z.column(j);
    double m = 0, v = 0;
    for (double x : col) m += x;
    m /= static_cast<double>(col.size());
    for (double x : col) v += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(v / static_cast<double>(col.size())), 1.0, 1e-9);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto back = sc.unapply(sc.apply(ds.row(i)));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(back[j], ds.at(i, j), 1e-12 * std::max(1.0, std::fabs(ds.at(i, j))));
  }
}

TEST(Synthetic, SeparableTwoClusterMeetsLinearScan) {
  SynthSpec spec;
  spec.classes = {{100, {0, 0}, {1, 0, 0, 1}}, {100, {4, 4}, {1, 0, 0, 1}}};
  const auto data = generate_synthetic(spec, 3);
  ASSERT_EQ(data.dataset.size(), 200u);
  // Brute-force scan over directions and thresholds of a linear separator.
  double best = 0;
  for (int a = 0; a < 180; ++a) {
    const double th = a * M_PI / 180;
    std::vector<std::pair<double, int>> proj;
    for (std::size_t i = 0; i < 200; ++i) {
      proj.emplace_back(std::cos(th) * data.dataset.at(i, 0) + std::sin(th) * data.dataset.at(i, 1), data.dataset.label(i));
    }
    std::sort(proj.begin(), proj.end());
    int ones_left = 0;
    int zeros_left = 0;
    for (std::size_t cut = 0; cut <= proj.size(); ++cut) {
      const int correct_a = zeros_left + (100 - ones_left);
      best = std::max(best, std::max(correct_a, 200 - correct_a) / 200.0);
      if (cut < proj.size()) (proj[cut].second ? ones_left : zeros_left)++;
    }
  }
  EXPECT_GE(best, 0.99);
}

TEST(Synthetic, RolesCopiesAndNoise) {
  SynthSpec spec;
  spec.classes = {{250, {0, 0}, {1, 0, 0, 1}}, {250, {1, 2}, {1, 0, 0, 1}}};
  spec.duplicates = {{0, 0.0}, {1, 0.1}};
  spec.noise_features = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = generate_synthetic(spec, seed);
    const auto& ds = data.dataset;
    ASSERT_EQ(ds.width(), 7u);
    EXPECT_EQ(data.roles[0], FeatureRole::Informative);
    EXPECT_EQ(data.roles[2], FeatureRole::Duplicate);
    EXPECT_EQ(data.roles[6], FeatureRole::Noise);
    EXPECT_EQ(data.duplicate_of[2], 0u);
    EXPECT_EQ(data.duplicate_of[3], 1u);
    EXPECT_EQ(ds.column(0), ds.column(2));
    EXPECT_DOUBLE_EQ(cfs::correlation(ds.column(0), ds.column(2)), 1.0);
    std::vector<double> y(ds.labels().begin(), ds.labels().end());
    for (std::size_t j = 4; j < 7; ++j) EXPECT_LT(std::fabs(cfs::correlation(ds.column(j), y)), 0.2);
  }
}

TEST(Synthetic, DeterministicAndRejectsIndefiniteCovariance) {
  std::istringstream text(default_synth_spec_text());
  const auto spec = SynthSpec::from_config(KvConfig::parse(text));
  auto render = [&](std::uint64_t seed) {
    std::ostringstream out;
    write_dataset_csv(out, generate_synthetic(spec, seed).dataset);
    return out.str();
  };
  EXPECT_EQ(render(4), render(4));
  EXPECT_NE(render(4), render(5));

  SynthSpec bad;
  bad.classes = {{10, {0, 0}, {1, 2, 2, 1}}};
  EXPECT_THROW(generate_synthetic(bad, 1), DataError);
  // Positive semidefinite but singular is fine.
  SynthSpec singular;
  singular.classes = {{10, {0, 0}, {1, 1, 1, 1}}};
  const auto d = generate_synthetic(singular, 1).dataset;
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d.at(i, 0), d.at(i, 1), 1e-9);
}

TEST(Synthetic, BundledSpecFileMatchesBuiltIn) {
  const auto file = testing_support::read_file(std::string(TORCLASS_SPEC_DIR) + "/two_cluster.ini");
  EXPECT_EQ(file, default_synth_spec_text());
  std::istringstream text(file);
  const auto spec = SynthSpec::from_config(KvConfig::parse(text));
  const auto data = generate_synthetic(spec, 1);
  EXPECT_EQ(data.dataset.size(), 1000u);
  EXPECT_EQ(data.dataset.class_counts(), (std::vector<std::size_t>{500, 500}));
  EXPECT_EQ(data.dataset.width(), 28u);
  EXPECT_EQ(data.dataset.schema()[27], "idle_min");
}

TEST(DatasetCsv, RoundTripsExactly) {
  std::istringstream text(default_synth_spec_text());
  const auto ds = generate_synthetic(SynthSpec::from_config(KvConfig::parse(text)), 2).dataset;
  std::stringstream buf;
  write_dataset_csv(buf, ds);
  const auto back = load_flow_csv(buf);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.labels(), ds.labels());
  EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), ds.values().begin()));
}

TEST(DatasetApi, ColumnIndicesReportsMissingAndExtra) {
  const auto ds = balanced(2, 3);
  const std::vector<std::string> want{"f2", "f0"};
  EXPECT_EQ(ds.column_indices(want), (std::vector<std::size_t>{2, 0}));
  const std::vector<std::string> missing{"f0", "zz"};
  try {
    ds.column_indices(missing);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
  EXPECT_THROW(Dataset({"a"}, default_class_names()).add(std::vector<double>{NAN}, 0), DataError);
  EXPECT_THROW(Dataset({"a"}, default_class_names()).add(std::vector<double>{1.0}, 2), DataError);
}
