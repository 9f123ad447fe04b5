#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "resilinet/dataset.hpp"

using namespace resilinet;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path) << body;
  return path;
}

std::string message_of(const CsvSpec& spec) {
  try {
    read_csv(spec);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Synthetic, BalancedStratifiedSplit) {
  SyntheticSpec spec;
  const auto ds = generate_synthetic(spec);
  EXPECT_EQ(ds.train.size() + ds.val.size() + ds.test.size(), 12u * 200u);
  for (auto c : ds.train.class_counts()) EXPECT_EQ(c, 160u);
  for (auto c : ds.val.class_counts()) EXPECT_EQ(c, 20u);
  for (auto c : ds.test.class_counts()) EXPECT_EQ(c, 20u);
  EXPECT_EQ(ds.train.feature_count(), 23u);
}

TEST(Synthetic, SeedDeterminesData) {
  SyntheticSpec a;
  auto b = a;
  auto c = a;
  c.seed = 8;
  const auto da = generate_synthetic(a), db = generate_synthetic(b), dc = generate_synthetic(c);
  EXPECT_TRUE(da.train.features == db.train.features);
  EXPECT_EQ(da.train.labels, db.train.labels);
  EXPECT_FALSE(da.train.features == dc.train.features);
}

TEST(Synthetic, RejectsBadSpec) {
  SyntheticSpec s;
  s.classes = 1;
  s.samples_per_class = 0;
  try {
    generate_synthetic(s);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.violations().size(), 2u);
  }
  EXPECT_THROW(generate_synthetic({}, {0.5, 0.5, 0.5}), ValidationError);
}

TEST(Normalization, TrainStatisticsOnly) {
  SyntheticSpec spec;
  spec.samples_per_class = 50;
  auto ds = generate_synthetic(spec);
  const auto raw_test = ds.test.features;
  const auto nz = normalize_with_train_stats(ds);
  const Vector<double> mean = ds.train.features.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index c = 0; c < ds.train.features.cols(); ++c) {
    const double var = ds.train.features.col(c).array().square().mean();
    EXPECT_NEAR(var, 1.0, 1e-9);
    EXPECT_NEAR(ds.test.features(0, c), (raw_test(0, c) - nz.mean(c)) / nz.stddev(c), 1e-12);
  }
}

TEST(Csv, RoundTripAndLabelRemap) {
  const auto path = write_temp("rn_ok.csv", "a,label,b\n1,5,2\n3,9,4\n5,5,6\n7,-1,8\n");
  CsvSpec spec{path};
  const auto d = read_csv(spec);
  EXPECT_EQ(d.classes, 3u);
  EXPECT_EQ(d.labels, (std::vector<ClassLabel>{1, 2, 1, 0}));
  EXPECT_EQ(d.features(1, 0), 3.0);
  EXPECT_EQ(d.features(1, 1), 4.0);
  spec.drop_labels = {9};
  EXPECT_EQ(read_csv(spec).size(), 3u);

  std::ostringstream out;
  write_csv(d, out);
  const auto back_path = write_temp("rn_back.csv", out.str());
  const auto back = read_csv(CsvSpec{back_path});
  EXPECT_TRUE(back.features == d.features);
  EXPECT_EQ(back.labels, d.labels);
}

TEST(Csv, ReportsFieldAndRow) {
  EXPECT_NE(message_of(CsvSpec{"/nonexistent/x.csv"}).find("cannot open"), std::string::npos);
  const auto p1 = write_temp("rn_bad1.csv", "a,label\n1,0\nx,1\n");
  const auto m1 = message_of(CsvSpec{p1});
  EXPECT_NE(m1.find("row 3"), std::string::npos);
  EXPECT_NE(m1.find("column 'a'"), std::string::npos);
  const auto p2 = write_temp("rn_bad2.csv", "a,label\n1,0,3\n");
  EXPECT_NE(message_of(CsvSpec{p2}).find("row 2"), std::string::npos);
  const auto p3 = write_temp("rn_bad3.csv", "a,b\n1,0\n");
  EXPECT_NE(message_of(CsvSpec{p3}).find("label"), std::string::npos);
  const auto p4 = write_temp("rn_bad4.csv", "a,label\n1,0.5\n");
  EXPECT_NE(message_of(CsvSpec{p4}).find("not an integer"), std::string::npos);
}
