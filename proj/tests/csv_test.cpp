// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "nilm/csv.hpp"
#include "nilm/synth.hpp"

namespace {

using namespace nilm;
namespace fs = std::filesystem;

class CsvTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nilm_csv_" + std::string(::testing::UnitTest::GetInstance()
                                          ->current_test_info()
                                          ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string &name, const std::string &text) {
    const auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  std::string error_of(const fs::path &p) {
    try {
      read_csv(p);
    } catch (const ValidationError &e) {
      return e.what();
    }
    return "";
  }

  fs::path dir_;
};

TEST_F(CsvTest, ReadsWellFormedFile) {
  const auto p = write("home.csv", "timestamp,aggregate,ev,oven\n"
                                   "0,10.5,4,6.5\n60,3,1,2\n120,0,0,0\n");
  const auto s = read_csv(p);
  EXPECT_EQ(s.length(), 3u);
  EXPECT_EQ(s.household_id, "home");
  EXPECT_EQ(s.appliance_names(), (std::vector<std::string>{"ev", "oven"}));
  EXPECT_EQ(s.sample_interval, 60);
  for (std::size_t t = 0; t < 3; ++t)
    EXPECT_EQ(s.aggregate[t] - s.appliances[0].values[t] - s.appliances[1].values[t], 0.0);
}

TEST_F(CsvTest, TimestampRegressionNamesLine) {
  const auto p = write("h.csv", "timestamp,aggregate,ev\n0,1,1\n60,1,1\n30,1,1\n");
  EXPECT_NE(error_of(p).find(":4:"), std::string::npos) << error_of(p);
}

TEST_F(CsvTest, UnparsableNumberNamesLine) {
  const auto p = write("h.csv", "timestamp,aggregate,ev\n0,1,1\n60,abc,1\n");
  EXPECT_NE(error_of(p).find(":3:"), std::string::npos) << error_of(p);
}

TEST_F(CsvTest, MissingColumnNamesLine) {
  const auto p = write("h.csv", "timestamp,aggregate,ev,oven\n0,1,1,0\n60,1\n");
  EXPECT_NE(error_of(p).find(":3:"), std::string::npos) << error_of(p);
}

TEST_F(CsvTest, BadHeaderRejected) {
  EXPECT_THROW(read_csv(write("h.csv", "time,total,ev\n0,1,1\n")), ValidationError);
  EXPECT_THROW(read_csv(write("g.csv", "timestamp,aggregate\n0,1\n")), ValidationError);
}

TEST_F(CsvTest, MissingFileRejected) {
  EXPECT_THROW(read_csv(dir_ / "nope.csv"), ValidationError);
}

TEST_F(CsvTest, TwoApplianceTenStepLayout) {
  HouseholdSeries s;
  s.household_id = "h";
  s.appliances = {{"a", {}}, {"b", {}}};
  for (int t = 0; t < 10; ++t) {
    s.timestamps.push_back(t * 60);
    s.appliances[0].values.push_back(t);
    s.appliances[1].values.push_back(2 * t);
    s.aggregate.push_back(3 * t);
  }
  const auto p = dir_ / "h.csv";
  write_csv(s, p);
  std::ifstream in(p);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
  }
  EXPECT_EQ(lines, 11u);
}

TEST_F(CsvTest, GeneratedSeriesRoundTrips) {
  SynthConfig c;
  c.profiles = {{"ev", 3312.123456789, 311.7, 30, 5.0, 2},
                {"fridge", 97.31, 9.0, 10, 30.0, 0}};
  c.noise_sigma = 27.5;
  c.seed = 11;
  const auto s = generate(c);
  const auto p = dir_ / "gen.csv";
  write_csv(s, p);
  const auto r = read_csv(p);
  ASSERT_EQ(r.length(), s.length());
  EXPECT_EQ(r.timestamps, s.timestamps);
  for (std::size_t t = 0; t < s.length(); ++t) {
    ASSERT_NEAR(r.aggregate[t], s.aggregate[t], 1e-6);
    for (std::size_t j = 0; j < 2; ++j)
      ASSERT_NEAR(r.appliances[j].values[t], s.appliances[j].values[t], 1e-6);
  }
}

TEST_F(CsvTest, EmptyApplianceSetRejectedOnWrite) {
  HouseholdSeries s;
  s.household_id = "h";
  s.timestamps = {0, 60};
  s.aggregate = {1.0, 2.0};
  EXPECT_THROW(write_csv(s, dir_ / "h.csv"), ValidationError);
}

TEST_F(CsvTest, ToleratesCrlfAndBlankLines) {
  const auto p = write("h.csv", "timestamp,aggregate,ev\r\n0,1,1\r\n\r\n60,2,2\r\n");
  EXPECT_EQ(read_csv(p).length(), 2u);
}

} // namespace
