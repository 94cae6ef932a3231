#include "saver/dataset.hpp"

#include "saver/textfile.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <sstream>

using namespace saver;

namespace {

Feeder two_load_chain() {
  // MVA 2, buses 1 and 2 with power factor ratios 0.5 and 0
  std::istringstream in(R"(
[bases]
kV = 12
MVA = 2
[limits]
v0 = 1.0
v_mag_lower = 0.95
v_mag_upper = 1.05
[buses]
id name controllable q_min q_max p_load q_load
0 h 0 0 0 0 0
1 a 1 -1 1 0.6 0.3
2 b 1 -1 1 0.4 0
[lines]
from to r x
0 1 0.01 0.01
1 2 0.01 0.01
)");
  return parse_feeder(in, "chain");
}

LoadDataset ingest(const std::string& text, const Feeder& f, IngestOptions o = {}) {
  std::istringstream in(text);
  return ingest_profiles(in, f, o, "profile.csv");
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Ingest, SplitsDemandByNominalLoad) {
  const Feeder f = two_load_chain();
  IngestOptions o;
  o.step_minutes = 5;
  const auto d = ingest("timestamp,load_mw\n0,1.0\n5,2.0\n", f, o);
  ASSERT_EQ(d.episodes.size(), 1u);
  const auto& ep = d.episodes[0];
  ASSERT_EQ(ep.steps(), 2);
  // 1 MW on a 2 MVA base split 0.6 / 0.4
  EXPECT_NEAR(ep.p(0, 0), -0.3, 1e-15);
  EXPECT_NEAR(ep.p(0, 1), -0.2, 1e-15);
  EXPECT_NEAR(ep.q(0, 0), -0.15, 1e-15);
  EXPECT_EQ(ep.q(0, 1), 0.0);
  EXPECT_NEAR(ep.p(1, 0), -0.6, 1e-15);
  EXPECT_EQ(ep.label, "test");
}

TEST(Ingest, SumsDemandColumnsAndAddsPv) {
  const Feeder f = two_load_chain();
  IngestOptions o;
  o.load_weights = Eigen::Vector2d(0.5, 0.5);
  o.pv_weights = Eigen::Vector2d(0.0, 1.0);
  const auto d = ingest("timestamp,res,com,pv_mw\n0,0.5,0.5,0.4\n5,0.5,0.5,0.0\n", f, o);
  EXPECT_NEAR(d.episodes[0].p(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(d.episodes[0].p(0, 1), -0.25 + 0.2, 1e-15);
  EXPECT_NEAR(d.episodes[0].p(1, 1), -0.25, 1e-15);
}

TEST(Ingest, IsoTimestamps) {
  const Feeder f = two_load_chain();
  const auto d = ingest("timestamp,load\n2020-01-31 23:55,1\n2020-02-01 00:00,1\n2020-02-01T00:05:00,1\n", f);
  EXPECT_EQ(d.episodes[0].steps(), 3);
}

TEST(Ingest, GapIsReported) {
  const Feeder f = two_load_chain();
  const auto msg = message_of([&] { ingest("timestamp,load\n0,1\n5,1\n15,1\n", f); });
  EXPECT_NE(msg.find("missing interval between '5' and '15'"), std::string::npos) << msg;
}

TEST(Ingest, NonIncreasingTimestamps) {
  const Feeder f = two_load_chain();
  EXPECT_THROW(ingest("timestamp,load\n0,1\n5,1\n5,1\n", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n0,1\n5,1\n3,1\n", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n0,1\n5,1\n12,1\n", f), ParseError);
}

TEST(Ingest, MalformedInput) {
  const Feeder f = two_load_chain();
  EXPECT_THROW(ingest("", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n", f), ParseError);
  EXPECT_THROW(ingest("time,load\n0,1\n", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n0,abc\n", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n0,1,2\n", f), ParseError);
  EXPECT_THROW(ingest("timestamp,load\n2020-13-01 00:00,1\n", f), ParseError);
  IngestOptions o;
  o.load_weights = Eigen::Vector2d(0.5, 0.6);
  EXPECT_THROW(ingest("timestamp,load\n0,1\n", f, o), std::invalid_argument);
}

TEST(Ingest, ResamplesUpAndDown) {
  const Feeder f = two_load_chain();
  IngestOptions o;
  o.step_minutes = 10;
  const auto coarse = ingest("timestamp,load\n0,1\n5,3\n10,2\n15,4\n", f, o);
  ASSERT_EQ(coarse.episodes[0].steps(), 2);
  EXPECT_NEAR(coarse.episodes[0].p(0, 0), -0.3 * 2.0, 1e-15);
  EXPECT_NEAR(coarse.episodes[0].p(1, 0), -0.3 * 3.0, 1e-15);

  o.step_minutes = 2.5;
  const auto fine = ingest("timestamp,load\n0,1\n5,3\n", f, o);
  ASSERT_EQ(fine.episodes[0].steps(), 3);
  EXPECT_NEAR(fine.episodes[0].p(1, 0), -0.3 * 2.0, 1e-15);

  o.step_minutes = 7;
  EXPECT_THROW(ingest("timestamp,load\n0,1\n5,3\n", f, o), ParseError);
}

TEST(Ingest, SplitsIntoDays) {
  const Feeder f = two_load_chain();
  IngestOptions o;
  o.step_minutes = 60;
  std::string text = "timestamp,load\n";
  for (int h = 0; h < 50; ++h) text += std::to_string(h * 60) + ",1\n";
  const auto d = ingest(text, f, o);
  ASSERT_EQ(d.episodes.size(), 3u);
  EXPECT_EQ(d.episodes[0].steps(), 24);
  EXPECT_EQ(d.episodes[2].steps(), 2);
}

TEST(Synthetic, ShapeAndDeterminism) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  SyntheticOptions o;
  o.days = 20;
  const auto a = synthesize_profiles(f, o);
  const auto b = synthesize_profiles(f, o);
  ASSERT_EQ(a.episodes.size(), 20u);
  EXPECT_EQ(a.num_nodes, 12);
  EXPECT_EQ(a.episodes[0].steps(), 288);
  for (std::size_t k = 0; k < a.episodes.size(); ++k) {
    EXPECT_TRUE(a.episodes[k].p == b.episodes[k].p);
    EXPECT_TRUE((a.episodes[k].p.array() <= 0.0).all());
  }
  o.seed = 2;
  EXPECT_FALSE(synthesize_profiles(f, o).episodes[0].p == a.episodes[0].p);
}

TEST(Synthetic, EveningPeakAboveNight) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  SyntheticOptions o;
  o.days = 1;
  o.day_spread = 0;
  o.step_minutes = 60;
  const auto d = synthesize_profiles(f, o);
  const double total_19 = -d.episodes[0].p.row(19).sum();
  const double total_3 = -d.episodes[0].p.row(3).sum();
  EXPECT_GT(total_19, 1.5 * total_3);
  EXPECT_GT(total_19, f.p_load().sum() * 0.9);
}

TEST(Synthetic, PvPushesInjectionPositiveAtNoon) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  SyntheticOptions o;
  o.days = 1;
  o.step_minutes = 60;
  o.pv_capacity = 4.0 * f.p_load().sum();
  const auto d = synthesize_profiles(f, o);
  EXPECT_GT(d.episodes[0].p.row(12).sum(), 0.0);
  EXPECT_LT(d.episodes[0].p.row(2).sum(), 0.0);
  o.pv_buses = {99};
  EXPECT_THROW(synthesize_profiles(f, o), std::invalid_argument);
}

TEST(DatasetCsv, RoundTripIsExact) {
  const Feeder f = load_feeder(fixture::data("toy3.feeder"));
  SyntheticOptions o;
  o.days = 2;
  o.noise = 0.05;
  o.step_minutes = 30;
  LoadDataset d = synthesize_profiles(f, o);
  d.episodes[1].label = "test";
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const auto back = read_dataset_csv(ss);
  EXPECT_EQ(back.step_minutes, 30.0);
  ASSERT_EQ(back.episodes.size(), 2u);
  EXPECT_EQ(back.episodes[1].label, "test");
  EXPECT_TRUE(back.episodes[0].p == d.episodes[0].p);
  EXPECT_TRUE(back.episodes[1].q == d.episodes[1].q);
  EXPECT_EQ(back.with_label("test").episodes.size(), 1u);
}

TEST(DatasetCsv, LoadDetectsFormat) {
  const Feeder f = load_feeder(fixture::data("toy3.feeder"));
  SyntheticOptions o;
  o.days = 1;
  const std::string per_bus = testing::TempDir() + "per_bus.csv";
  save_dataset_csv(per_bus, synthesize_profiles(f, o));
  EXPECT_EQ(load_dataset(per_bus, f, {}).episodes[0].steps(), 288);
  EXPECT_THROW(load_dataset(per_bus, load_feeder(fixture::data("ieee13.feeder")), {}), ParseError);

  const std::string system = testing::TempDir() + "system.csv";
  {
    std::ofstream out(system);
    out << "timestamp,load\n0,1\n5,2\n";
  }
  EXPECT_EQ(load_dataset(system, f, {}).episodes[0].steps(), 2);
}

TEST(DatasetCsv, RejectsDisorder) {
  std::istringstream a("# step_minutes=5\nepisode,label,step,p_1,q_1\n0,x,1,0,0\n");
  EXPECT_THROW(read_dataset_csv(a), ParseError);
  std::istringstream b("episode,label,step,p_1,q_1\n0,x,0,0,0\n");
  EXPECT_THROW(read_dataset_csv(b), ParseError);
  std::istringstream c("# step_minutes=5\nepisode,label,step,p_1,p_2\n");
  EXPECT_THROW(read_dataset_csv(c), ParseError);
}
