#include "saver/feeder.hpp"
#include "saver/textfile.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

using namespace saver;

namespace {

Feeder parse(const std::string& text) {
  std::istringstream in(text);
  return parse_feeder(in, "test");
}

const char* kTwoBus = R"(
[bases]
kV = 12
MVA = 1
[limits]
v0 = 1.0
v_mag_lower = 0.95
v_mag_upper = 1.05
[buses]
id controllable q_min q_max
0 0 0 0
1 1 -0.1 0.1
[lines]
from to r x
0 1 0.01 0.01
)";

std::string replace(std::string s, const std::string& a, const std::string& b) {
  const auto pos = s.find(a);
  EXPECT_NE(pos, std::string::npos);
  return s.replace(pos, a.size(), b);
}

}  // namespace

TEST(LoadFeeder, Ieee13Fixture) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  EXPECT_EQ(f.num_buses(), 13);
  EXPECT_EQ(f.lines().size(), 12u);
  EXPECT_NEAR(f.v_lower()(0), 0.9025, 1e-12);
  EXPECT_NEAR(f.v_upper()(0), 1.1025, 1e-12);
  EXPECT_EQ(f.controllable(), (std::vector<int>{1, 3, 4, 5, 6, 9, 10, 11, 12}));
  for (int b : f.controllable()) {
    EXPECT_EQ(f.bus(b).q_min, -0.1);
    EXPECT_EQ(f.bus(b).q_max, 0.1);
  }
}

TEST(LoadFeeder, TwoBus) {
  const Feeder f = parse(kTwoBus);
  EXPECT_EQ(f.lines().size(), 1u);
  EXPECT_EQ(f.num_nodes(), 1);
  EXPECT_EQ(f.parent(1), 0);
}

TEST(LoadFeeder, RejectsCycle) {
  const std::string text = R"(
[bases]
kV = 12
MVA = 1
[limits]
v0 = 1
v_mag_lower = 0.95
v_mag_upper = 1.05
[buses]
id
0
1
2
[lines]
from to r x
0 1 0.01 0.01
1 2 0.01 0.01
2 1 0.01 0.01
)";
  try {
    parse(text);
    FAIL() << "expected a topology error";
  } catch (const FeederError& e) {
    EXPECT_NE(std::string(e.what()).find("not a tree"), std::string::npos) << e.what();
  }
}

TEST(LoadFeeder, RejectsDisconnectedBus) {
  const std::string text = replace(kTwoBus, "1 1 -0.1 0.1\n", "1 1 -0.1 0.1\n2 0 0 0\n");
  try {
    parse(text);
    FAIL();
  } catch (const FeederError& e) {
    EXPECT_NE(std::string(e.what()).find("bus 2"), std::string::npos) << e.what();
  }
}

TEST(LoadFeeder, RejectsNonPositiveImpedance) {
  EXPECT_THROW(parse(replace(kTwoBus, "0 1 0.01 0.01", "0 1 0 0.01")), FeederError);
  EXPECT_THROW(parse(replace(kTwoBus, "0 1 0.01 0.01", "0 1 0.01 -0.01")), FeederError);
}

TEST(LoadFeeder, RejectsUnknownKeysSectionsAndColumns) {
  EXPECT_THROW(parse(replace(kTwoBus, "MVA = 1", "MVA = 1\ncolor = red")), ParseError);
  EXPECT_THROW(parse(std::string(kTwoBus) + "[extra]\n"), ParseError);
  EXPECT_THROW(parse(replace(kTwoBus, "id controllable q_min q_max", "id controllable q_min q_maxx")),
               FeederError);
  EXPECT_THROW(parse(replace(kTwoBus, "[lines]", "[line]")), ParseError);
}

TEST(LoadFeeder, RejectsBadLimitsAndBoxes) {
  EXPECT_THROW(parse(replace(kTwoBus, "1 1 -0.1 0.1", "1 1 0.05 0.1")), FeederError);
  EXPECT_THROW(parse(replace(kTwoBus, "v0 = 1.0", "v0 = 1.2")), FeederError);
  EXPECT_THROW(parse(replace(kTwoBus, "0 0 0 0", "0 1 -0.1 0.1")), FeederError);
}

TEST(LoadFeeder, ParseErrorsCarryLineNumbers) {
  try {
    parse(replace(kTwoBus, "0 1 0.01 0.01", "0 1 abc 0.01"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("test:"), std::string::npos) << e.what();
  }
}

TEST(Subtree, Examples) {
  const Feeder c = fixture::chain(3, 0.01, 0.01);
  EXPECT_EQ(subtree_buses(c, 2), (std::vector<int>{2, 3}));
  EXPECT_EQ(subtree_buses(c, 0), (std::vector<int>{0, 1, 2, 3}));
  const Feeder s = fixture::star(3, 0.01, 0.01);
  EXPECT_EQ(subtree_buses(s, 1), (std::vector<int>{1}));
  EXPECT_THROW(subtree_buses(s, 9), FeederError);
}

TEST(PathToRoot, Examples) {
  const Feeder c = fixture::chain(3, 0.01, 0.01);
  const auto path = path_to_root(c, 3);
  ASSERT_EQ(path.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(c.lines()[path[k]].from_bus, k);
    EXPECT_EQ(c.lines()[path[k]].to_bus, k + 1);
  }
  EXPECT_TRUE(path_to_root(c, 0).empty());
  EXPECT_THROW(path_to_root(c, 4), FeederError);
}

TEST(FeederProperties, SubtreeAndPathAgreeOnRandomTrees) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Feeder f = fixture::random_tree(2 + trial % 12, rng);
    for (int j = 1; j < f.num_buses(); ++j) {
      const auto sub = subtree_buses(f, j);
      for (int k = 0; k < f.num_buses(); ++k) {
        std::set<int> on_path;
        for (int e : path_to_root(f, k)) on_path.insert(f.lines()[e].to_bus);
        const bool in_sub = std::binary_search(sub.begin(), sub.end(), k);
        EXPECT_EQ(in_sub, on_path.count(j) == 1) << "trial " << trial << " j " << j << " k " << k;
      }
    }
    for (int b = 0; b < f.num_buses(); ++b) {
      std::size_t sum = 0;
      for (int c : f.children(b)) sum += subtree_buses(f, c).size();
      EXPECT_EQ(sum, subtree_buses(f, b).size() - 1);
    }
  }
}

TEST(FeederProperties, RoundTrip) {
  const Feeder f = load_feeder(fixture::data("ieee13.feeder"));
  std::ostringstream out;
  write_feeder(out, f);
  std::istringstream in(out.str());
  const Feeder g = parse_feeder(in, "roundtrip");
  EXPECT_TRUE(f == g);
  EXPECT_EQ(f.fingerprint(), g.fingerprint());

  std::mt19937_64 rng(3);
  const Feeder r = fixture::random_tree(9, rng);
  std::ostringstream o2;
  write_feeder(o2, r);
  std::istringstream i2(o2.str());
  EXPECT_TRUE(parse_feeder(i2, "rt") == r);
}

TEST(FeederProperties, FingerprintSeesImpedanceChanges) {
  const Feeder a = fixture::chain(3, 0.01, 0.01);
  const Feeder b = fixture::chain(3, 0.01, 0.0100001);
  EXPECT_NE(a.fingerprint(), b.fingerprint());
}
