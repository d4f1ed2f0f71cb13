#include <gtest/gtest.h>

#include <limits>
#include <string>

#include "m2m/config.hpp"
#include "m2m/error.hpp"

using namespace m2m;

namespace {

std::string error_of(const std::string& text) {
  try {
    run_config_from(parse_keyfile(text));
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Keyfile, CommentsWhitespaceAndOverrides) {
  const auto kv = parse_keyfile("# header\n  map = hist  # trailing\n\nepsilon=2\nepsilon = 3\n");
  EXPECT_EQ(kv.at("map"), "hist");
  EXPECT_EQ(kv.at("epsilon"), "3");
  EXPECT_EQ(kv.size(), 2u);
}

TEST(Keyfile, ErrorsNameTheLine) {
  try {
    parse_keyfile("map = rff\njunk\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_keyfile(" = 3\n"), ValidationError);
}

TEST(Keyfile, ScalarParsers) {
  EXPECT_EQ(parse_double("inf", "k"), std::numeric_limits<double>::infinity());
  EXPECT_EQ(parse_double("1e-3", "k"), 1e-3);
  EXPECT_THROW(parse_double("1.0x", "k"), ValidationError);
  EXPECT_THROW(parse_double("nan", "k"), ValidationError);
  EXPECT_EQ(parse_u64("42", "k"), 42u);
  EXPECT_THROW(parse_u64("-1", "k"), ValidationError);
  EXPECT_TRUE(parse_bool("true", "k"));
  EXPECT_FALSE(parse_bool("false", "k"));
  EXPECT_THROW(parse_bool("maybe", "k"), ValidationError);
  EXPECT_EQ(parse_double_list("0.1, 1,inf", "k"), (std::vector<double>{0.1, 1.0, std::numeric_limits<double>::infinity()}));
  EXPECT_THROW(parse_double_list("", "k"), ValidationError);
  EXPECT_EQ(split_list(" a, b ,c"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(RunConfig, DefaultsAndOverrides) {
  const RunConfig d = run_config_from({});
  EXPECT_EQ(d.map.kind, MapKind::Rff);
  EXPECT_EQ(d.map.m, 200u);
  EXPECT_EQ(d.epsilon, 1.0);
  EXPECT_EQ(d.split, 0.98);
  EXPECT_EQ(d.train.n_synth, 100000u);

  const RunConfig c = run_config_from(parse_keyfile("map = race\nrepetitions = 10\nbuckets = 12\nwidth = 0.2\n"
                                                    "epsilon = inf\nn_synth = 500\nseed = 9\n"));
  EXPECT_EQ(c.map.kind, MapKind::Race);
  EXPECT_EQ(c.map.repetitions, 10u);
  EXPECT_EQ(c.map.buckets, 12u);
  EXPECT_EQ(c.map.width, 0.2);
  EXPECT_EQ(c.epsilon, std::numeric_limits<double>::infinity());
  EXPECT_EQ(c.train.n_synth, 500u);
  EXPECT_EQ(c.seed, 9u);
}

TEST(RunConfig, DerivedSeedsAreDistinct) {
  const RunConfig c = run_config_from(parse_keyfile("seed = 5\n"));
  EXPECT_NE(c.map_seed(), c.noise_seed());
  EXPECT_NE(c.map_seed(), c.train.seed);
  EXPECT_EQ(c.map_seed(), run_config_from(parse_keyfile("seed = 5\n")).map_seed());
}

TEST(RunConfig, RejectsUnknownAndInvalidKeys) {
  EXPECT_NE(error_of("colour = red\n").find("colour"), std::string::npos);
  EXPECT_FALSE(error_of("epsilon = 0\n").empty());
  EXPECT_FALSE(error_of("epsilon = -1\n").empty());
  EXPECT_FALSE(error_of("split = 1\n").empty());
  EXPECT_FALSE(error_of("map = pca\n").empty());
  EXPECT_FALSE(error_of("n_synth = 0\n").empty());
  EXPECT_FALSE(error_of("m = 7\nmap = rff\n").empty());
}

TEST(BuildMap, EachKind) {
  MapConfig c;
  c.kind = MapKind::Hist;
  c.n_bins = 5;
  EXPECT_EQ(build_map(c, Domain::unit_box(3), 0).dim(), 15u);
  c.kind = MapKind::Race;
  c.repetitions = 4;
  c.buckets = 6;
  EXPECT_EQ(build_map(c, Domain::unit_box(3), 0).dim(), 24u);
  c.kind = MapKind::Rff;
  c.m = 10;
  EXPECT_EQ(build_map(c, Domain::unit_box(3), 0).dim(), 10u);
}
