// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "gpa/config.hpp"

namespace gpa {
namespace {

TEST(Config, ParsesKeyValueText) {
  const auto cfg = parse_config("# pivot\nd=2\nm_h = 32\nm_w=32\n\nkappa=12\nscaled=false\n");
  EXPECT_EQ(cfg, (GpaConfig{2, 32, 32, 12, false}));
  EXPECT_TRUE(parse_config("scaled=true").scaled);
}

TEST(Config, TextRoundTrip) {
  const GpaConfig cfg{4, 8, 2, 7, true};
  EXPECT_EQ(parse_config(to_config_text(cfg)), cfg);
}

TEST(Config, RejectsBadText) {
  EXPECT_THROW(parse_config("d"), ConfigError);
  EXPECT_THROW(parse_config("depth=2"), ConfigError);
  EXPECT_THROW(parse_config("kappa=-1"), ConfigError);
  EXPECT_THROW(parse_config("kappa=two"), ConfigError);
  EXPECT_THROW(parse_config("scaled=maybe"), ConfigError);
}

TEST(Config, ValidateNamesTheViolatedConstraint) {
  EXPECT_NO_THROW(validate({2, 32, 32, 12, false}, 128, 128));
  try {
    validate({2, 1, 1, 1, false}, 7, 8);
    FAIL();
  } catch (const DivisibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }
  EXPECT_THROW(validate({2, 3, 1, 1, false}, 8, 8), DivisibilityError);
  try {
    validate({2, 1, 1, 17, false}, 8, 8);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("kappa"), std::string::npos);
  }
  EXPECT_THROW(validate({0, 1, 1, 1, false}, 8, 8), ConfigError);
  EXPECT_THROW(validate({1, 1, 1, 0, false}, 8, 8), ConfigError);
}

TEST(Config, GridParsing) {
  EXPECT_EQ(parse_grid("32x32"), (GridShape{32, 32}));
  EXPECT_EQ(parse_grid("64x32"), (GridShape{64, 32}));
  EXPECT_EQ(parse_grid("1024"), (GridShape{32, 32}));
  EXPECT_THROW(parse_grid("2048"), ConfigError);  // no square factorization
  EXPECT_THROW(parse_grid("4x"), ConfigError);
  EXPECT_THROW(parse_grid("ax4"), ConfigError);
  EXPECT_EQ(format_grid({3, 5}), "3x5");
}

TEST(Config, PivotPresetFollowsLayerSchedule) {
  EXPECT_FALSE(resolve_preset("pivot", 64, 64).has_value());
  EXPECT_FALSE(resolve_preset("pivot", 32, 32).has_value());
  EXPECT_EQ(resolve_preset("pivot", 128, 128), (GpaConfig{2, 32, 32, 12, false}));
  EXPECT_EQ(resolve_preset("pivot", 256, 256), (GpaConfig{4, 32, 32, 12, false}));
  EXPECT_THROW(resolve_preset("pivot", 128, 64), ConfigError);
  EXPECT_THROW(resolve_preset("pivot", 100, 100), DivisibilityError);
}

TEST(Config, HighresPresetFollowsLayerSchedule) {
  EXPECT_FALSE(resolve_preset("highres", 64, 32).has_value());
  EXPECT_EQ(resolve_preset("highres", 128, 64)->d, 2u);
  EXPECT_EQ(resolve_preset("highres", 256, 128)->d, 4u);
  const auto top = resolve_preset("highres", 512, 256);
  EXPECT_EQ(top->d, 8u);
  EXPECT_EQ(top->cells(), 2048u);
  EXPECT_NO_THROW(validate(*top, 512, 256));
  EXPECT_THROW(resolve_preset("nope", 128, 128), ConfigError);
}

TEST(Config, Naming) {
  EXPECT_EQ(config_name({2, 32, 32, 12, false}, 128, 128), "GPA1024_12_64");
  EXPECT_EQ(config_name({4, 32, 32, 12, false}, 128, 128), "GPA1024_12_32");
  EXPECT_EQ(config_name({1, 32, 32, 12, false}, 128, 128), "GPA1024_12_128");
  EXPECT_EQ(config_name({8, 64, 32, 4, false}, 512, 256), "GPA2048_4_64x32");
}

}  // namespace
}  // namespace gpa
