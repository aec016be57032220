#include "nlv/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace nlv;

namespace {

std::filesystem::path write_config(const std::string& text) {
  const auto path = std::filesystem::path(::testing::TempDir()) / "run.cfg";
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

}  // namespace

TEST(RunConfig, RegistryIsWellFormed) {
  std::set<std::string> names;
  for (const ConfigKey& k : config_registry()) {
    EXPECT_TRUE(names.insert(k.name).second) << "duplicate key " << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
  EXPECT_GT(names.size(), 30u);
}

TEST(RunConfig, DefaultsAreLoaded) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.get_u64("seed"), 7u);
  EXPECT_EQ(cfg.get_long("threads"), 1);
  EXPECT_EQ(cfg.get_long("classes"), 8);
  EXPECT_EQ(cfg.get_long("train_count"), 500);
  EXPECT_DOUBLE_EQ(cfg.get_double("speed"), 1.5);
  EXPECT_DOUBLE_EQ(cfg.get_double("gc_tol"), 1e-5);
  EXPECT_TRUE(cfg.get_bool("rel_normalize"));
  EXPECT_EQ(cfg.get_radius("delta_t"), Radius::fraction(1, 2));
  EXPECT_EQ(cfg.get_radius("delta_h"), Radius::fraction(3, 7));
  EXPECT_TRUE(cfg.get_long_list("decay_epochs").empty());
  EXPECT_EQ(cfg.get_string_list("variants").size(), 4u);
}

TEST(RunConfig, UnknownKeysAreRejected) {
  RunConfig cfg;
  EXPECT_THROW(cfg.set("sped", "2.0"), ConfigError);
  EXPECT_THROW(cfg.get_string("sped"), ConfigError);
  const auto path = write_config("sped = 2.0\n");
  RunConfig from_file;
  EXPECT_THROW(from_file.load_file(path.string()), ConfigError);
}

TEST(RunConfig, FileOverridesAndComments) {
  const auto path = write_config(
      "# experiment settings\n"
      "\n"
      "classes = 4\n"
      "speed=2.5   # inline comment\n"
      "  delta_t = inf\n"
      "decay_epochs = 3, 5\n");
  RunConfig cfg;
  cfg.load_file(path.string());
  EXPECT_EQ(cfg.get_long("classes"), 4);
  EXPECT_DOUBLE_EQ(cfg.get_double("speed"), 2.5);
  EXPECT_TRUE(cfg.get_radius("delta_t").is_infinite());
  EXPECT_EQ(cfg.get_long_list("decay_epochs"), (std::vector<long>{3, 5}));
  // Untouched keys keep their defaults.
  EXPECT_EQ(cfg.get_long("train_count"), 500);

  // Flag-style set() wins over the file value.
  cfg.set("classes", "8");
  EXPECT_EQ(cfg.get_long("classes"), 8);
}

TEST(RunConfig, MalformedLinesAreNamed) {
  RunConfig cfg;
  const auto path = write_config("classes 4\n");
  try {
    cfg.load_file(path.string());
    FAIL() << "expected a parse error";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cfg.load_file(write_config("= 4\n").string()), ConfigError);
  EXPECT_THROW(cfg.load_file("no_such_file.cfg"), ConfigError);
}

TEST(RunConfig, TypedGettersValidate) {
  RunConfig cfg;
  cfg.set("epochs", "5x");
  EXPECT_THROW(cfg.get_long("epochs"), ConfigError);
  cfg.set("seed", "-3");
  EXPECT_THROW(cfg.get_u64("seed"), ConfigError);
  cfg.set("speed", "fast");
  EXPECT_THROW(cfg.get_double("speed"), ConfigError);
  cfg.set("rel_normalize", "maybe");
  EXPECT_THROW(cfg.get_bool("rel_normalize"), ConfigError);
  cfg.set("delta_t", "3/");
  EXPECT_THROW(cfg.get_radius("delta_t"), ConfigError);
  cfg.set("decay_epochs", "1,two");
  EXPECT_THROW(cfg.get_long_list("decay_epochs"), ConfigError);
  cfg.set("fuse_weights", "0.5,oops");
  EXPECT_THROW(cfg.get_double_list("fuse_weights"), ConfigError);

  cfg.set("rel_normalize", "false");
  EXPECT_FALSE(cfg.get_bool("rel_normalize"));
  cfg.set("fuse_weights", "0.5, 0.25");
  EXPECT_EQ(cfg.get_double_list("fuse_weights"), (std::vector<double>{0.5, 0.25}));
}
