#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "shimkit/config.hpp"

using namespace shimkit;
namespace fs = std::filesystem;

TEST_CASE("config files parse key=value lines, comments, and blanks") {
  const fs::path path = fs::temp_directory_path() / "shimkit_cfg_test.cfg";
  {
    std::ofstream out(path);
    out << "# a comment\n"
        << "coil.count = 4\n"
        << "\n"
        << "target.lambda=2e-3\n"
        << "slice.augment = 0,45,90   # trailing comment\n";
  }
  const auto kv = config::parse_config_file(path);
  CHECK(kv.at("coil.count") == "4");
  CHECK(kv.at("target.lambda") == "2e-3");

  config::RunConfig cfg;
  cfg.apply(kv);
  CHECK(cfg.coil.coils == 4);
  CHECK(cfg.lambda == 2e-3);
  CHECK(cfg.augment == std::vector<double>{0.0, 45.0, 90.0});
  fs::remove(path);
}

TEST_CASE("unknown keys are rejected rather than silently ignored") {
  config::RunConfig cfg;
  CHECK_THROWS_AS(cfg.apply({{"coil.cont", "4"}}), shimkit::SpecError);
  CHECK_THROWS_AS(cfg.apply({{"", "4"}}), shimkit::SpecError);
}

TEST_CASE("malformed values name the offending key") {
  config::RunConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.apply({{"adam.max_iters", "many"}}),
                       doctest::Contains("adam.max_iters"), shimkit::SpecError);
  CHECK_THROWS_WITH_AS(cfg.apply({{"phantom.grid", "64x64"}}), doctest::Contains("phantom.grid"),
                       shimkit::SpecError);
}

TEST_CASE("later sources override earlier ones") {
  config::RunConfig cfg;
  cfg.apply({{"seed", "11"}});
  CHECK(cfg.seed == 11);
  cfg.apply({{"seed", "12"}});
  CHECK(cfg.seed == 12);
}

TEST_CASE("defaults validate and echo a fully resolved configuration") {
  config::RunConfig cfg;
  cfg.validate();
  const auto echo = cfg.echo();
  CHECK(echo.at("coil").at("count") == 8);
  CHECK(echo.at("train").at("epochs") == 200);
  CHECK(echo.at("target").at("lambda") == 1e-3);
  CHECK(echo.at("adam").at("max_iters") == 500);
  CHECK(echo.at("restarts").at("n_random") == 300);
  CHECK(echo.at("mls").at("max_outer_iters") == 200);
}

TEST_CASE("hash changes with the configuration and is stable otherwise") {
  config::RunConfig a, b;
  CHECK(a.hash() == b.hash());
  b.apply({{"target.lambda", "5e-3"}});
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16); // 64-bit hex
}

TEST_CASE("phantom_list spaces scales evenly across the configured range") {
  config::RunConfig cfg;
  const auto phantoms = cfg.phantom_list();
  REQUIRE(phantoms.size() == 10);
  CHECK(phantoms.front().scale == doctest::Approx(0.90));
  CHECK(phantoms.back().scale == doctest::Approx(1.10));
  for (size_t i = 1; i < phantoms.size(); ++i) {
    CHECK(phantoms[i].scale - phantoms[i - 1].scale ==
          doctest::Approx(0.20 / 9.0).epsilon(1e-12));
  }

  config::RunConfig one;
  one.apply({{"phantom.count", "1"}});
  const auto single = one.phantom_list();
  REQUIRE(single.size() == 1);
  CHECK(single[0].scale == doctest::Approx(1.0));
}

TEST_CASE("net_config picks desk or paper widths") {
  config::RunConfig cfg;
  const auto desk = cfg.net_config(8, 64, 64);
  CHECK(desk.input_channels == 16);
  CHECK(desk.output_dim == 16);
  CHECK(desk.stage_widths == std::array<int, 4>{16, 32, 64, 128});

  cfg.apply({{"net.paper_scale", "true"}});
  const auto paper = cfg.net_config(8, 64, 64);
  CHECK(paper.stage_widths == std::array<int, 4>{64, 128, 256, 512});
}

TEST_CASE("validation rejects inconsistent cross-module settings") {
  config::RunConfig cfg;
  cfg.apply({{"bench.folds", "0"}});
  CHECK_THROWS_AS(cfg.validate(), shimkit::SpecError);
}
