#include <doctest.h>

#include "prooflab/config.hpp"

using namespace prooflab;

TEST_CASE("config parses nested keys, comments and lists") {
  Config cfg = Config::parse(
      "# comment\n"
      "experiment = separation\n"
      "gen.D = 3\n"
      "gen.alpha = 0.5   # trailing comment\n"
      "gen.term_profile = 0, 0, 1\n"
      "sep.n_grid = 32, 64, 128\n"
      "flag = true\n");
  CHECK(cfg.get_string("experiment", "") == "separation");
  CHECK(cfg.get_int("gen.D", 0) == 3);
  CHECK(cfg.get_double("gen.alpha", 0.0) == 0.5);
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double_list("gen.term_profile", {}) == std::vector<double>{0.0, 0.0, 1.0});
  CHECK(cfg.get_int_list("sep.n_grid", {}) == std::vector<long long>{32, 64, 128});
  CHECK(cfg.get_int("missing", 7) == 7);
}

TEST_CASE("strict parsing: unknown keys, duplicates and malformed lines fail") {
  Config cfg = Config::parse("a = 1\nb = 2\n");
  CHECK_THROWS_AS(cfg.require_known({"a"}), ParseError);
  CHECK_NOTHROW(cfg.require_known({"a", "b"}));
  CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), ParseError);
  CHECK_THROWS_AS(Config::parse("just a line\n"), ParseError);
  CHECK(cfg.get_double("a", 0.0) == 1.0);
}

TEST_CASE("typed getters reject junk") {
  Config cfg = Config::parse("x = notanumber\ny = 1.5\n");
  CHECK_THROWS_AS(cfg.get_int("x", 0), ParseError);
  CHECK_THROWS_AS(cfg.get_int("y", 0), ParseError);
  CHECK_THROWS_AS(cfg.get_bool("x", false), ParseError);
  CHECK(cfg.get_double("y", 0.0) == 1.5);
}
