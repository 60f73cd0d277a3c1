#include <catch2/catch_amalgamated.hpp>

#include "ctpp/embedding.hpp"
#include "support/testutil.hpp"

using namespace ctpp;

TEST_CASE("temporal encoding at t = 0: odd dims 1, even dims 0") {
  auto v = temporal_encoding(0.0, 8, 64, 1);
  for (int d = 1; d <= 8; ++d) {
    if (d % 2 == 1) {
      REQUIRE(v(d - 1) == 1.0);
    } else {
      REQUIRE(v(d - 1) == 0.0);
    }
  }
}

TEST_CASE("temporal encoding stays in [-1, 1] and is finite") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> times(0.0, 1e4);
  for (int trial = 0; trial < 200; ++trial) {
    auto v = temporal_encoding(times(rng), 16, 64, 1);
    for (int d = 0; d < 16; ++d) {
      REQUIRE(std::isfinite(v(d)));
      REQUIRE(v(d) >= -1.0);
      REQUIRE(v(d) <= 1.0);
    }
  }
}

TEST_CASE("temporal encoding matches hand-evaluated values") {
  // t = 1, D2 = 2, scale = unit = 1: dim 1 is cos(1 * 5^0), dim 2 is
  // sin(1 * 5^1); values frozen from independent evaluation.
  auto v = temporal_encoding(1.0, 2, 1, 1);
  REQUIRE(v(0) == Catch::Approx(0.5403023058681398).epsilon(1e-12));
  REQUIRE(v(1) == Catch::Approx(-0.9589242746631385).epsilon(1e-12));
}

TEST_CASE("embed_event concatenates type row and time encoding") {
  Rng rng(3);
  EmbeddingTables tables;
  tables.init(3, 2, TimeEncoding{2, 64, 1}, rng);
  auto x = tables.embed_event(2, 1.5);
  REQUIRE(x.size() == 4);
  REQUIRE(x(0) == tables.type_table.value(1, 0));
  REQUIRE(x(1) == tables.type_table.value(1, 1));

  auto a = tables.embed_event(1, 0.5);
  auto b = tables.embed_event(1, 2.5);
  REQUIRE(a.head(2) == b.head(2));
  REQUIRE(a.tail(2) != b.tail(2));

  REQUIRE_THROWS_AS(tables.embed_event(4, 1.0), ValidationError);
  REQUIRE_THROWS_AS(tables.embed_event(0, 1.0), ValidationError);
}
