#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ctpp/pipeline.hpp"
#include "ctpp/prompt_pool.hpp"
#include "support/testutil.hpp"

using namespace ctpp;
namespace tt = ctpp::test;

namespace {

PromptPool make_pool(int m, int n, int l_p, int d1, int d, std::uint64_t seed) {
  Rng rng(seed);
  PromptPool pool;
  pool.init(m, n, l_p, d1, d, rng);
  return pool;
}

}  // namespace

TEST_CASE("cosine distance basics") {
  Eigen::RowVectorXd a(3), b(3);
  a << 1.0, 2.0, -1.0;
  REQUIRE(cosine_distance(a, a) == Catch::Approx(0.0).margin(1e-15));
  b << 2.0, -1.0, 0.0;  // orthogonal to a
  REQUIRE(cosine_distance(a, b) == Catch::Approx(1.0));
  REQUIRE(cosine_distance(a, (-a).eval()) == Catch::Approx(2.0));
  Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(3);
  REQUIRE_THROWS_AS(cosine_distance(a, zero), ValidationError);
}

TEST_CASE("retrieve: N = M returns the whole pool sorted by distance") {
  auto pool = make_pool(5, 4, 4, 3, 6, 17);
  Eigen::RowVectorXd q = Eigen::RowVectorXd::Random(6);
  auto res = retrieve(q, pool, 5);
  REQUIRE(res.indices.size() == 5);
  for (std::size_t i = 1; i < res.distances.size(); ++i) {
    REQUIRE(res.distances[i] >= res.distances[i - 1]);
  }
  std::vector<int> sorted = res.indices;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("retrieve: exact key match wins over orthogonal distractors") {
  auto pool = make_pool(4, 1, 4, 3, 4, 5);
  pool.keys.value.setZero();
  pool.keys.value(0, 0) = 1.0;
  pool.keys.value(1, 1) = 1.0;
  pool.keys.value(2, 2) = 1.0;
  pool.keys.value(3, 3) = 1.0;
  Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(4);
  q(2) = 3.0;  // same direction as key 2
  auto res = retrieve(q, pool, 1);
  REQUIRE(res.indices == std::vector<int>{2});
  REQUIRE(res.distances[0] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("retrieve is invariant to positive query scaling") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    auto pool = make_pool(8, 3, 4, 3, 5, 100 + trial);
    Eigen::RowVectorXd q = tt::random_mat(rng, 1, 5);
    auto r1 = retrieve(q, pool, 3);
    auto r2 = retrieve((q * 7.25).eval(), pool, 3);
    REQUIRE(r1.indices == r2.indices);
  }
}

TEST_CASE("retrieve: tie-break determinism over randomized pools") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    auto pool = make_pool(6, 2, 4, 2, 4, 500 + trial);
    // Duplicate keys force exact distance ties.
    pool.keys.value.row(3) = pool.keys.value.row(1);
    pool.keys.value.row(5) = pool.keys.value.row(1);
    Eigen::RowVectorXd q = pool.keys.value.row(1);
    auto res = retrieve(q, pool, 2);
    REQUIRE(res.indices[0] == 1);  // lowest index among the tied keys
    REQUIRE(res.indices[1] == 3);
    auto res2 = retrieve(q, pool, 2);
    REQUIRE(res.indices == res2.indices);
  }
}

TEST_CASE("retrieve rejects N outside 1..M") {
  auto pool = make_pool(3, 2, 4, 2, 4, 2);
  Eigen::RowVectorXd q = Eigen::RowVectorXd::Ones(4);
  REQUIRE_THROWS_AS(retrieve(q, pool, 4), ValidationError);
  REQUIRE_THROWS_AS(retrieve(q, pool, 0), ValidationError);
}

TEST_CASE("build_temporal_prompt shapes and temporal block") {
  Rng rng(7);
  TimeEncoding te{54, 64, 1};
  TemporalPrompt prompt;
  prompt.structural.init_gaussian(10, 10, 0.02, rng);

  SECTION("paper-default shape 10 x 64") {
    Mat full = build_temporal_prompt(prompt, 3.0, te);
    REQUIRE(full.rows() == 10);
    REQUIRE(full.cols() == 64);
  }

  SECTION("t_p = 0 gives the TE(0) pattern in every row") {
    Mat full = build_temporal_prompt(prompt, 0.0, te);
    for (int r = 0; r < full.rows(); ++r) {
      for (int d = 1; d <= te.dim; ++d) {
        double expect = (d % 2 == 1) ? 1.0 : 0.0;
        REQUIRE(full(r, 10 + d - 1) == expect);
      }
    }
  }

  SECTION("structural columns are independent of t_p") {
    Mat f1 = build_temporal_prompt(prompt, 1.0, te);
    Mat f2 = build_temporal_prompt(prompt, 9.0, te);
    REQUIRE(f1.leftCols(10) == f2.leftCols(10));
    REQUIRE(f1.rightCols(te.dim) != f2.rightCols(te.dim));
  }

  SECTION("standard-prompt variant uses an all-ones temporal block") {
    Mat full = build_temporal_prompt(prompt, 5.0, te, true);
    REQUIRE(full.rightCols(te.dim).isOnes());
  }
}

TEST_CASE("match_loss values and gradient descent on keys") {
  auto pool = make_pool(3, 1, 4, 2, 4, 13);

  SECTION("query equal to its selected key gives zero loss") {
    Eigen::RowVectorXd q = pool.keys.value.row(1);
    auto res = retrieve(q, pool, 1);
    REQUIRE(res.indices[0] == 1);
    ad::Tape tape;
    TapeBackend b(tape);
    Mat qm = q;
    auto loss = match_loss(b, pool, b.constant(qm), res);
    REQUIRE(b.scalar(loss) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("orthogonal selected keys each contribute unit distance") {
    pool.keys.value.setZero();
    pool.keys.value(0, 0) = 1.0;
    pool.keys.value(1, 1) = 1.0;
    pool.keys.value(2, 2) = 1.0;
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(4);
    q(3) = 1.0;
    RetrievalResult res;
    res.indices = {0, 1};
    res.distances = {1.0, 1.0};
    ad::Tape tape;
    TapeBackend b(tape);
    auto loss = match_loss(b, pool, b.constant(Mat(q)), res);
    REQUIRE(b.scalar(loss) == Catch::Approx(2.0));
  }

  SECTION("nonnegative for random queries") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::RowVectorXd q = tt::random_mat(rng, 1, 4);
      auto res = retrieve(q, pool, 2);
      ad::Tape tape;
      TapeBackend b(tape);
      auto loss = match_loss(b, pool, b.constant(Mat(q)), res);
      REQUIRE(b.scalar(loss) >= 0.0);
    }
  }

  SECTION("one gradient step on the keys lowers the loss") {
    std::mt19937_64 rng(37);
    Eigen::RowVectorXd q = tt::random_mat(rng, 1, 4);
    auto res = retrieve(q, pool, 2);
    double before;
    {
      ad::Tape tape;
      TapeBackend b(tape);
      auto loss = match_loss(b, pool, b.constant(Mat(q)), res);
      before = b.scalar(loss);
      tape.backward(loss);
      b.harvest_grads();
    }
    pool.keys.value -= 0.05 * pool.keys.grad;
    {
      ad::Tape tape;
      TapeBackend b(tape);
      auto loss = match_loss(b, pool, b.constant(Mat(q)), res);
      REQUIRE(b.scalar(loss) < before);
    }
  }
}

TEST_CASE("refresh gate") {
  REQUIRE(refresh_gate(0, 1));
  REQUIRE(refresh_gate(5, 1));
  REQUIRE(refresh_gate(0, 2));
  REQUIRE(!refresh_gate(1, 2));
  REQUIRE(refresh_gate(2, 2));
  REQUIRE(!refresh_gate(3, 2));
  REQUIRE(refresh_gate(4, 2));
  REQUIRE(refresh_gate(0, 4));
  REQUIRE(refresh_gate(4, 4));
  REQUIRE(refresh_gate(8, 4));
  REQUIRE(!refresh_gate(2, 4));
  REQUIRE_THROWS_AS(refresh_gate(3, 0), ConfigError);
}

TEST_CASE("pool checkpoint round-trips bit-exactly") {
  auto pool = make_pool(4, 2, 6, 3, 8, 41);
  nlohmann::json j = pool_to_json(pool);
  std::string text = j.dump();
  PromptPool back = pool_from_json(nlohmann::json::parse(text));
  REQUIRE(back.size == pool.size);
  REQUIRE(back.prompt_len == pool.prompt_len);
  REQUIRE(back.type_dim == pool.type_dim);
  REQUIRE(back.key_dim == pool.key_dim);
  REQUIRE(back.keys.value == pool.keys.value);  // bitwise
  for (int i = 0; i < pool.size; ++i) {
    REQUIRE(back.prompts[i].structural.value == pool.prompts[i].structural.value);
  }
}

TEST_CASE("pool init validates shape constraints") {
  Rng rng(1);
  PromptPool pool;
  REQUIRE_THROWS_AS(pool.init(4, 2, 5, 3, 8, rng), ConfigError);  // odd L_p
  REQUIRE_THROWS_AS(pool.init(4, 5, 6, 3, 8, rng), ConfigError);  // N > M
}
