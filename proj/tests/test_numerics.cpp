#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "srnn/linalg.hpp"
#include "srnn/rng.hpp"

using Catch::Matchers::WithinAbs;
using srnn::ErrorCode;
using srnn::Matrix;
using srnn::RngStream;
using srnn::Vector;

TEST_CASE("matrix basics") {
  Matrix m(2, 3, 1.5);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  REQUIRE(m(1, 2) == 1.5);
  m(0, 1) = -2.0;
  REQUIRE(m(0, 1) == -2.0);
  REQUIRE(m == m);
  REQUIRE(!(m == Matrix(2, 3, 1.5)));

  const Matrix id = Matrix::identity(3);
  REQUIRE(id(0, 0) == 1.0);
  REQUIRE(id(0, 1) == 0.0);

  expect_error(ErrorCode::invalid_argument, [] { Matrix bad(0, 3); });
}

TEST_CASE("matvec against hand-computed values") {
  Matrix m(2, 2);
  m(0, 0) = 1.0; m(0, 1) = 2.0;
  m(1, 0) = 3.0; m(1, 1) = 4.0;
  const Vector out = srnn::matvec(m, {1.0, 1.0});
  REQUIRE(out == Vector{3.0, 7.0});

  SECTION("identity is a no-op") {
    const Vector v{0.5, -1.25, 3.75};
    REQUIRE(srnn::matvec(Matrix::identity(3), v) == v);
  }
  SECTION("zero matrix maps everything to zero") {
    REQUIRE(srnn::matvec(Matrix(3, 2), {7.0, 9.0}) == Vector{0.0, 0.0, 0.0});
  }
  SECTION("dimension mismatch throws") {
    expect_error(ErrorCode::dimension_mismatch,
                 [&] { srnn::matvec(m, {1.0, 2.0, 3.0}); });
  }
}

TEST_CASE("matvec against independent column-order accumulation") {
  RngStream rng(99);
  Matrix m(5, 7);
  for (double& x : m.data()) x = rng.uniform(-2.0, 2.0);
  Vector v(7);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);

  // Same product accumulated column by column instead of row by row.
  Vector expect(5, 0.0);
  for (std::size_t c = 0; c < 7; ++c)
    for (std::size_t r = 0; r < 5; ++r) expect[r] += m(r, c) * v[c];

  const Vector got = srnn::matvec(m, v);
  for (std::size_t r = 0; r < 5; ++r) REQUIRE_THAT(got[r], WithinAbs(expect[r], 1e-12));
}

TEST_CASE("matvec_transpose_add and add_outer match elementwise loops") {
  RngStream rng(7);
  Matrix m(4, 3);
  for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
  Vector v(4), acc(3, 0.25);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);

  Vector expect = acc;
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) expect[c] += m(r, c) * v[r];
  srnn::matvec_transpose_add(m, v, acc);
  for (std::size_t c = 0; c < 3; ++c) REQUIRE_THAT(acc[c], WithinAbs(expect[c], 1e-12));

  Matrix outer(2, 3, 0.5);
  srnn::add_outer(outer, {1.0, -2.0}, {3.0, 4.0, 5.0});
  REQUIRE_THAT(outer(0, 0), WithinAbs(3.5, 1e-15));
  REQUIRE_THAT(outer(1, 2), WithinAbs(-9.5, 1e-15));

  expect_error(ErrorCode::dimension_mismatch,
               [&] { srnn::add_outer(outer, {1.0}, {1.0, 2.0}); });
}

TEST_CASE("vector reductions") {
  REQUIRE_THAT(srnn::dot({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}), WithinAbs(32.0, 1e-15));
  REQUIRE_THAT(srnn::squared_distance({1.0, 2.0}, {4.0, 6.0}), WithinAbs(25.0, 1e-15));
  REQUIRE_THAT(srnn::norm({3.0, 4.0}), WithinAbs(5.0, 1e-15));
  REQUIRE_THAT(srnn::cosine_similarity({1.0, 0.0}, {1.0, 1.0}),
               WithinAbs(std::sqrt(0.5), 1e-15));
  REQUIRE_THAT(srnn::cosine_similarity({2.0, 0.0}, {5.0, 0.0}), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(srnn::cosine_similarity({1.0, 0.0}, {-3.0, 0.0}), WithinAbs(-1.0, 1e-15));
  expect_error(ErrorCode::invalid_argument,
               [] { srnn::cosine_similarity({0.0, 0.0}, {1.0, 0.0}); });
  expect_error(ErrorCode::dimension_mismatch, [] { srnn::dot({1.0}, {1.0, 2.0}); });
}

TEST_CASE("sigmoid matches the logistic function") {
  REQUIRE_THAT(srnn::sigmoid_scalar(0.0), WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(srnn::sigmoid_scalar(1.0), WithinAbs(0.7310585786300049, 1e-15));
  REQUIRE_THAT(srnn::sigmoid_scalar(-1.0), WithinAbs(0.2689414213699951, 1e-15));
  // Saturates without overflowing in either direction.
  REQUIRE_THAT(srnn::sigmoid_scalar(1000.0), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(srnn::sigmoid_scalar(-1000.0), WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(srnn::sigmoid_scalar(5.0) + srnn::sigmoid_scalar(-5.0),
               WithinAbs(1.0, 1e-15));

  const Vector v = srnn::sigmoid({0.0, 1.0});
  REQUIRE_THAT(v[0], WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(v[1], WithinAbs(0.7310585786300049, 1e-15));
}

TEST_CASE("softmax against hand-computed values") {
  const Vector p = srnn::stable_softmax({1.0, 2.0, 3.0});
  REQUIRE_THAT(p[0], WithinAbs(0.09003057317038046, 1e-15));
  REQUIRE_THAT(p[1], WithinAbs(0.24472847105479767, 1e-15));
  REQUIRE_THAT(p[2], WithinAbs(0.6652409557748219, 1e-15));
  REQUIRE_THAT(p[0] + p[1] + p[2], WithinAbs(1.0, 1e-12));

  SECTION("shift invariance") {
    const Vector q = srnn::stable_softmax({1001.0, 1002.0, 1003.0});
    for (std::size_t i = 0; i < 3; ++i) REQUIRE_THAT(q[i], WithinAbs(p[i], 1e-12));
  }
  SECTION("extreme scores stay finite") {
    const Vector q = srnn::stable_softmax({-1e300, 0.0, 1e300});
    REQUIRE(srnn::all_finite(q));
    REQUIRE_THAT(q[2], WithinAbs(1.0, 1e-15));
  }
  SECTION("log_softmax agrees with log of softmax") {
    const Vector lp = srnn::log_softmax({1.0, 2.0, 3.0});
    for (std::size_t i = 0; i < 3; ++i)
      REQUIRE_THAT(lp[i], WithinAbs(std::log(p[i]), 1e-12));
  }
  SECTION("rejects empty and non-finite input") {
    expect_error(ErrorCode::invalid_argument, [] { srnn::stable_softmax({}); });
    expect_error(ErrorCode::numeric, [] { srnn::stable_softmax({1.0, std::nan("")}); });
  }
}

TEST_CASE("logsumexp") {
  REQUIRE_THAT(srnn::logsumexp({1.0, 2.0, 3.0}), WithinAbs(3.40760596444438, 1e-12));
  REQUIRE_THAT(srnn::logsumexp({-1e308, -1e308}), WithinAbs(-1e308 + std::log(2.0), 1e295));
  REQUIRE(srnn::logsumexp({0.7}) == 0.7);
  const double lo = srnn::logsumexp({-1000.0, -1001.0});
  REQUIRE(std::isfinite(lo));
  REQUIRE_THAT(lo, WithinAbs(-1000.0 + std::log(1.0 + std::exp(-1.0)), 1e-12));
}

TEST_CASE("rng streams are deterministic and decorrelated") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  SECTION("different seeds differ") {
    RngStream c(42), d(43);
    bool any_diff = false;
    for (int i = 0; i < 8; ++i) any_diff |= (c.next_u64() != d.next_u64());
    REQUIRE(any_diff);
  }
  SECTION("substream derivation is pure") {
    const RngStream root(7);
    RngStream s1 = root.substream(3, 1);
    RngStream s2 = root.substream(3, 1);
    REQUIRE(s1.next_u64() == s2.next_u64());
    // Deriving children does not perturb an equal-keyed stream's draws.
    RngStream plain(7);
    RngStream fresh(7);
    (void)fresh.substream(1);
    (void)fresh.substream(2, 9, 9);
    REQUIRE(plain.next_u64() == fresh.next_u64());
  }
  SECTION("sibling substreams differ in every slot") {
    const RngStream root(7);
    REQUIRE(root.substream(3, 1).next_u64() != root.substream(3, 2).next_u64());
    REQUIRE(root.substream(3, 1).next_u64() != root.substream(4, 1).next_u64());
    REQUIRE(root.substream(3, 1, 0).next_u64() != root.substream(3, 1, 1).next_u64());
  }
}

TEST_CASE("uniform draws live in range") {
  RngStream rng(5);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 0.01);  // with 1e4 draws both tails get hit
  REQUIRE(hi > 0.99);

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    REQUIRE(u >= -2.0);
    REQUIRE(u < 3.0);
  }
  expect_error(ErrorCode::invalid_argument, [&] { rng.uniform(1.0, 1.0); });
}

TEST_CASE("next_below is unbiased across residues") {
  RngStream rng(11);
  const std::uint64_t n = 7;
  std::vector<std::size_t> counts(n, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = rng.next_below(n);
    REQUIRE(v < n);
    ++counts[v];
  }
  // chi-square with 6 dof, 0.001 critical value 22.458
  const double expect = static_cast<double>(draws) / static_cast<double>(n);
  double chi2 = 0.0;
  for (std::size_t c : counts) {
    const double d = static_cast<double>(c) - expect;
    chi2 += d * d / expect;
  }
  REQUIRE(chi2 < 22.458);
  expect_error(ErrorCode::invalid_argument, [&] { rng.next_below(0); });
}

TEST_CASE("normal draws have the requested moments") {
  RngStream rng(13);
  const int draws = 40000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double x = rng.normal(2.0, 3.0);
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / draws;
  const double var = sumsq / draws - mean * mean;
  REQUIRE_THAT(mean, WithinAbs(2.0, 0.05));
  REQUIRE_THAT(var, WithinAbs(9.0, 0.3));
  REQUIRE(rng.normal(5.0, 0.0) == 5.0);
  expect_error(ErrorCode::invalid_argument, [&] { rng.normal(0.0, -1.0); });
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
  std::vector<int> items(20);
  std::iota(items.begin(), items.end(), 0);
  const std::vector<int> original = items;

  RngStream rng(17);
  rng.shuffle(items);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == original);
  REQUIRE(items != original);  // 1/20! chance for a fair shuffle, frozen seed

  std::vector<int> again(20);
  std::iota(again.begin(), again.end(), 0);
  RngStream rng2(17);
  rng2.shuffle(again);
  REQUIRE(again == items);
}

TEST_CASE("sample_categorical") {
  RngStream rng(23);
  SECTION("degenerate distribution always picks its atom") {
    for (int i = 0; i < 50; ++i)
      REQUIRE(srnn::sample_categorical({0.0, 1.0, 0.0}, rng) == 1);
  }
  SECTION("frequencies follow the probabilities") {
    const Vector probs{0.2, 0.3, 0.5};
    std::vector<std::size_t> counts(3, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[srnn::sample_categorical(probs, rng)];
    // chi-square with 2 dof, 0.001 critical value
    double chi2 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double expect = probs[k] * draws;
      const double d = static_cast<double>(counts[k]) - expect;
      chi2 += d * d / expect;
    }
    REQUIRE(chi2 < 13.815510557964274);
  }
  SECTION("same stream gives the same draws") {
    RngStream r1(3), r2(3);
    for (int i = 0; i < 100; ++i)
      REQUIRE(srnn::sample_categorical({0.25, 0.25, 0.5}, r1) ==
              srnn::sample_categorical({0.25, 0.25, 0.5}, r2));
  }
  SECTION("validation") {
    expect_error(ErrorCode::invalid_argument,
                 [&] { srnn::sample_categorical({}, rng); });
    expect_error(ErrorCode::invalid_argument,
                 [&] { srnn::sample_categorical({0.5, -0.5, 1.0}, rng); });
    expect_error(ErrorCode::invalid_argument,
                 [&] { srnn::sample_categorical({0.5, 0.4}, rng); });
  }
}

TEST_CASE("finite differences recover known derivatives") {
  SECTION("x squared at 3 has slope 6") {
    const Vector g = srnn::finite_diff_grad(
        [](const Vector& v) { return v[0] * v[0]; }, {3.0}, 1e-5);
    REQUIRE_THAT(g[0], WithinAbs(6.0, 1e-6));
  }
  SECTION("constants have zero gradient") {
    const Vector g =
        srnn::finite_diff_grad([](const Vector&) { return 4.25; }, {1.0, -2.0}, 1e-5);
    REQUIRE(g == Vector{0.0, 0.0});
  }
  SECTION("linear functions recover their coefficients") {
    const Vector coef{2.5, -1.5, 0.75};
    const Vector g = srnn::finite_diff_grad(
        [&](const Vector& v) { return srnn::dot(coef, v); }, {0.3, 0.1, -0.9}, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE_THAT(g[i], WithinAbs(coef[i], 1e-8));
  }
  SECTION("rejects bad eps and non-finite objectives") {
    expect_error(ErrorCode::invalid_argument, [] {
      srnn::finite_diff_grad([](const Vector&) { return 0.0; }, {1.0}, 0.0);
    });
    expect_error(ErrorCode::numeric, [] {
      srnn::finite_diff_grad(
          [](const Vector&) { return std::numeric_limits<double>::infinity(); }, {1.0},
          1e-5);
    });
  }
}

TEST_CASE("all_finite flags bad entries") {
  REQUIRE(srnn::all_finite(Vector{1.0, -2.0, 0.0}));
  REQUIRE(!srnn::all_finite(Vector{1.0, std::nan("")}));
  REQUIRE(!srnn::all_finite(Vector{std::numeric_limits<double>::infinity()}));
  Matrix m(2, 2, 1.0);
  REQUIRE(srnn::all_finite(m));
  m(1, 1) = std::nan("");
  REQUIRE(!srnn::all_finite(m));
}
