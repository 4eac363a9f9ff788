#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "aptkit/flops.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/rng.hpp"
#include "oracles.hpp"

using namespace aptkit;

TEST_CASE("matmul matches the triple-loop oracle") {
  Rng rng = seeded_rng(11);
  for (int it = 0; it < 50; ++it) {
    std::size_t n = 1 + rng() % 9, k = 1 + rng() % 9, m = 1 + rng() % 9;
    Matrix a = random_normal(n, k, rng);
    Matrix b = random_normal(k, m, rng);
    // Same accumulation order, so the results agree bit for bit.
    CHECK(max_abs_diff(matmul(a, b), oracle::matmul(a, b)) == 0.0);
  }
}

TEST_CASE("matmul_accumulate adds into the destination") {
  Rng rng = seeded_rng(12);
  Matrix a = random_normal(4, 3, rng);
  Matrix b = random_normal(3, 5, rng);
  Matrix c = random_normal(4, 5, rng);
  Matrix expected = oracle::add(c, oracle::matmul(a, b));
  matmul_accumulate(a, b, c);
  // The accumulator starts from the destination entry rather than adding it
  // last, so agreement is to roundoff, not bitwise.
  CHECK(max_abs_diff(c, expected) < 1e-14);
}

TEST_CASE("matmul is associative to roundoff") {
  Rng rng = seeded_rng(13);
  for (int it = 0; it < 20; ++it) {
    Matrix a = random_normal(5, 7, rng);
    Matrix b = random_normal(7, 4, rng);
    Matrix c = random_normal(4, 6, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  Matrix a(2, 3), b(4, 2);
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(hadamard(a, b), std::invalid_argument);
}

TEST_CASE("softmax handles huge scores without overflow") {
  Matrix m{{1000.0, 999.0}};
  Matrix s = softmax_rows(m);
  // exp(1000) overflows a double; the shifted form reduces to 1/(1+e^-1).
  CHECK(s(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
  CHECK(s(0, 0) + s(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax reproduces hand-computed ratios") {
  Matrix m{{std::log(2.0), 0.0}};
  Matrix s = softmax_rows(m);
  CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax is invariant to per-row shifts") {
  Rng rng = seeded_rng(14);
  for (int it = 0; it < 20; ++it) {
    Matrix m = random_normal(6, 8, rng, 0.0, 3.0);
    Matrix shifted = m;
    for (std::size_t i = 0; i < m.rows; ++i) {
      double c = random_normal(1, 1, rng, 0.0, 50.0)(0, 0);
      for (std::size_t j = 0; j < m.cols; ++j) shifted(i, j) += c;
    }
    CHECK(max_abs_diff(softmax_rows(m), softmax_rows(shifted)) < 1e-12);
  }
}

TEST_CASE("softmax matches the long-double oracle") {
  Rng rng = seeded_rng(15);
  for (int it = 0; it < 20; ++it) {
    Matrix m = random_normal(5, 7, rng, 0.0, 4.0);
    CHECK(max_abs_diff(softmax_rows(m), oracle::softmax_rows(m)) < 1e-14);
  }
}

TEST_CASE("softmax_rows_stats reports the shift and the shifted sum") {
  Rng rng = seeded_rng(16);
  Matrix m = random_normal(4, 6, rng, 0.0, 2.0);
  std::vector<double> mx, sum;
  Matrix probs = softmax_rows_stats(m, mx, sum);
  CHECK(max_abs_diff(probs, softmax_rows(m)) == 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double want_max = m(i, 0);
    long double want_sum = 0.0L;
    for (std::size_t j = 0; j < m.cols; ++j) want_max = std::max(want_max, m(i, j));
    for (std::size_t j = 0; j < m.cols; ++j)
      want_sum += std::exp((long double)m(i, j) - want_max);
    CHECK(mx[i] == want_max);
    CHECK(sum[i] == doctest::Approx((double)want_sum).epsilon(1e-14));
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS(softmax_rows(Matrix()), std::invalid_argument);
}

TEST_CASE("relu and max kernels") {
  Matrix m{{-1.0, 2.0}, {0.0, -3.5}};
  Matrix r = relu(m);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 2.0);
  CHECK(r(1, 0) == 0.0);
  CHECK(r(1, 1) == 0.0);
  CHECK(global_max(m) == 2.0);
  CHECK(row_max(m) == std::vector<double>{2.0, 0.0});
}

TEST_CASE("global_argmax resolves ties to the lowest row-major index") {
  Matrix m{{1.0, 7.0}, {7.0, 0.0}};
  auto [i, j] = global_argmax(m);
  CHECK(i == 0);
  CHECK(j == 1);
}

TEST_CASE("slicing and concatenation round trip") {
  Rng rng = seeded_rng(17);
  Matrix a = random_normal(3, 5, rng);
  Matrix b = random_normal(4, 5, rng);
  Matrix joint = concat_rows(a, b);
  CHECK(bitwise_equal(slice_rows(joint, 0, 3), a));
  CHECK(bitwise_equal(slice_rows(joint, 3, 7), b));
  CHECK(bitwise_equal(slice_cols(joint, 0, 5), joint));
  Matrix empty(0, 5);
  CHECK(bitwise_equal(concat_rows(empty, a), a));
}

TEST_CASE("operation counting matches the documented convention") {
  Rng rng = seeded_rng(18);
  Matrix a = random_normal(3, 4, rng);
  Matrix b = random_normal(4, 5, rng);

  FlopCounter fc;
  {
    CountingScope scope(fc);
    matmul(a, b);
  }
  CHECK(fc.macs == 3u * 4u * 5u);
  CHECK(fc.total_flops() == 2u * 3u * 4u * 5u);

  fc = {};
  {
    CountingScope scope(fc);
    softmax_rows(a);
  }
  CHECK(fc.exps == 12u);
  CHECK(fc.divs == 3u);
  CHECK(fc.total_flops() == 15u);

  fc = {};
  {
    CountingScope scope(fc);
    relu(a);
    global_max(a);
  }
  CHECK(fc.cmps == 24u);

  fc = {};
  {
    CountingScope scope(fc);
    scale(a, 2.0);
    add(a, a);
    sub(a, a);
    hadamard(a, a);
  }
  CHECK(fc.macs == 24u);  // scale + hadamard
  CHECK(fc.adds == 24u);  // add + sub

  fc = {};
  {
    CountingScope scope(fc);
    transpose(a);
    concat_rows(a, a);
    slice_rows(a, 0, 2);
    slice_cols(a, 1, 3);
  }
  CHECK(fc == FlopCounter{});
}

TEST_CASE("counting scopes nest and are inert when closed") {
  Matrix a{{1.0, 2.0}};
  FlopCounter outer, inner;
  {
    CountingScope so(outer);
    scale(a, 2.0);
    {
      CountingScope si(inner);
      scale(a, 2.0);
    }
    scale(a, 2.0);
  }
  scale(a, 2.0);  // no scope: uncounted
  CHECK(outer.macs == 4u);
  CHECK(inner.macs == 2u);
  CHECK(!counting_active());
}

TEST_CASE("counter arithmetic") {
  FlopCounter a{10, 2, 1, 0, 3};
  FlopCounter b{4, 1, 1, 0, 2};
  FlopCounter sum = a + b;
  CHECK(sum.macs == 14u);
  CHECK(sum.total_flops() == 2u * 14 + 3 + 2 + 0 + 5);
  CHECK(sum - b == a);
}

TEST_CASE("reductions") {
  Matrix m{{1.0, -2.0}, {3.0, 4.0}};
  CHECK(sum(m) == 6.0);
  CHECK(frobenius_norm(m) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-15));
  CHECK(max_abs(m) == 4.0);
}
