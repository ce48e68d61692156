#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "miml/errors.hpp"
#include "miml/matrix.hpp"
#include "miml/rng.hpp"
#include "test_util.hpp"

using namespace miml;
using testutil::random_matrix;

TEST_CASE("matmul basics") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix eye = Matrix::from_rows({{1, 0}, {0, 1}});
  CHECK(matmul(a, eye) == a);

  Matrix v = Matrix::from_rows({{5}, {7}});
  CHECK(matmul(eye, v) == v);

  Matrix ones = Matrix::from_rows({{1}, {1}});
  Matrix got = matmul(a, ones);
  CHECK(got == Matrix::from_rows({{3}, {7}}));

  CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), std::invalid_argument);
  CHECK_THROWS_WITH_AS(matmul(Matrix(2, 3), Matrix(4, 1)),
                       "matmul: incompatible shapes 2x3 * 4x1", std::invalid_argument);
}

TEST_CASE("matmul associativity on random conformable triples") {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n1 = 1 + rng.uniform_int(6), n2 = 1 + rng.uniform_int(6),
                      n3 = 1 + rng.uniform_int(6), n4 = 1 + rng.uniform_int(6);
    Matrix a = random_matrix(n1, n2, rng), b = random_matrix(n2, n3, rng),
           c = random_matrix(n3, n4, rng);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    double scale = 0.0;
    for (double v : left.data) scale = std::max(scale, std::fabs(v));
    CHECK(testutil::max_abs_diff(left, right) <= 1e-9 * std::max(scale, 1.0));
  }
}

TEST_CASE("relu definition and mask") {
  Matrix x = Matrix::from_rows({{-1, 2}});
  ReluResult r = relu(x);
  CHECK(r.value == Matrix::from_rows({{0, 2}}));
  CHECK(r.mask == std::vector<std::uint8_t>{0, 1});

  ReluResult zero = relu(Matrix::from_rows({{0}}));
  CHECK(zero.value == Matrix::from_rows({{0}}));
  CHECK(zero.mask[0] == 0);  // subgradient at 0 is 0
}

TEST_CASE("relu idempotence on random matrices") {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    Matrix x = random_matrix(3, 4, rng);
    Matrix once = relu(x).value;
    CHECK(relu(once).value == once);
    CHECK(once.all_finite());
  }
}

TEST_CASE("row_max_argmax") {
  Matrix x = Matrix::from_rows({{0.2, -0.5}, {0.7, -0.9}});
  RowMaxResult r = row_max_argmax(x);
  CHECK(r.values == Vector{0.7, -0.5});
  CHECK(r.indices == std::vector<std::size_t>{1, 0});

  RowMaxResult single = row_max_argmax(Matrix::from_rows({{3, 1, 4}}));
  CHECK(single.values == Vector{3, 1, 4});
  CHECK(single.indices == std::vector<std::size_t>{0, 0, 0});

  RowMaxResult tie = row_max_argmax(Matrix::from_rows({{2}, {2}, {2}}));
  CHECK(tie.indices == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(row_max_argmax(Matrix()), std::invalid_argument);
}

TEST_CASE("row_max_argmax matches a brute-force scan") {
  Rng rng(13);
  for (int t = 0; t < 25; ++t) {
    Matrix x = random_matrix(1 + rng.uniform_int(8), 1 + rng.uniform_int(5), rng);
    RowMaxResult r = row_max_argmax(x);
    for (std::size_t c = 0; c < x.cols; ++c) {
      double best = -1e300;
      for (std::size_t i = 0; i < x.rows; ++i) best = std::max(best, x(i, c));
      CHECK(r.values[c] == best);
      CHECK(x(r.indices[c], c) == best);
      for (std::size_t i = 0; i < r.indices[c]; ++i) CHECK(x(i, c) < best);
    }
  }
}

TEST_CASE("finite_diff_grad on closed forms") {
  auto sum_squares = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return s;
  };
  Matrix x = Matrix::from_rows({{3}});
  Matrix g = finite_diff_grad(sum_squares, x, 1e-5);
  CHECK(std::fabs(g(0, 0) - 6.0) < 1e-6);

  auto sum = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v;
    return s;
  };
  Rng rng(14);
  Matrix y = random_matrix(2, 3, rng);
  Matrix gs = finite_diff_grad(sum, y, 1e-5);
  for (double v : gs.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("finite_diff_grad polynomial accuracy within 10 h^2") {
  // f = sum of cubes, df/dx = 3 x^2, third derivative bounded by 6
  auto cubes = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v * v;
    return s;
  };
  Rng rng(15);
  for (double h : {1e-3, 1e-4}) {
    Matrix x = random_matrix(2, 2, rng);
    Matrix g = finite_diff_grad(cubes, x, h);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      CHECK(std::fabs(g.data[i] - 3.0 * x.data[i] * x.data[i]) <= 10.0 * h * h);
  }
}

TEST_CASE("finite_diff_grad rejects non-finite evaluations") {
  auto bad = [](const Matrix& m) { return std::log(m(0, 0)); };
  Matrix x = Matrix::from_rows({{1e-7}});
  CHECK_THROWS_AS(finite_diff_grad(bad, x, 1e-5), NumericError);
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  std::vector<double> xs(n);
  for (double& x : xs) x = r.normal();
  for (double x : xs) mean += x;
  mean /= n;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= n - 1;
  CHECK(std::fabs(mean) < 0.03);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  // uniform_int bounds
  for (int i = 0; i < 1000; ++i) CHECK(r.uniform_int(7) < 7);
}

TEST_CASE("derive_seed separates purposes and coordinates") {
  CHECK(derive_seed(1, "shuffle") != derive_seed(1, "dropout"));
  CHECK(derive_seed(1, "shuffle", {1}) != derive_seed(1, "shuffle", {2}));
  CHECK(derive_seed(1, "shuffle", {1, 2}) != derive_seed(1, "shuffle", {2, 1}));
  CHECK(derive_seed(1, "shuffle", {1}) == derive_seed(1, "shuffle", {1}));
}
