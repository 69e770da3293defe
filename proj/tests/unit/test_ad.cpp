#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "deepjko/activation.hpp"
#include "deepjko/error.hpp"
#include "deepjko/tape.hpp"

using namespace deepjko;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Tensor t(r, c);
  for (double& v : t.values()) v = n01(rng);
  return t;
}

// Builds a scalar from parameters 0 and 1 on a fresh tape.
using Builder = std::function<Var(Tape&, Var, Var)>;

double value_of(const Builder& f, const Tensor& a, const Tensor& b) {
  Tape t;
  const Var out = f(t, t.parameter(0, a), t.parameter(1, b));
  return t.value(out).item();
}

// Central differences on every entry of both parameters.
void check_gradients(const Builder& f, Tensor a, Tensor b, double tol = 1e-7) {
  Tape t;
  const Var out = f(t, t.parameter(0, a), t.parameter(1, b));
  const ad::Gradients g = t.backward(out);
  for (int p = 0; p < 2; ++p) {
    Tensor& x = p == 0 ? a : b;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-6, orig = x[i];
      x[i] = orig + h;
      const double up = value_of(f, a, b);
      x[i] = orig - h;
      const double dn = value_of(f, a, b);
      x[i] = orig;
      const double fd = (up - dn) / (2 * h);
      CHECK(g.at(p)[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("tensor construction and shapes") {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(Tensor::identity(3)(1, 1) == 1.0);
  CHECK(Tensor::zeros_like(m).as_matrix().isZero(0.0));
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(m.item(), Error);
}

TEST_CASE("kernels reject mismatched shapes") {
  const Tensor a(2, 3), b(2, 2);
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code([&] { ad::matmul(a, a); }) == ErrorCode::ShapeMismatch);
  CHECK(code([&] { ad::add(a, b); }) == ErrorCode::ShapeMismatch);
  CHECK(code([&] { ad::mul(a, b); }) == ErrorCode::ShapeMismatch);
  CHECK(code([&] { ad::trace(a); }) == ErrorCode::ShapeMismatch);
  CHECK(code([&] { ad::columns(a, 2, 2); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("non-finite values are caught at the kernel") {
  Tensor a = Tensor::matrix({{1.0, std::numeric_limits<double>::infinity()}});
  CHECK_FALSE(a.all_finite());
  a(0, 1) = std::nan("");
  CHECK_FALSE(a.all_finite());
  a(0, 1) = 2.0;
  CHECK(a.all_finite());
  const Tensor big = Tensor::matrix({{1e308}});
  try {
    ad::scale(big, 10.0);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("small matrix products match hand values") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  const Tensor ab = ad::matmul(a, b);
  CHECK(ab == Tensor::matrix({{19, 22}, {43, 50}}));
  CHECK(ad::matmul_tn(a, b) == Tensor::matrix({{26, 30}, {38, 44}}));
  CHECK(ad::trace(ab).item() == 69);
  CHECK(ad::dot(a, b).item() == 70);
  CHECK(ad::col_sum(a) == Tensor::matrix({{4, 6}}));
  CHECK(ad::row_sum(a) == Tensor::matrix({{3}, {7}}));
  CHECK(ad::scale_rows(a, Tensor::matrix({{2}, {-1}})) == Tensor::matrix({{2, 4}, {-3, -4}}));
  CHECK(ad::add_col(a, Tensor::matrix({{1}, {2}})) == Tensor::matrix({{2, 3}, {5, 6}}));
}

TEST_CASE("reverse mode matches finite differences for every primitive") {
  std::mt19937_64 rng(11);
  const Tensor A = random_tensor(3, 4, rng), B = random_tensor(4, 2, rng), C = random_tensor(3, 4, rng);
  const Tensor col = random_tensor(3, 1, rng), sq = random_tensor(3, 3, rng);
  auto sig = sigma_kernel();

  SUBCASE("matmul") { check_gradients([](Tape& t, Var a, Var b) { return t.sum(t.matmul(a, b)); }, A, B); }
  SUBCASE("matmul_tn") {
    check_gradients([](Tape& t, Var a, Var b) { return t.sum(t.mul(t.matmul_tn(a, b), t.matmul_tn(a, b))); }, A, C);
  }
  SUBCASE("add sub mul scale") {
    check_gradients(
        [](Tape& t, Var a, Var b) { return t.sum(t.mul(t.add(a, t.scale(b, 0.3)), t.sub(a, b))); }, A, C);
  }
  SUBCASE("add_col scale_rows") {
    check_gradients([](Tape& t, Var a, Var c) { return t.sum(t.mul(t.add_col(a, c), t.scale_rows(a, c))); }, A, col);
  }
  SUBCASE("unary sigma") {
    check_gradients([sig](Tape& t, Var a, Var b) { return t.dot(t.unary(a, sig), b); }, A, C);
  }
  SUBCASE("col_sum row_sum") {
    check_gradients(
        [](Tape& t, Var a, Var b) {
          return t.add(t.dot(t.col_sum(a), t.col_sum(b)), t.dot(t.row_sum(a), t.row_sum(b)));
        },
        A, C);
  }
  SUBCASE("trace columns") {
    check_gradients(
        [](Tape& t, Var a, Var b) { return t.add(t.trace(t.matmul(a, b)), t.sum(t.columns(b, 1, 2))); }, sq, sq);
  }
}

TEST_CASE("backward runs once per tape") {
  Tape t;
  const Var x = t.parameter(0, Tensor::scalar(2.0));
  const Var y = t.mul(x, x);
  const auto g = t.backward(y);
  CHECK(g.at(0).item() == doctest::Approx(4.0));
  CHECK(t.consumed());
  try {
    t.backward(y);
    FAIL("expected TapeConsumed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TapeConsumed);
  }
}

TEST_CASE("backward needs a scalar output") {
  Tape t;
  const Var x = t.parameter(0, Tensor(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), Error);
}

TEST_CASE("unused parameters get zero gradients") {
  Tape t;
  const Var x = t.parameter(0, Tensor::scalar(2.0));
  t.parameter(1, Tensor(2, 3, 1.0));
  const auto g = t.backward(t.scale(x, 3.0));
  CHECK(g.at(0).item() == 3.0);
  CHECK(g.at(1).as_matrix().isZero(0.0));
  CHECK(g.at(1).rows() == 2);
}

TEST_CASE("replay reproduces recorded values exactly") {
  std::mt19937_64 rng(5);
  Tape t;
  const Var a = t.parameter(0, random_tensor(4, 3, rng));
  const Var b = t.constant(random_tensor(3, 5, rng));
  const Var out = t.sum(t.unary(t.matmul(a, b), sigma_kernel()));
  CHECK(t.replay(out) == t.value(out));
}

TEST_CASE("activation matches its definition and derivatives") {
  for (double x : {-30.0, -3.0, -0.5, 0.0, 1e-8, 0.7, 4.0, 25.0}) {
    const long double lx = x;
    const long double ref = std::log(std::exp(lx) + std::exp(-lx));
    CHECK(sigma(x) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-15));
    CHECK(sigma_prime(x) == doctest::Approx(std::tanh(x)).epsilon(1e-15));
    const double h = 1e-5;
    CHECK(sigma_prime(x) == doctest::Approx((sigma(x + h) - sigma(x - h)) / (2 * h)).epsilon(1e-8).scale(1.0));
    CHECK(sigma_second(x) == doctest::Approx((sigma_prime(x + h) - sigma_prime(x - h)) / (2 * h)).epsilon(1e-8).scale(1.0));
    CHECK(sigma_third(x) == doctest::Approx((sigma_second(x + h) - sigma_second(x - h)) / (2 * h)).epsilon(1e-8).scale(1.0));
  }
  CHECK(std::isfinite(sigma(1e6)));
  CHECK(sigma(0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("vectorised activation kernels agree with the scalar functions") {
  std::vector<double> x;
  for (int i = -400; i <= 400; ++i) x.push_back(i * 0.05);
  std::vector<double> v(x.size()), d(x.size());
  sigma_kernel()->apply(x, v, d);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(v[i] == doctest::Approx(sigma(x[i])).epsilon(1e-14));
    CHECK(d[i] == doctest::Approx(sigma_prime(x[i])).epsilon(1e-14).scale(1.0));
  }
  sigma_prime_kernel()->apply(x, v, d);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(d[i] == doctest::Approx(sigma_second(x[i])).epsilon(1e-14).scale(1.0));
}
