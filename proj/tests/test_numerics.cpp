#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ficots/errors.hpp"
#include "ficots/gradcheck.hpp"
#include "ficots/parameter.hpp"
#include "ficots/rng.hpp"
#include "ficots/tensor.hpp"

using namespace ficots;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false,
                     double lo = -2.0, double hi = 2.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Reduces an op output to a scalar with fixed random weights so every
// element contributes a distinct upstream gradient. Weights depend only on
// the seed, keeping the loss deterministic across repeated evaluations.
Tensor weighted_scalar(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(t.size());
  for (auto& e : w) e = rng.uniform(-1.0, 1.0);
  return mean_all(multiply(t, Tensor::from_values(t.shape(), std::move(w))));
}

// Runs finite_diff_check for a loss built from `params` and asserts it
// passes at 1e-4. The op under test is exercised inside `make_loss`.
void check_gradients(const std::function<Tensor()>& make_loss,
                     std::vector<Parameter*> params) {
  auto report = finite_diff_check(make_loss, params, 1e-5, 1e-4);
  INFO("worst parameter: " << report.worst_parameter << "["
                           << report.worst_index << "]");
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.pass);
}

}  // namespace

TEST_SUITE("tensor basics") {
  TEST_CASE("shape bookkeeping") {
    Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0}), ShapeError);
  }

  TEST_CASE("matmul identity and selector") {
    Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor prod = matmul(id, a);
    CHECK(prod.values() == std::vector<double>{1, 2, 3, 4});

    Tensor sel = Tensor::matrix(1, 2, {1, 0});
    Tensor col = Tensor::matrix(2, 1, {5, 7});
    CHECK(matmul(sel, col).scalar_value() == 5.0);
  }

  TEST_CASE("matmul rejects mismatched shapes") {
    Tensor a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
    Tensor b = Tensor::matrix(2, 2, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[2x3]"), ShapeError);
  }

  TEST_CASE("matmul gradient matches the finite-difference oracle") {
    // f(A) = sum(A*B) for A=[[1,2]], B=[[3],[4]]; grad wrt A is [[3,4]].
    Parameter a("a", Tensor::matrix(1, 2, {1, 2}, true));
    Tensor b = Tensor::matrix(2, 1, {3, 4});
    auto make_loss = [&]() { return matmul(a.tensor, b); };

    check_gradients(make_loss, {&a});
    a.tensor.zero_grad();
    Tensor loss = make_loss();
    backward(loss);
    CHECK(a.tensor.grad()[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(a.tensor.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_SUITE("softmax and sigmoid") {
  TEST_CASE("softmax symmetry and overflow safety") {
    CHECK(softmax_rows(Tensor::row({0, 0})).values()[0] == doctest::Approx(0.5));
    Tensor big = softmax_rows(Tensor::row({1000, 1000}));
    CHECK(big.values()[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(big.values()[1]));
  }

  TEST_CASE("softmax against scalar arithmetic") {
    // e^{ln 3} = 3, so row [0, ln 3] maps to [1/4, 3/4].
    Tensor s = softmax_rows(Tensor::row({0.0, std::log(3.0)}));
    CHECK(s.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.values()[1] == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("softmax rows are stochastic and shift invariant") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x = random_tensor({4, 7}, rng, false, -5.0, 5.0);
      Tensor s = softmax_rows(x);
      for (std::size_t i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
          CHECK(s.at(i, j) >= 0.0);
          sum += s.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
      const double shift = rng.uniform(-3.0, 3.0);
      std::vector<double> shifted = x.values();
      for (auto& e : shifted) e += shift;
      Tensor s2 = softmax_rows(Tensor::from_values(x.shape(), shifted));
      for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(s2.values()[i] == doctest::Approx(s.values()[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("sigmoid fixed points and saturation") {
    CHECK(sigmoid(Tensor::scalar(0.0)).scalar_value() == 0.5);
    CHECK(sigmoid(Tensor::scalar(std::log(3.0))).scalar_value() ==
          doctest::Approx(0.75).epsilon(1e-12));
    const double far = sigmoid(Tensor::scalar(-1000.0)).scalar_value();
    CHECK(far > 0.0);
    CHECK(far <= 1e-300);
    const double near_one = sigmoid(Tensor::scalar(1000.0)).scalar_value();
    CHECK(near_one < 1.0);
  }

  TEST_CASE("sigmoid complement identity") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const double x = rng.uniform(-30.0, 30.0);
      const double a = sigmoid(Tensor::scalar(x)).scalar_value();
      const double b = sigmoid(Tensor::scalar(-x)).scalar_value();
      CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("sigmoid gradient at zero is a quarter") {
    Parameter x("x", Tensor::row({0.0, 0.0, 0.0}));
    x.tensor = Tensor::from_values({1, 3}, {0, 0, 0}, true);
    Parameter p("p", x.tensor);
    auto make_loss = [&]() { return mean_all(sigmoid(p.tensor)); };
    p.tensor.zero_grad();
    backward(scale(make_loss(), 3.0));  // undo the mean's 1/3
    for (double g : p.tensor.grad())
      CHECK(g == doctest::Approx(0.25).epsilon(1e-12));
    check_gradients(make_loss, {&p});
  }
}

TEST_SUITE("layer_norm") {
  TEST_CASE("two point normalization") {
    Tensor x = Tensor::row({1, 3});
    Tensor gamma = Tensor::row({1, 1});
    Tensor beta = Tensor::row({0, 0});
    Tensor y = layer_norm(x, gamma, beta, 0.0);
    CHECK(y.values()[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("constant row collapses to beta") {
    Tensor y = layer_norm(Tensor::row({5, 5, 5}), Tensor::row({1, 1, 1}),
                          Tensor::row({0, 0, 0}), 1e-5);
    for (double v : y.values()) CHECK(v == 0.0);
  }

  TEST_CASE("affine case against direct recomputation") {
    const std::vector<double> xs{0, 2, 4};
    const double eps = 1e-5;
    double mean = (xs[0] + xs[1] + xs[2]) / 3.0;
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= 3.0;
    Tensor y = layer_norm(Tensor::row(xs), Tensor::row({2, 2, 2}),
                          Tensor::row({1, 1, 1}), eps);
    for (std::size_t j = 0; j < 3; ++j) {
      const double expect = 2.0 * (xs[j] - mean) / std::sqrt(var + eps) + 1.0;
      CHECK(y.values()[j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_SUITE("gradients vs central differences") {
  TEST_CASE("every differentiable op passes the oracle") {
    Rng rng(202);
    Parameter a("a", random_tensor({3, 4}, rng, true));
    Parameter b("b", random_tensor({3, 4}, rng, true));
    Parameter w("w", random_tensor({4, 5}, rng, true));
    Parameter bias("bias", random_tensor({1, 4}, rng, true));
    Parameter gamma("gamma", random_tensor({1, 4}, rng, true, 0.5, 1.5));
    Parameter beta("beta", random_tensor({1, 4}, rng, true));

    SUBCASE("matmul") {
      check_gradients(
          [&]() { return weighted_scalar(matmul(a.tensor, w.tensor), 101); },
          {&a, &w});
    }
    SUBCASE("transpose") {
      check_gradients(
          [&]() { return weighted_scalar(transpose(a.tensor), 102); }, {&a});
    }
    SUBCASE("add subtract multiply") {
      check_gradients(
          [&]() {
            Tensor t = add(a.tensor, b.tensor);
            t = subtract(t, multiply(a.tensor, b.tensor));
            return weighted_scalar(t, 103);
          },
          {&a, &b});
    }
    SUBCASE("scale and add_row_bias") {
      check_gradients(
          [&]() {
            return weighted_scalar(
                add_row_bias(scale(a.tensor, -1.7), bias.tensor), 104);
          },
          {&a, &bias});
    }
    SUBCASE("relu") {
      check_gradients([&]() { return weighted_scalar(relu(a.tensor), 105); },
                      {&a});
    }
    SUBCASE("sigmoid") {
      check_gradients([&]() { return weighted_scalar(sigmoid(a.tensor), 106); },
                      {&a});
    }
    SUBCASE("softmax_rows") {
      check_gradients(
          [&]() { return weighted_scalar(softmax_rows(a.tensor), 107); }, {&a});
    }
    SUBCASE("layer_norm") {
      check_gradients(
          [&]() {
            return weighted_scalar(
                layer_norm(a.tensor, gamma.tensor, beta.tensor, 1e-5), 108);
          },
          {&a, &gamma, &beta});
    }
    SUBCASE("concat both axes") {
      check_gradients(
          [&]() {
            return weighted_scalar(
                concat(concat(a.tensor, b.tensor, 0),
                       concat(a.tensor, b.tensor, 0), 1), 109);
          },
          {&a, &b});
    }
    SUBCASE("slices and index select") {
      check_gradients(
          [&]() {
            Tensor rows = slice_rows(a.tensor, 1, 3);
            Tensor cols = slice_cols(a.tensor, 0, 2);
            Tensor sel = index_select_rows(a.tensor, {2, 0, 2});
            return add(weighted_scalar(rows, 110),
                       add(weighted_scalar(cols, 111),
                           weighted_scalar(sel, 112)));
          },
          {&a});
    }
    SUBCASE("means") {
      check_gradients(
          [&]() {
            return add(weighted_scalar(mean_axis(a.tensor, 0), 113),
                       add(weighted_scalar(mean_axis(a.tensor, 1), 114),
                           mean_all(a.tensor)));
          },
          {&a});
    }
    SUBCASE("scatter_mean") {
      std::vector<std::vector<std::size_t>> groups{{0, 2}, {}, {1, 1, 2}};
      check_gradients(
          [&]() {
            return weighted_scalar(scatter_mean(a.tensor, groups), 115);
          },
          {&a});
    }
    SUBCASE("scatter_weighted_sum") {
      std::vector<std::vector<std::size_t>> groups{{0, 1}, {2}};
      std::vector<std::vector<double>> weights{{0.3, 0.9}, {1.4}};
      check_gradients(
          [&]() {
            return weighted_scalar(
                scatter_weighted_sum(a.tensor, groups, weights), 116);
          },
          {&a});
    }
    SUBCASE("reshape") {
      check_gradients(
          [&]() {
            return weighted_scalar(reshape(a.tensor, {2, 6}), 117);
          },
          {&a});
    }
  }

  TEST_CASE("quadratic sanity: d/dx x^2 = 2x") {
    Parameter x("x", Tensor::from_values({1, 1}, {3.0}, true));
    auto make_loss = [&]() { return multiply(x.tensor, x.tensor); };
    check_gradients(make_loss, {&x});
    x.tensor.zero_grad();
    backward(make_loss());
    CHECK(x.tensor.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_SUITE("structural invariants") {
  TEST_CASE("concat then split recovers originals exactly") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t ra = 1 + rng.uniform_index(4);
      const std::size_t rb = 1 + rng.uniform_index(4);
      const std::size_t n = 1 + rng.uniform_index(5);
      Tensor a = random_tensor({ra, n}, rng);
      Tensor b = random_tensor({rb, n}, rng);
      Tensor joined = concat(a, b, 0);
      CHECK(slice_rows(joined, 0, ra).values() == a.values());
      CHECK(slice_rows(joined, ra, ra + rb).values() == b.values());

      Tensor c = random_tensor({n, ra}, rng);
      Tensor d = random_tensor({n, rb}, rng);
      Tensor wide = concat(c, d, 1);
      CHECK(slice_cols(wide, 0, ra).values() == c.values());
      CHECK(slice_cols(wide, ra, ra + rb).values() == d.values());
    }
  }

  TEST_CASE("mean of a constant tensor is exact") {
    for (double c : {0.1, 5.0, -3.7, 1e-9}) {
      Tensor t = Tensor::full({3, 7}, c);
      CHECK(mean_all(t).scalar_value() == c);
      Tensor m0 = mean_axis(t, 0);
      Tensor m1 = mean_axis(t, 1);
      for (double v : m0.values()) CHECK(v == c);
      for (double v : m1.values()) CHECK(v == c);
    }
  }

  TEST_CASE("scatter_mean of empty group is a zero row") {
    Tensor src = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    Tensor out = scatter_mean(src, {{}, {0, 1}});
    CHECK(out.values() == std::vector<double>{0, 0, 0, 2.5, 3.5, 4.5});
  }

  TEST_CASE("shape violations name the offender") {
    Tensor a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
    Tensor b = Tensor::matrix(2, 2, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(concat(a, b, 0), ShapeError);   // columns disagree
    CHECK_THROWS_AS(concat(a, a, 2), ShapeError);   // bad axis
    CHECK_THROWS_AS(slice_rows(a, 1, 4), ShapeError);
    CHECK_THROWS_AS(slice_cols(a, 2, 1), ShapeError);
    CHECK_THROWS_AS(index_select_rows(a, {5}), ShapeError);
    CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);
    CHECK_THROWS_AS(mean_axis(a, 3), ShapeError);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(add_row_bias(a, Tensor::row({1, 2})), ShapeError);
    CHECK_THROWS_AS(layer_norm(a, Tensor::row({1, 1}), Tensor::row({0, 0})),
                    ShapeError);
    CHECK_THROWS_AS(scatter_mean(a, {{0, 9}}), ShapeError);
    CHECK_THROWS_AS(
        scatter_weighted_sum(a, {{0}}, {{0.5, 0.5}}), ShapeError);
  }

  TEST_CASE("backward demands a finite scalar") {
    Tensor bad = Tensor::from_values(
        {1, 1}, {std::numeric_limits<double>::quiet_NaN()}, true);
    CHECK_THROWS_AS(backward(bad), NumericError);
    Tensor vec = Tensor::row({1, 2});
    CHECK_THROWS_AS(backward(vec), ShapeError);
  }

  TEST_CASE("grad accumulates across two backward passes") {
    Parameter x("x", Tensor::from_values({1, 1}, {2.0}, true));
    backward(multiply(x.tensor, x.tensor));
    backward(multiply(x.tensor, x.tensor));
    CHECK(x.tensor.grad()[0] == doctest::Approx(8.0));
    x.tensor.zero_grad();
    CHECK(x.tensor.grad()[0] == 0.0);
  }
}

TEST_SUITE("finite_diff_check contract") {
  TEST_CASE("passes on sum of sigmoids at zero") {
    Parameter x("x", Tensor::zeros({2, 2}, true));
    auto make_loss = [&]() {
      return scale(mean_all(sigmoid(x.tensor)), 4.0);
    };
    auto report = finite_diff_check(make_loss, {&x}, 1e-5, 1e-4);
    CHECK(report.pass);
    CHECK(report.checked_elements == 4);
    x.tensor.zero_grad();
    backward(make_loss());
    for (double g : x.tensor.grad())
      CHECK(g == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("rejects non-finite loss") {
    Parameter x("x", Tensor::scalar(1.0));
    x.tensor = Tensor::from_values({1, 1}, {1.0}, true);
    Parameter p("p", x.tensor);
    auto bad_loss = [&]() {
      return Tensor::from_values({1, 1},
                                 {std::numeric_limits<double>::infinity()});
    };
    CHECK_THROWS_AS(finite_diff_check(bad_loss, {&p}, 1e-5, 1e-4),
                    NumericError);
  }
}
