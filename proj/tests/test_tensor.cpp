#include "support.hpp"

#include "scmm/errors.hpp"
#include "scmm/tensor.hpp"

#include <doctest.h>

using namespace scmm;
using scmm::test::gradient_error;
using scmm::test::random_tensor;

TEST_SUITE("tensor") {

TEST_CASE("broadcasting follows trailing-axis alignment") {
  const Tensor a(Shape{2, 3}, (Eigen::ArrayXd(6) << 1, 2, 3, 4, 5, 6).finished());
  const Tensor row(Shape{3}, (Eigen::ArrayXd(3) << 10, 20, 30).finished());
  const Tensor col(Shape{2, 1}, (Eigen::ArrayXd(2) << 100, 200).finished());

  const Tensor s = a + row;
  CHECK(s.shape() == Shape{2, 3});
  CHECK(s.at({1, 2}) == 36.0);
  const Tensor p = a * col;
  CHECK(p.at({0, 1}) == 200.0);
  CHECK(p.at({1, 0}) == 800.0);
  const Tensor outer = col * row;
  CHECK(outer.shape() == Shape{2, 3});
  CHECK(outer.at({1, 2}) == 6000.0);

  CHECK_THROWS_AS(a + Tensor::zeros(Shape{2}), DimensionError);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Tensor x = Tensor::scalar(3.0, true);
  const Tensor y = x * x + x;  // dy/dx = 2x + 1
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("backward contracts") {
  Rng rng(1);
  Tensor x = random_tensor({2, 2}, rng);
  CHECK_THROWS_AS(backward(x * 2.0), ContractError);
  Tensor y = exp(x);
  CHECK_THROWS_AS(y.values_mut(), ContractError);
  CHECK_NOTHROW(x.values_mut());

  // detach cuts history
  Tensor d = sum(x.detach() * x);
  x.zero_grad();
  backward(d);
  for (Index i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(x.values()[i]));
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), DomainError);
  CHECK_THROWS_AS(sqrt(Tensor::scalar(-1.0)), DomainError);
  CHECK_THROWS_AS(div(Tensor::scalar(1.0), Tensor::scalar(0.0)), DomainError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), Shape{4}), DimensionError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("tape lists reachable operations in execution order") {
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor unused = exp(x);
  const Tensor a = square(x);
  const Tensor b = log(a);
  const Tensor loss = sum(b);
  const auto t = tape(loss);
  REQUIRE(t.size() == 3);
  CHECK(t[0].op == "square");
  CHECK(t[1].op == "log");
  CHECK(t[2].op == "sum");
  CHECK(t[0].sequence < t[1].sequence);
  CHECK(unused.size() == 1);
}

TEST_CASE("matmul matches a triple loop") {
  Rng rng(2);
  const Tensor a = random_tensor({3, 4}, rng, false);
  const Tensor b = random_tensor({4, 5}, rng, false);
  const Tensor c = matmul(a, b);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 5; ++j) {
      double s = 0.0;
      for (Index k = 0; k < 4; ++k) s += a.at({i, k}) * b.at({k, j});
      CHECK(c.at({i, j}) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d matches direct cross-correlation") {
  Rng rng(3);
  const Index batch = 2, cin = 3, len = 7, cout = 4, k = 3;
  for (Index stride : {1, 2}) {
    for (Index pad : {0, 1, 2}) {
      const Tensor x = random_tensor({batch, cin, len}, rng, false);
      const Tensor w = random_tensor({cout, cin, k}, rng, false);
      const Tensor bias = random_tensor({cout}, rng, false);
      const Tensor y = conv1d(x, w, bias, stride, pad);
      const Index lout = (len + 2 * pad - k) / stride + 1;
      REQUIRE(y.shape() == Shape{batch, cout, lout});
      for (Index b = 0; b < batch; ++b) {
        for (Index o = 0; o < cout; ++o) {
          for (Index t = 0; t < lout; ++t) {
            double s = bias.at({o});
            for (Index c = 0; c < cin; ++c) {
              for (Index j = 0; j < k; ++j) {
                const Index src = t * stride + j - pad;
                if (src >= 0 && src < len) s += w.at({o, c, j}) * x.at({b, c, src});
              }
            }
            CHECK(y.at({b, o, t}) == doctest::Approx(s).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("softmax rows and masked softmax") {
  Rng rng(4);
  const Tensor logits = random_tensor({3, 4}, rng, false, 5.0);
  const RowMatrix p = softmax_rows(logits).matrix();
  for (Index i = 0; i < 3; ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  const RowMatrix lp = log_softmax_rows(logits).matrix();
  CHECK((lp.array().exp() - p.array()).abs().maxCoeff() < 1e-14);

  BoolMatrix keep = BoolMatrix::Constant(3, 4, true);
  keep(0, 1) = false;
  keep(2, 3) = false;
  const RowMatrix mp = masked_softmax_rows(logits, keep).matrix();
  CHECK(mp(0, 1) == 0.0);
  CHECK(mp(2, 3) == 0.0);
  for (Index i = 0; i < 3; ++i) CHECK(mp.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  BoolMatrix none = BoolMatrix::Constant(3, 4, true);
  none.row(1).setConstant(false);
  CHECK_THROWS_AS(masked_softmax_rows(logits, none), ContractError);
}

TEST_CASE("sum_axis and mean_axis values") {
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 4}, rng, false);
  for (Index axis = 0; axis < 3; ++axis) {
    const Tensor s = sum_axis(x, axis);
    CHECK(s.rank() == 2);
    const Tensor m = mean_axis(x, axis);
    CHECK((m.values() * static_cast<double>(x.dim(axis)) - s.values()).abs().maxCoeff() < 1e-12);
  }
  const Tensor s1 = sum_axis(x, 1);
  CHECK(s1.at({1, 2}) == doctest::Approx(x.at({1, 0, 2}) + x.at({1, 1, 2}) + x.at({1, 2, 2})));
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(6);
  auto check = [](const std::vector<Tensor>& leaves, const std::function<Tensor()>& f) {
    CHECK(gradient_error(leaves, f) < 1e-6);
  };
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor c = random_tensor({3, 1}, rng);
  Tensor pos = Tensor(Shape{3, 4}, Eigen::ArrayXd::Random(12).abs() + 0.5, true);

  SUBCASE("elementwise with broadcasting") {
    check({a, b, c}, [&] { return sum(square(a + b) * c - a / (b * b + shift(c * c, 1.0))); });
    check({a, b}, [&] { return mean(exp(scale(a, 0.3)) - neg(b) * a); });
    check({pos}, [&] { return sum(log(pos) + sqrt(pos) + sigmoid(pos)); });
  }
  SUBCASE("relu away from the kink") {
    Tensor r(Shape{5}, (Eigen::ArrayXd(5) << -2, -0.5, 0.3, 1, 4).finished(), true);
    check({r}, [&] { return sum(square(relu(r))); });
  }
  SUBCASE("reductions and shape operations") {
    Tensor x = random_tensor({2, 3, 4}, rng);
    for (Index axis = 0; axis < 3; ++axis) {
      check({x}, [&] { return sum(square(sum_axis(x, axis))) + sum(exp(mean_axis(x, axis))); });
    }
    check({x}, [&] { return sum(square(reshape(transpose_last(x), Shape{4, 6})) * 0.5); });
    Tensor y = random_tensor({1, 3, 4}, rng);
    check({x, y}, [&] { return sum(square(slice(concat({x, y}), 1, 2))); });
  }
  SUBCASE("linear algebra") {
    Tensor m1 = random_tensor({3, 5}, rng);
    Tensor m2 = random_tensor({5, 2}, rng);
    check({m1, m2}, [&] { return sum(square(matmul(m1, m2))); });
    Tensor x = random_tensor({2, 3, 6}, rng);
    Tensor w = random_tensor({4, 3, 3}, rng);
    Tensor bias = random_tensor({4}, rng);
    check({x, w, bias}, [&] { return sum(square(conv1d(x, w, bias, 2, 1))); });
    check({x, w}, [&] { return sum(square(conv1d(x, w, 1, 0))); });
  }
  SUBCASE("row-wise normalizations") {
    Tensor l = random_tensor({3, 4}, rng);
    Tensor t = random_tensor({3, 4}, rng, false);
    BoolMatrix keep = BoolMatrix::Constant(3, 4, true);
    keep(0, 0) = false;
    keep(1, 2) = false;
    check({l}, [&] { return sum(softmax_rows(l) * t); });
    check({l}, [&] { return sum(log_softmax_rows(l) * t); });
    check({l}, [&] { return sum(masked_softmax_rows(l, keep) * t); });
    check({l}, [&] { return sum(masked_log_softmax_rows(l, keep) * t); });
    check({l}, [&] { return sum(normalize_rows(l) * t); });
  }
}

}  // TEST_SUITE
