#include <doctest.h>

#include <cmath>

#include "dbsn/rng.hpp"
#include "dbsn/tensor.hpp"

using namespace dbsn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::leaf(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul and elementwise forward values") {
  Tensor a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::leaf({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.values()[0] == doctest::Approx(3.0));
  CHECK(c.values()[1] == doctest::Approx(7.0));

  Tensor s = softmax(Tensor::leaf({3}, {0, 0, 0}), 0);
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3));

  Tensor lse = logsumexp(Tensor::leaf({2}, {5.0, 5.0}), 0);
  CHECK(lse.item() == doctest::Approx(5.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("backward identities") {
  SUBCASE("sum gives ones") {
    Tape tape;
    Tensor x = Tensor::leaf({3}, {1, 2, 3}, true);
    tape.backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares gives 2x") {
    Tape tape;
    Tensor x = Tensor::leaf({2}, {2, -1}, true);
    tape.backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    CHECK(x.grad()[1] == doctest::Approx(-2.0));
  }
  SUBCASE("logsumexp gradient is softmax") {
    Tape tape;
    Tensor x = random_tensor({5}, 11);
    Tensor xg = Tensor::leaf(x.shape(), x.values(), true);
    tape.backward(logsumexp(xg, 0));
    Tensor sm = softmax(x, 0);
    for (int i = 0; i < 5; ++i) CHECK(xg.grad()[i] == doctest::Approx(sm.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("tape accumulates across repeated backward calls") {
  Tape tape;
  Tensor x = Tensor::leaf({2}, {1.0, 2.0}, true);
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));  // 2 * (2 x)
  CHECK(x.grad()[1] == doctest::Approx(8.0));
  CHECK(tape.size() == 2);  // mul + sum
}

TEST_CASE("backward rejects non-scalar roots and empty tapes") {
  Tape tape;
  Tensor x = Tensor::leaf({2}, {1, 2}, true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  Tensor s = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(tape.backward(s), std::runtime_error);  // nothing recorded
}

TEST_CASE("shape mismatches are rejected, no implicit broadcasting") {
  Tensor a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::leaf({2}, {1, 2});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, Tensor::leaf({3, 1}, {1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(add_bias(a, Tensor::leaf({3}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("non-finite forward output is an error state") {
  Tensor x = Tensor::leaf({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(x, x), std::runtime_error);
  CHECK_THROWS_AS(log(Tensor::leaf({1}, {0.0})), std::runtime_error);
}

TEST_CASE("finite differences validate every primitive") {
  const double tol = 1e-6;
  auto check = [tol](const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    CHECK(finite_difference_check<double>(f, x, 1e-5) < tol);
  };

  Tensor v = random_tensor({6}, 21);
  Tensor m = random_tensor({3, 4}, 22);
  Tensor w = random_tensor({4, 2}, 23);
  Tensor m2 = random_tensor({3, 4}, 24);
  Tensor bias = random_tensor({4}, 25);

  check([](const Tensor& x) { return sum(mul(x, x)); }, v);
  check([&m2](const Tensor& x) { return sum(add(x, m2)); }, m);
  check([&m2](const Tensor& x) { return sum(mul(sub(x, m2), m2)); }, m);
  check([&w](const Tensor& x) { return sum(matmul(x, w)); }, m);
  check([&m](const Tensor& x) { return sum(matmul(m, x)); }, w);
  check([](const Tensor& x) { return sum(relu(x)); }, v);
  check([](const Tensor& x) { return sum(exp(x)); }, v);
  check([](const Tensor& x) { return sum(log(exp(x))); }, v);
  check([](const Tensor& x) { return sum(softplus(x)); }, v);
  check([](const Tensor& x) { return logsumexp(x, 0); }, v);
  check([](const Tensor& x) { return sum(softmax(x, 0)); }, v);
  check([](const Tensor& x) { return sum(mul(softmax(x, 0), x)); }, v);
  check([](const Tensor& x) { return sum(mul(log_softmax(x, 1), log_softmax(x, 1))); }, m);
  check([](const Tensor& x) { return sum(logsumexp(x, 1)); }, m);
  check([](const Tensor& x) { return sum(logsumexp(x, 0)); }, m);
  check([](const Tensor& x) { return sum(sum_axis(mul(x, x), 0)); }, m);
  check([](const Tensor& x) { return mean(mul(x, x)); }, m);
  check([](const Tensor& x) { return sum(mul_scalar(add_scalar(x, 1.5), -2.0)); }, v);
  check([&bias](const Tensor& x) { return sum(mul(add_bias(x, bias), add_bias(x, bias))); }, m);
  check([&m](const Tensor& x) { return sum(mul(add_bias(m, x), add_bias(m, x))); }, bias);
  check([](const Tensor& x) { return sum(mul(normalize_rows(x, 1e-5), normalize_rows(x, 1e-5))); },
        m);
  check([](const Tensor& x) { return index(mul(x, x), 2); }, v);
  check([](const Tensor& x) { return sum(gather(mul(x, x), {1, 3, 0})); }, m);
  check([](const Tensor& x) { return sum(concat(std::vector<Tensor>{x, mul(x, x)}, 1)); }, m);
  check(
      [](const Tensor& x) {
        Tensor stacked = concat(std::vector<Tensor>{x, x}, 0);
        return sum(mul(stacked, stacked));
      },
      m);
  check(
      [](const Tensor& x) {
        Tensor s = scale(x, index(x, 0));
        return sum(mul(s, s));
      },
      v);
  Tensor mask = Tensor::leaf({6}, {1, 0, 1, 1, 0, 1});
  check([&mask](const Tensor& x) { return sum(mul(dropout(x, mask, 0.5), x)); }, v);
}

TEST_CASE("finite_difference_check flags an injected wrong gradient") {
  Tensor x = Tensor::leaf({3}, {1.0, 2.0, 3.0});
  // forward computes sum(x^2) but the second factor is detached, so the
  // analytic gradient is x instead of 2x
  auto broken = [](const Tensor& t) {
    Tensor detached = Tensor::leaf(t.shape(), t.values());
    return sum(mul(t, detached));
  };
  CHECK(finite_difference_check<double>(broken, x, 1e-5) > 1e-2);
}

TEST_CASE("finite_difference_check rejects nondeterministic maps") {
  int calls = 0;
  auto jitter = [&calls](const Tensor& t) {
    ++calls;
    return add_scalar(sum(t), calls * 0.1);
  };
  Tensor x = Tensor::leaf({2}, {1.0, 2.0});
  CHECK_THROWS_AS(finite_difference_check<double>(jitter, x, 1e-5), std::runtime_error);
}

TEST_CASE("log_softmax equals x - logsumexp") {
  Tensor x = random_tensor({7}, 31);
  Tensor ls = log_softmax(x, 0);
  const double lse = logsumexp(x, 0).item();
  for (int i = 0; i < 7; ++i) {
    CHECK(ls.values()[i] == doctest::Approx(x.values()[i] - lse).epsilon(1e-12));
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  auto run = [] {
    Tape tape;
    Tensor x = Tensor::leaf({4, 3}, random_tensor({4, 3}, 77).values(), true);
    Tensor w = Tensor::leaf({3, 2}, random_tensor({3, 2}, 78).values(), true);
    Tensor loss = mean(mul(softmax(matmul(x, w), 1), matmul(x, w)));
    tape.backward(loss);
    std::vector<double> out = {loss.item()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("float32 instantiation works for the core ops") {
  using T32 = TensorT<float>;
  TapeT<float> tape;
  T32 x = T32::leaf({2, 2}, {1.f, 2.f, 3.f, 4.f}, true);
  T32 y = sum(mul(x, x));
  CHECK(y.item() == doctest::Approx(30.f));
  tape.backward(y);
  CHECK(x.grad()[3] == doctest::Approx(8.f));
  CHECK(softmax(T32::leaf({2}, {0.f, 0.f}), 0).values()[0] == doctest::Approx(0.5f));
}

TEST_CASE("gumbel substreams are deterministic and independent") {
  Rng a = substream(42, {stream::kGumbel, 3, 1, 0});
  Rng b = substream(42, {stream::kGumbel, 3, 1, 0});
  Rng c = substream(42, {stream::kGumbel, 3, 1, 1});
  const double va = a.gumbel();
  CHECK(va == b.gumbel());
  CHECK(va != c.gumbel());
}
