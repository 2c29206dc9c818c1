#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ergl/grad_check.hpp"
#include "ergl/ops.hpp"

using namespace ergl;
using ad::Shape;
using DT = ad::Tensor<double>;
using Params = std::vector<std::pair<std::string, DT>>;

namespace {

DT randn(Shape shape, Rng& rng, bool rg = true) {
  DT t = DT::randn(std::move(shape), rng);
  t.set_requires_grad(rg);
  return t;
}

// FD check of a scalar-valued closure against every listed parameter entry.
template <typename F>
void fd_check(F&& f, std::vector<std::pair<std::string, DT>> params, double tol = 1e-4) {
  auto report = ad::grad_check(std::forward<F>(f), params, 1e-5, tol);
  if (!report.pass) {
    for (const auto& bad : report.failures)
      MESSAGE(bad.param << "[" << bad.index << "]: analytic=" << bad.analytic
                        << " numeric=" << bad.numeric << " rel=" << bad.rel_err);
  }
  CHECK(report.pass);
  CHECK(report.checked > 0);
}

}  // namespace

TEST_CASE("matmul forward examples") {
  DT eye({2, 2}, {1, 0, 0, 1});
  DT a({2, 2}, {1, 2, 3, 4});
  DT out = ad::matmul(eye, a);
  for (int i = 0; i < 4; ++i) CHECK(out.values()[i] == a.values()[i]);

  DT row({1, 2}, {1, 2});
  DT col({2, 1}, {3, 4});
  CHECK(ad::matmul(row, col).item() == doctest::Approx(11.0));

  DT bad({3, 2});
  CHECK_THROWS_AS(ad::matmul(a, bad), DimensionError);
  try {
    ad::matmul(a, bad);
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,2]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients vs finite differences") {
  Rng rng(7);
  DT a = randn({5, 4}, rng);
  DT b = randn({4, 3}, rng);
  DT w = DT::randn({5, 3}, rng);  // fixed weights make the loss non-symmetric
  fd_check([&] { return ad::sum_all(ad::mul(ad::matmul(a, b), w)); },
           {{"a", a}, {"b", b}});
}

TEST_CASE("softmax examples and stability") {
  DT z({3}, {0, 0, 0});
  DT s = ad::softmax(z, 0);
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3));

  DT big({2}, {1000, 1000});
  DT sb = ad::softmax(big, 0);
  CHECK(sb.values()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(sb.values()[1]));
}

TEST_CASE("softmax rows sum to one on random input") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    DT x = DT::randn({4, 9}, rng, 3.0);
    DT s = ad::softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
      double sum = 0;
      for (int c = 0; c < 9; ++c) {
        double v = s.values()[r * 9 + c];
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  Rng rng(11);
  DT x = randn({3, 7}, rng);
  DT w = DT::randn({3, 7}, rng);
  for (int axis : {0, 1})
    fd_check([&, axis] { return ad::sum_all(ad::mul(ad::softmax(x, axis), w)); }, {{"x", x}});
}

TEST_CASE("conv2d delta kernel is the identity") {
  Rng rng(5);
  DT x = DT::randn({2, 3, 6, 5}, rng);
  DT k({3, 3, 3, 3}, 0.0);
  // delta at the center of each matching in/out channel pair
  for (int c = 0; c < 3; ++c) k.data()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
  DT y = ad::conv2d(x, k);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d all-ones kernel on constant image") {
  DT x({1, 1, 5, 5}, 2.0);
  DT k({1, 1, 3, 3}, 1.0);
  DT y = ad::conv2d(x, k);
  // interior pixels see the full 3x3 support
  for (int r = 1; r < 4; ++r)
    for (int c = 1; c < 4; ++c) CHECK(y.values()[r * 5 + c] == doctest::Approx(18.0));
  CHECK(y.values()[0] == doctest::Approx(8.0));  // corner: 2x2 support
}

TEST_CASE("conv2d channel mismatch raises") {
  DT x({1, 2, 4, 4});
  DT k({1, 3, 3, 3});
  CHECK_THROWS_AS(ad::conv2d(x, k), DimensionError);
}

TEST_CASE("conv2d gradient vs finite differences") {
  Rng rng(13);
  DT x = randn({1, 2, 5, 5}, rng);
  DT k = randn({3, 2, 3, 3}, rng);
  DT w = DT::randn({1, 3, 5, 5}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::conv2d(x, k), w)); }, {{"x", x}, {"k", k}});
}

TEST_CASE("batch_norm identity on standardized batch") {
  // exactly zero-mean, unit population variance per column
  DT x({4, 3}, {1, 1, -1, -1, -1, 1, 1, 1, -1, -1, -1, 1});
  DT gamma({3}, 1.0), beta({3}, 0.0);
  DT rm({3}, 0.0), rv({3}, 1.0);
  DT y = ad::batch_norm(x, gamma, beta, rm, rv, 0.9, 1e-5, true);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-4));
}

TEST_CASE("batch_norm eval with stored stats") {
  DT x({3, 2}, 4.0);
  DT gamma({2}, 1.0), beta({2}, 0.0);
  DT rm({2}, 4.0), rv({2}, 1.0);
  DT y = ad::batch_norm(x, gamma, beta, rm, rv, 0.9, 0.0, false);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("batch_norm degenerate batch raises") {
  DT x({1, 3});
  DT gamma({3}, 1.0), beta({3}, 0.0), rm({3}, 0.0), rv({3}, 1.0);
  CHECK_THROWS_AS(ad::batch_norm(x, gamma, beta, rm, rv, 0.9, 1e-5, true), ContractError);
  CHECK_NOTHROW(ad::batch_norm(x, gamma, beta, rm, rv, 0.9, 1e-5, false));
}

TEST_CASE("batch_norm gradient vs finite differences (train and eval)") {
  Rng rng(17);
  DT x = randn({4, 3}, rng);
  DT gamma = randn({3}, rng);
  DT beta = randn({3}, rng);
  DT w = DT::randn({4, 3}, rng);
  for (bool training : {true, false}) {
    DT rm({3}, 0.1), rv({3}, 1.3);
    fd_check(
        [&, training] {
          DT m = rm.clone(), v = rv.clone();  // keep stats frozen across FD evals
          return ad::sum_all(ad::mul(ad::batch_norm(x, gamma, beta, m, v, 0.9, 1e-5, training), w));
        },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  }
}

TEST_CASE("elementwise forward examples") {
  DT x({3}, {-1, 0, 2});
  DT r = ad::relu(x);
  CHECK(r.values() == std::vector<double>{0, 0, 2});

  DT ones({4, 3}, 1.0);
  DT m = ad::mean_axis(ones, 0);
  REQUIRE(m.shape() == Shape{3});
  for (double v : m.values()) CHECK(v == doctest::Approx(1.0));

  CHECK(ad::sigmoid(DT({1}, {0.0})).item() == doctest::Approx(0.5));
}

TEST_CASE("every elementwise and shape op passes finite differences") {
  Rng rng(23);
  DT a = randn({4, 5}, rng);
  DT b = randn({4, 5}, rng);
  DT w = DT::randn({4, 5}, rng);
  DT offset({4, 5}, 3.0);  // keeps div's denominator away from zero

  fd_check([&] { return ad::sum_all(ad::mul(ad::add(a, b), w)); }, {{"a", a}, {"b", b}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::sub(a, b), w)); }, {{"a", a}, {"b", b}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::mul(a, b), w)); }, {{"a", a}, {"b", b}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::div(a, ad::add(ad::mul(b, b), offset)), w)); },
           {{"a", a}, {"b", b}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::relu(a), w)); }, {{"a", a}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::sigmoid(a), w)); }, {{"a", a}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::scale(a, 2.5), w)); }, {{"a", a}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::add_scalar(a, -1.5), w)); }, {{"a", a}});
  fd_check([&] { return ad::mean_all(ad::mul(a, a)); }, {{"a", a}});

  DT w3 = DT::randn({5, 4}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::permute(a, {1, 0}), w3)); }, {{"a", a}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::reshape(a, {5, 4}), w3)); }, {{"a", a}});

  DT wa = DT::randn({4}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::mean_axis(a, 1), wa)); }, {{"a", a}});
  DT wb = DT::randn({5}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::sum_axis(a, 0), wb)); }, {{"a", a}});

  DT wcat = DT::randn({8, 5}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::concat<double>({a, b}, 0), wcat)); },
           {{"a", a}, {"b", b}});

  DT wex = DT::randn({4, 3, 5}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::expand(a, 1, 3), wex)); }, {{"a", a}});
}

TEST_CASE("pooling ops pass finite differences") {
  Rng rng(29);
  DT x = randn({2, 2, 6, 4}, rng);
  DT w = DT::randn({2, 2, 3, 2}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::avg_pool2d(x, 2), w)); }, {{"x", x}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::max_pool2d(x, 2), w)); }, {{"x", x}});

  // odd extents are truncated
  DT odd({1, 1, 5, 5});
  CHECK(ad::avg_pool2d(odd, 2).shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("linear, affine and bmm pass finite differences") {
  Rng rng(31);
  DT x = randn({3, 4, 5}, rng);
  DT w = randn({5, 6}, rng);
  DT bias = randn({6}, rng);
  DT wy = DT::randn({3, 4, 6}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::linear(x, w), wy)); }, {{"x", x}, {"w", w}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::affine(x, w, bias), wy)); },
           {{"x", x}, {"w", w}, {"b", bias}});

  DT a = randn({2, 3, 4}, rng);
  DT b = randn({2, 4, 5}, rng);
  DT bt = randn({2, 5, 4}, rng);
  DT wz = DT::randn({2, 3, 5}, rng);
  fd_check([&] { return ad::sum_all(ad::mul(ad::bmm(a, b), wz)); }, {{"a", a}, {"b", b}});
  fd_check([&] { return ad::sum_all(ad::mul(ad::bmm(a, bt, true), wz)); }, {{"a", a}, {"bt", bt}});
}

TEST_CASE("cross_entropy closed forms and gradient") {
  DT uniform({1, 10}, 0.0);
  CHECK(ad::cross_entropy(uniform, {3}).item() == doctest::Approx(std::log(10.0)));

  DT confident({1, 4}, 0.0);
  confident.data()[2] = 50.0;
  CHECK(ad::cross_entropy(confident, {2}).item() == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(37);
  DT logits = randn({6, 5}, rng);
  fd_check([&] { return ad::cross_entropy(logits, {0, 4, 2, 2, 1, 3}); }, {{"logits", logits}});

  CHECK_THROWS_AS(ad::cross_entropy(logits, {0, 1, 2, 3, 4, 9}), ContractError);
}

TEST_CASE("backward populates leaf gradients") {
  Rng rng(41);
  DT x = randn({3, 4}, rng);

  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    tape.backward(ad::sum_all(x));
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));

  x.zero_grad();
  {
    ad::TapeScope<double> scope(tape);
    tape.backward(ad::scale(ad::sum_all(ad::mul(x, x)), 0.5));
  }
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(x.values()[i]));
}

TEST_CASE("backward contract violations") {
  Rng rng(43);
  DT x = randn({2, 2}, rng);
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    DT y = ad::mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar loss
    DT loss = ad::sum_all(y);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);  // tape consumed
  }
}

TEST_CASE("backward is additive across losses") {
  Rng rng(47);
  DT x = randn({4, 4}, rng);
  DT w1 = DT::randn({4, 4}, rng);
  DT w2 = DT::randn({4, 4}, rng);

  auto run = [&](bool first, bool second) {
    x.zero_grad();
    ad::Tape<double> tape;
    ad::TapeScope<double> scope(tape);
    DT loss = DT::scalar(0.0);
    DT l1 = ad::sum_all(ad::mul(ad::sigmoid(x), w1));
    DT l2 = ad::sum_all(ad::mul(ad::mul(x, x), w2));
    if (first && second)
      loss = ad::add(l1, l2);
    else
      loss = first ? l1 : l2;
    tape.backward(loss);
    return x.grad();
  };

  auto g1 = run(true, false);
  auto g2 = run(false, true);
  auto gsum = run(true, true);
  for (size_t i = 0; i < gsum.size(); ++i)
    CHECK(gsum[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-6));
}

TEST_CASE("gradients accumulate when a tensor is reused") {
  DT x({2}, {3.0, -1.0});
  x.set_requires_grad(true);
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    DT y = ad::add(x, x);
    tape.backward(ad::sum_all(y));
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("grad_check on a quadratic form passes at tight tolerance") {
  Rng rng(53);
  DT x = randn({6}, rng);
  DT q = DT::randn({6, 6}, rng);
  auto f = [&] {
    DT xr = ad::reshape(x, {1, 6});
    return ad::sum_all(ad::mul(ad::matmul(xr, q), xr));
  };
  auto report = ad::grad_check(f, Params{{"x", x}}, 1e-5, 1e-6);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("grad_check through softmax+matmul chain") {
  Rng rng(59);
  DT x = randn({4, 5}, rng);
  DT w = randn({5, 3}, rng);
  DT mask = DT::randn({4, 3}, rng);
  auto f = [&] { return ad::sum_all(ad::mul(ad::softmax(ad::matmul(x, w), 1), mask)); };
  auto report = ad::grad_check(f, Params{{"x", x}, {"w", w}}, 1e-5, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("grad_check flags a corrupted adjoint") {
  Rng rng(61);
  DT x = randn({4}, rng);
  DT w = DT::randn({4}, rng);

  // forward computes 2x but the recorded adjoint lies by 10%
  auto bad_double = [](const DT& in) {
    DT y(in.shape());
    for (int64_t i = 0; i < in.numel(); ++i) y.data()[i] = 2.0 * in.values()[i];
    auto* tp = ad::Tape<double>::active();
    if (tp && in.requires_grad()) {
      y.set_requires_grad(true);
      auto xd = in.ptr(), yd = y.ptr();
      tp->record([xd, yd] {
        if (yd->grad.empty()) return;
        if (xd->grad.empty()) xd->grad.assign(xd->data.size(), 0.0);
        for (size_t i = 0; i < yd->grad.size(); ++i) xd->grad[i] += 1.8 * yd->grad[i];
      });
    }
    return y;
  };

  auto f = [&] { return ad::sum_all(ad::mul(bad_double(x), w)); };
  auto report = ad::grad_check(f, Params{{"x", x}}, 1e-5, 1e-4);
  CHECK_FALSE(report.pass);
  CHECK(report.failures.size() == 4);
}

TEST_CASE("sampled grad_check visits a subset of entries") {
  Rng rng(67);
  DT x = randn({20}, rng);
  auto f = [&] { return ad::sum_all(ad::mul(x, x)); };
  Rng pick(1);
  auto report = ad::grad_check(f, Params{{"x", x}}, 1e-5, 1e-4, 5, &pick);
  CHECK(report.pass);
  CHECK(report.checked == 5);
}
