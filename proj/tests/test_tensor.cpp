#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "somoformer/adam.hpp"
#include "somoformer/grad_check.hpp"
#include "somoformer/ops.hpp"
#include "somoformer/rng.hpp"
#include "somoformer/tensor.hpp"
#include "support/test_util.hpp"

using namespace somoformer;
using somoformer::testing::fd_derivative;
using somoformer::testing::max_abs_diff;
using somoformer::testing::random_tensor;

namespace {

// Property harness: loss = sum(w ⊙ op(inputs)); compares every input-element
// gradient from the tape against a central finite difference of the same loss.
void check_op_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                        std::vector<Tensor> inputs, double tol = 1e-4, double h = 1e-5) {
  Rng rng(911);
  Tensor probe;
  {
    Tensor out = op(inputs);
    probe = random_tensor(rng, out.shape());
  }
  const auto loss_value = [&]() { return mul(op(inputs), probe).data(); };
  const auto loss_scalar = [&]() {
    double s = 0.0;
    for (double v : loss_value()) s += v;
    return s;
  };

  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(op(inputs), probe));
    backward(loss, tape);
  }
  for (auto& t : inputs) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double numeric = fd_derivative([&] { return loss_scalar(); }, t, i, h);
      const double analytic = t.grad()[i];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      CAPTURE(i);
      CAPTURE(analytic);
      CAPTURE(numeric);
      CHECK(rel < tol);
    }
  }
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  for (double v : t.data()) CHECK(v == 1.5);

  Tensor u({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(u.data()[3] == 4.0);

  CHECK_THROWS_AS(Tensor({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0}).value(), std::runtime_error);
  CHECK(Tensor::scalar(7.0).value() == 7.0);

  Tensor shared = u;
  shared.data()[0] = 9.0;
  CHECK(u.data()[0] == 9.0);
  CHECK(u.same_storage(shared));
}

TEST_CASE("elementwise ops forward values") {
  Tensor a({3}, {1.0, -2.0, 3.0});
  Tensor b({3}, {0.5, 4.0, -1.0});
  CHECK(add(a, b).data() == std::vector<double>{1.5, 2.0, 2.0});
  CHECK(sub(a, b).data() == std::vector<double>{0.5, -6.0, 4.0});
  CHECK(mul(a, b).data() == std::vector<double>{0.5, -8.0, -3.0});
  CHECK(scale(a, -2.0).data() == std::vector<double>{-2.0, 4.0, -6.0});
  CHECK(relu(a).data() == std::vector<double>{1.0, 0.0, 3.0});

  Tensor c({2}, {1.0, 2.0});
  CHECK_THROWS_AS(add(a, c), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, c), std::invalid_argument);
}

TEST_CASE("sum of x gives all-ones gradient") {
  Tensor x({2, 3}, {1.0, -1.0, 2.0, 0.5, 3.0, -2.0});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(x);
    backward(loss, tape);
  }
  CHECK(x.grad() == std::vector<double>(6, 1.0));
}

TEST_CASE("sum of x*x at [1,2] gives gradient [2,4]") {
  Tensor x({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(x, x));
    CHECK(loss.value() == 5.0);
    backward(loss, tape);
  }
  CHECK(x.grad() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("repeated backward accumulates into leaves only") {
  Tensor x({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(mul(x, x));
    backward(loss, tape);
    backward(loss, tape);
  }
  CHECK(x.grad() == std::vector<double>{4.0, 8.0});
}

TEST_CASE("no tape means no recording") {
  Tensor x({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("matmul forward oracle") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  // Triple-loop reference, computed independently of the kernel's loop order.
  std::vector<double> expect(4, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 3; ++k) expect[i * 2 + j] += a.data()[i * 3 + k] * b.data()[k * 2 + j];
  CHECK(c.data() == expect);

  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS(matmul(Tensor({3}, 1.0), b), std::invalid_argument);
}

TEST_CASE("matmul batch broadcast") {
  Rng rng(7);
  Tensor a = random_tensor(rng, {4, 2, 3});
  Tensor b = random_tensor(rng, {3, 5});          // broadcast over the batch of 4
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{4, 2, 5});
  for (int n = 0; n < 4; ++n) {
    Tensor an({2, 3}, std::vector<double>(a.data().begin() + n * 6, a.data().begin() + (n + 1) * 6));
    Tensor cn = matmul(an, b);
    for (int i = 0; i < 10; ++i) CHECK(c.data()[n * 10 + i] == cn.data()[i]);
  }

  Tensor bad = random_tensor(rng, {3, 3, 5});
  CHECK_THROWS_AS(matmul(a, bad), std::invalid_argument);
}

TEST_CASE("transpose oracle and involution") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(a, 0, 1);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.data() == std::vector<double>{1, 4, 2, 5, 3, 6});
  Tensor back = transpose(t, 0, 1);
  CHECK(back.data() == a.data());

  Rng rng(3);
  Tensor h = random_tensor(rng, {2, 3, 4, 5});
  Tensor hh = transpose(transpose(h, 1, 3), 1, 3);
  CHECK(hh.data() == h.data());
  CHECK_THROWS_AS(transpose(a, 0, 2), std::invalid_argument);
}

TEST_CASE("reshape, slice_last, concat_last") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(a, {3, 2});
  CHECK(r.data() == a.data());
  CHECK_THROWS_AS(reshape(a, {4, 2}), std::invalid_argument);

  Tensor s = slice_last(a, 1, 2);
  CHECK(s.shape() == Shape{2, 2});
  CHECK(s.data() == std::vector<double>{2, 3, 5, 6});
  CHECK_THROWS_AS(slice_last(a, 2, 2), std::invalid_argument);

  Tensor b({2, 2}, {9, 10, 11, 12});
  Tensor c = concat_last(a, b);
  CHECK(c.shape() == Shape{2, 5});
  CHECK(c.data() == std::vector<double>{1, 2, 3, 9, 10, 4, 5, 6, 11, 12});
  CHECK_THROWS_AS(concat_last(a, Tensor({3, 2}, 0.0)), std::invalid_argument);

  Tensor joined = concat_last(slice_last(c, 0, 3), slice_last(c, 3, 2));
  CHECK(joined.data() == c.data());
}

TEST_CASE("add_bias broadcasts over rows") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3}, {10, 20, 30});
  CHECK(add_bias(x, b).data() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK_THROWS_AS(add_bias(x, Tensor({2}, 0.0)), std::invalid_argument);
}

TEST_CASE("gather_rows selects and scatter-adds") {
  Tensor table({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor out = gather_rows(table, {2, 0, 2});
  CHECK(out.shape() == Shape{3, 2});
  CHECK(out.data() == std::vector<double>{5, 6, 1, 2, 5, 6});
  CHECK_THROWS_AS(gather_rows(table, {3}), std::out_of_range);

  table.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = sum(gather_rows(table, {2, 0, 2}));
    backward(loss, tape);
  }
  // Row 2 was selected twice, so its gradient accumulates twice.
  CHECK(table.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("masked_softmax normalization and exact zeros") {
  Rng rng(5);
  Tensor scores = random_tensor(rng, {4, 6}, -3.0, 3.0);
  std::vector<bool> keep{true, false, true, true, false, true};
  Tensor p = masked_softmax(scores, keep);
  for (int r = 0; r < 4; ++r) {
    double total = 0.0;
    for (int k = 0; k < 6; ++k) {
      const double v = p.data()[r * 6 + k];
      if (!keep[static_cast<std::size_t>(k)]) {
        CHECK(v == 0.0);  // exactly zero, not just small
      } else {
        CHECK(v > 0.0);
        total += v;
      }
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }

  // Masked scores must not influence the kept probabilities at all.
  Tensor poisoned = Tensor(scores.shape(), scores.data());
  poisoned.data()[1] = 1e300;
  poisoned.data()[4] = -1e300;
  Tensor p2 = masked_softmax(poisoned, keep);
  CHECK(max_abs_diff(p.data(), p2.data()) == 0.0);

  CHECK_THROWS_AS(masked_softmax(scores, std::vector<bool>(6, false)), std::runtime_error);
  CHECK_THROWS_AS(masked_softmax(scores, std::vector<bool>(5, true)), std::invalid_argument);
}

TEST_CASE("layer_norm forward oracle") {
  Tensor x({2, 4}, {1, 2, 3, 4, -1, 0, 1, 2});
  Tensor gain({4}, {1, 1, 2, 1});
  Tensor bias({4}, {0, 0.5, 0, -0.5});
  Tensor y = layer_norm(x, gain, bias, 0.0);
  // Row oracle computed with plain loops.
  for (int r = 0; r < 2; ++r) {
    double mu = 0.0;
    for (int j = 0; j < 4; ++j) mu += x.data()[r * 4 + j];
    mu /= 4.0;
    double var = 0.0;
    for (int j = 0; j < 4; ++j) var += (x.data()[r * 4 + j] - mu) * (x.data()[r * 4 + j] - mu);
    var /= 4.0;
    for (int j = 0; j < 4; ++j) {
      const double xh = (x.data()[r * 4 + j] - mu) / std::sqrt(var);
      const double want = gain.data()[j] * xh + bias.data()[j];
      CHECK(std::abs(y.data()[r * 4 + j] - want) < 1e-12);
    }
  }
  CHECK_THROWS_AS(layer_norm(x, Tensor({3}, 1.0), bias, 1e-5), std::invalid_argument);
}

TEST_CASE("gradients match finite differences for every op") {
  Rng rng(1234);

  SUBCASE("add") {
    check_op_gradients([](const std::vector<Tensor>& in) { return add(in[0], in[1]); },
                       {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  }
  SUBCASE("sub") {
    check_op_gradients([](const std::vector<Tensor>& in) { return sub(in[0], in[1]); },
                       {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  }
  SUBCASE("mul") {
    check_op_gradients([](const std::vector<Tensor>& in) { return mul(in[0], in[1]); },
                       {random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
  }
  SUBCASE("scale") {
    check_op_gradients([](const std::vector<Tensor>& in) { return scale(in[0], -1.7); },
                       {random_tensor(rng, {3, 2})});
  }
  SUBCASE("add_bias") {
    check_op_gradients([](const std::vector<Tensor>& in) { return add_bias(in[0], in[1]); },
                       {random_tensor(rng, {4, 3}), random_tensor(rng, {3})});
  }
  SUBCASE("matmul") {
    check_op_gradients([](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                       {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
  }
  SUBCASE("matmul batched with broadcast") {
    check_op_gradients([](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); },
                       {random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4, 2})});
  }
  SUBCASE("transpose") {
    check_op_gradients([](const std::vector<Tensor>& in) { return transpose(in[0], 0, 2); },
                       {random_tensor(rng, {2, 3, 4})});
  }
  SUBCASE("reshape") {
    check_op_gradients([](const std::vector<Tensor>& in) { return reshape(in[0], {6, 2}); },
                       {random_tensor(rng, {3, 4})});
  }
  SUBCASE("slice_last") {
    check_op_gradients([](const std::vector<Tensor>& in) { return slice_last(in[0], 1, 2); },
                       {random_tensor(rng, {3, 4})});
  }
  SUBCASE("concat_last") {
    check_op_gradients([](const std::vector<Tensor>& in) { return concat_last(in[0], in[1]); },
                       {random_tensor(rng, {3, 2}), random_tensor(rng, {3, 3})});
  }
  SUBCASE("relu") {
    check_op_gradients([](const std::vector<Tensor>& in) { return relu(in[0]); },
                       {random_tensor(rng, {3, 4})});
  }
  SUBCASE("gather_rows") {
    check_op_gradients(
        [](const std::vector<Tensor>& in) { return gather_rows(in[0], {0, 2, 2, 1}); },
        {random_tensor(rng, {3, 4})});
  }
  SUBCASE("masked_softmax") {
    std::vector<bool> keep{true, true, false, true, true};
    check_op_gradients(
        [keep](const std::vector<Tensor>& in) { return masked_softmax(in[0], keep); },
        {random_tensor(rng, {3, 5})});
  }
  SUBCASE("layer_norm") {
    check_op_gradients(
        [](const std::vector<Tensor>& in) { return layer_norm(in[0], in[1], in[2], 1e-5); },
        {random_tensor(rng, {3, 6}), random_tensor(rng, {6}, 0.5, 1.5),
         random_tensor(rng, {6})});
  }
  SUBCASE("sum") {
    check_op_gradients([](const std::vector<Tensor>& in) { return sum(in[0]); },
                       {random_tensor(rng, {2, 5})});
  }
}

TEST_CASE("adam zero gradient from fresh state leaves params unchanged") {
  Tensor p({3}, {1.0, -2.0, 0.5});
  const std::vector<double> before = p.data();
  p.grad();  // allocate zeros
  AdamState state;
  adam_step(p, state, AdamConfig{});
  CHECK(p.data() == before);  // bitwise
  CHECK(state.k == 1);
}

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  AdamConfig cfg;
  Tensor p({1}, {0.7});
  p.grad()[0] = 3.0;
  AdamState state;
  adam_step(p, state, cfg);
  // Bias correction makes m_hat = g and v_hat = g^2, so the step is
  // lr * g / (|g| + eps) ≈ lr * sign(g).
  CHECK(p.data()[0] == doctest::Approx(0.7 - cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam matches a scalar reference over several steps") {
  // Hand-rolled scalar Adam, written directly from the published update rules.
  struct ScalarAdam {
    double m = 0.0, v = 0.0;
    int k = 0;
    double step(double x, double g, const AdamConfig& c) {
      ++k;
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      const double mh = m / (1.0 - std::pow(c.beta1, k));
      const double vh = v / (1.0 - std::pow(c.beta2, k));
      return x - c.lr * mh / (std::sqrt(vh) + c.epsilon);
    }
  };

  AdamConfig cfg;
  cfg.lr = 0.05;
  ScalarAdam ref;
  double xr = 2.0;

  Tensor p({1}, {2.0});
  AdamState state;
  for (int it = 0; it < 3; ++it) {
    const double g = 2.0 * p.data()[0];  // d/dx of x^2
    xr = ref.step(xr, 2.0 * xr, cfg);
    p.zero_grad();
    p.grad()[0] = g;
    adam_step(p, state, cfg);
    CHECK(p.data()[0] == xr);  // identical arithmetic path, so bitwise equal
  }

  AdamState stale;
  stale.m.assign(2, 0.0);
  stale.v.assign(2, 0.0);
  CHECK_THROWS_AS(adam_step(p, stale, cfg), std::invalid_argument);
}

TEST_CASE("grad_check is exact for a linear model") {
  Rng rng(77);
  Tensor W = random_tensor(rng, {3, 4});
  Tensor x = random_tensor(rng, {4, 1});
  W.set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor>> params{{"W", W}};
  GradCheckReport rep = grad_check([&] { return sum(matmul(W, x)); }, params, 1e-5);
  CHECK(rep.max_rel_err < 1e-9);
}

TEST_CASE("grad_check on a two-layer MLP stays under 1e-4") {
  Rng rng(78);
  Tensor W1 = random_tensor(rng, {5, 4});
  Tensor b1 = random_tensor(rng, {5});
  Tensor W2 = random_tensor(rng, {2, 5});
  Tensor b2 = random_tensor(rng, {2});
  Tensor x = random_tensor(rng, {4, 3});
  for (Tensor* t : {&W1, &b1, &W2, &b2}) t->set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor>> params{
      {"W1", W1}, {"b1", b1}, {"W2", W2}, {"b2", b2}};

  auto loss_fn = [&] {
    Tensor h = relu(add_bias(transpose(matmul(W1, x), 0, 1), b1));  // [3, 5]
    Tensor y = add_bias(matmul(h, transpose(W2, 0, 1)), b2);        // [3, 2]
    return sum(mul(y, y));
  };
  GradCheckReport rep = grad_check(loss_fn, params, 1e-5);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_err < 1e-4);

  CHECK_THROWS_AS(grad_check(loss_fn, params, 0.0), std::invalid_argument);
}

TEST_CASE("identical seeds give bit-identical outputs and gradients") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor(rng, {4, 4});
    Tensor b = random_tensor(rng, {4, 4});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = matmul(relu(matmul(a, b)), b);
    Tensor loss = sum(mul(y, y));
    backward(loss, tape);
    std::vector<double> out = y.data();
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    out.push_back(loss.value());
    return out;
  };
  CHECK(run(123) == run(123));
  CHECK(run(123) != run(124));
}

TEST_CASE("rng utilities are well behaved") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_int(7) < 7);
  }
  auto perm = rng.permutation(20);
  std::vector<bool> seen(20, false);
  for (int v : perm) {
    CHECK(v >= 0);
    CHECK(v < 20);
    CHECK_FALSE(seen[static_cast<std::size_t>(v)]);
    seen[static_cast<std::size_t>(v)] = true;
  }

  const std::string snap = rng.state();
  const double next1 = rng.uniform();
  Rng other(1);
  other.restore(snap);
  CHECK(other.uniform() == next1);
}
