#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "stylex/graph.hpp"

using namespace stylex;

namespace {

// Central-difference gradient of a scalar-valued graph builder w.r.t. one
// leaf input, compared entry by entry against autodiff.
void check_gradient(const std::function<double(Graph&, VarId)>& build,
                    Tensor x0, double eps = 1e-6, double tol = 1e-6) {
  // The builder must call backward() on its scalar root when the leaf
  // requires grad, and return the root value either way.
  Graph ga;
  VarId xa = ga.leaf(x0, true);
  build(ga, xa);
  const Tensor& grad = ga.grad(xa);

  for (std::int64_t i = 0; i < x0.numel(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += eps;
    xm[i] -= eps;
    Graph g1, g2;
    double fp = build(g1, g1.leaf(xp, false));
    double fm = build(g2, g2.leaf(xm, false));
    double fd = (fp - fm) / (2 * eps);
    double ad = grad[i];
    double denom = std::max({std::abs(fd), std::abs(ad), 1e-8});
    CAPTURE(i);
    CAPTURE(fd);
    CAPTURE(ad);
    CHECK(std::abs(fd - ad) / denom < tol);
  }
}

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  t.fill_normal(rng, 0.0, scale);
  return t;
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);

  check_gradient(
      [&](Graph& g, VarId x) {
        VarId bv = g.constant(b);
        VarId c = g.matmul(x, bv);
        VarId s = g.reduce_sum(c);
        if (g.requires_grad(x)) g.backward(s);
        return g.value(s).item();
      },
      a);

  check_gradient(
      [&](Graph& g, VarId x) {
        VarId av = g.constant(a);
        VarId c = g.matmul(av, x);
        VarId s = g.reduce_sum(c);
        if (g.requires_grad(x)) g.backward(s);
        return g.value(s).item();
      },
      b);
}

TEST_CASE("bmm all transpose combinations") {
  std::mt19937_64 rng(2);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      Tensor a = ta ? random_tensor({2, 4, 3}, rng) : random_tensor({2, 3, 4}, rng);
      Tensor b = tb ? random_tensor({2, 5, 4}, rng) : random_tensor({2, 4, 5}, rng);
      check_gradient(
          [&](Graph& g, VarId x) {
            VarId bv = g.constant(b);
            VarId c = g.bmm(x, bv, ta, tb);
            VarId s = g.reduce_sum(c);
            if (g.requires_grad(x)) g.backward(s);
            return g.value(s).item();
          },
          a);
      check_gradient(
          [&](Graph& g, VarId x) {
            VarId av = g.constant(a);
            VarId c = g.bmm(av, x, ta, tb);
            VarId s = g.reduce_sum(c);
            if (g.requires_grad(x)) g.backward(s);
            return g.value(s).item();
          },
          b);
    }
  }
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({2, 3, 6}, rng);
  Tensor gain = random_tensor({6}, rng, 0.5);
  Tensor bias = random_tensor({6}, rng, 0.5);

  check_gradient(
      [&](Graph& g, VarId v) {
        VarId gv = g.constant(gain);
        VarId bv = g.constant(bias);
        VarId y = g.layer_norm(v, gv, bv);
        // weight the output so the gradient is not trivially uniform
        Tensor w(g.value(y).shape());
        std::mt19937_64 r2(7);
        w.fill_normal(r2, 0.0, 1.0);
        VarId wv = g.constant(w);
        VarId s = g.reduce_sum(g.mul(y, wv));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      x, 1e-6, 1e-5);

  check_gradient(
      [&](Graph& g, VarId v) {
        VarId xv = g.constant(x);
        VarId bv = g.constant(bias);
        VarId y = g.layer_norm(xv, v, bv);
        VarId s = g.reduce_sum(y);
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      gain, 1e-6, 1e-5);
}

TEST_CASE("gelu and sigmoid gradients") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({2, 5}, rng);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId s = g.reduce_sum(g.gelu(v));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      x);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId s = g.reduce_sum(g.sigmoid(v));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      x);
}

TEST_CASE("masked softmax gradient and mask semantics") {
  std::mt19937_64 rng(5);
  Tensor scores = random_tensor({2, 2, 3, 4}, rng);
  Tensor mask({2, 4}, {1, 1, 0, 1, 1, 1, 1, 0});

  Graph g;
  VarId sv = g.leaf(scores, false);
  VarId p = g.masked_softmax_lastdim(sv, mask);
  const Tensor& tp = g.value(p);
  // masked keys get exactly zero probability
  for (int h = 0; h < 2; ++h)
    for (int q = 0; q < 3; ++q) {
      CHECK(tp[((0 * 2 + h) * 3 + q) * 4 + 2] == 0.0);
      CHECK(tp[((1 * 2 + h) * 3 + q) * 4 + 3] == 0.0);
    }

  check_gradient(
      [&](Graph& gg, VarId v) {
        VarId pp = gg.masked_softmax_lastdim(v, mask);
        Tensor w({2, 2, 3, 4});
        std::mt19937_64 r2(11);
        w.fill_normal(r2, 0.0, 1.0);
        VarId s = gg.reduce_sum(gg.mul(pp, gg.constant(w)));
        if (gg.requires_grad(v)) gg.backward(s);
        return gg.value(s).item();
      },
      scores, 1e-6, 1e-5);
}

TEST_CASE("masked_max_seq forward, gradient routing, degenerate row") {
  Tensor x({1, 2, 2}, {1, 5, 3, 2});
  Tensor mask({1, 2}, {1, 1});
  Graph g;
  VarId v = g.leaf(x, true);
  VarId m = g.masked_max_seq(v, mask);
  CHECK(g.value(m)[0] == 3.0);
  CHECK(g.value(m)[1] == 5.0);
  VarId s = g.reduce_sum(m);
  g.backward(s);
  const Tensor& gx = g.grad(v);
  CHECK(gx[0] == 0.0);  // pos 0 feature 0 lost
  CHECK(gx[1] == 1.0);  // pos 0 feature 1 won
  CHECK(gx[2] == 1.0);
  CHECK(gx[3] == 0.0);

  Tensor fullmask({1, 2}, {0, 0});
  Graph g2;
  VarId v2 = g2.leaf(x, false);
  CHECK_THROWS_AS(g2.masked_max_seq(v2, fullmask), DegenerateInputError);
}

TEST_CASE("bce_with_logits matches analytic value and gradient") {
  // logits 0, target 0.5 -> per-entry loss ln 2
  Tensor logits({1, 2, 1}, {0.0, 0.0});
  Tensor targets({1, 2, 1}, {0.5, 0.5});
  Tensor active({1, 2}, {1, 1});
  Graph g;
  VarId lv = g.leaf(logits, true);
  VarId loss = g.bce_with_logits_mean(lv, targets, active);
  CHECK(g.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::mt19937_64 rng(6);
  Tensor rl = random_tensor({2, 3, 2}, rng);
  Tensor rt({2, 3, 2});
  rt.fill_uniform(rng, 0.0, 1.0);
  Tensor ra({2, 3}, {1, 0, 1, 1, 1, 0});
  check_gradient(
      [&](Graph& gg, VarId v) {
        VarId l = gg.bce_with_logits_mean(v, rt, ra);
        if (gg.requires_grad(v)) gg.backward(l);
        return gg.value(l).item();
      },
      rl);
}

TEST_CASE("softmax_ce_mean gradient") {
  std::mt19937_64 rng(7);
  Tensor logits = random_tensor({4, 2}, rng);
  std::vector<int> labels{0, 1, 1, 0};
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId l = g.softmax_ce_mean(v, labels);
        if (g.requires_grad(v)) g.backward(l);
        return g.value(l).item();
      },
      logits);
}

TEST_CASE("lookup, positional, concat, transpose, reshape gradients") {
  std::mt19937_64 rng(8);
  Tensor table = random_tensor({7, 3}, rng);
  std::vector<int> ids{1, 4, 4, 0, 6, 2};

  check_gradient(
      [&](Graph& g, VarId v) {
        VarId e = g.lookup_rows(v, ids, {2, 3, 3});
        VarId s = g.reduce_sum(g.gelu(e));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      table);

  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor pos = random_tensor({5, 4}, rng);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId y = g.add_positional(g.constant(x), v);
        VarId s = g.reduce_sum(g.sigmoid(y));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      pos);

  Tensor a = random_tensor({2, 2, 3}, rng);
  Tensor b = random_tensor({2, 2, 2}, rng);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId c = g.concat_lastdim(v, g.constant(b));
        VarId s = g.reduce_sum(g.gelu(c));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      a);

  Tensor t4 = random_tensor({2, 3, 2, 2}, rng);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId y = g.transpose_inner(v);
        VarId r = g.reshape(y, {2, 2, 3, 2});
        VarId s = g.reduce_sum(g.sigmoid(r));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      t4);
}

TEST_CASE("pick and add_bias") {
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor bias = random_tensor({4}, rng);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId y = g.add_bias(v, g.constant(bias));
        VarId p = g.pick(y, 7);
        if (g.requires_grad(v)) g.backward(p);
        return g.value(p).item();
      },
      x);
  check_gradient(
      [&](Graph& g, VarId v) {
        VarId y = g.add_bias(g.constant(x), v);
        VarId s = g.reduce_sum(g.sigmoid(y));
        if (g.requires_grad(v)) g.backward(s);
        return g.value(s).item();
      },
      bias);
}

TEST_CASE("dropout is identity at rate zero and scales at eval parity") {
  std::mt19937_64 rng(10);
  Tensor x = random_tensor({4, 4}, rng);
  Graph g;
  VarId v = g.leaf(x, false);
  VarId y = g.dropout(v, 0.0, rng);
  CHECK(y == v);

  // masked entries zero, kept entries scaled by 1/keep
  Graph g2;
  std::mt19937_64 r2(123);
  VarId v2 = g2.leaf(x, false);
  VarId y2 = g2.dropout(v2, 0.5, r2);
  const Tensor& ty = g2.value(y2);
  for (std::int64_t i = 0; i < ty.numel(); ++i) {
    bool zero = ty[i] == 0.0;
    bool scaled = std::abs(ty[i] - 2.0 * x[i]) < 1e-12;
    CHECK((zero || scaled));
  }
}
