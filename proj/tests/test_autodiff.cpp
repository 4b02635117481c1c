#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovp/autodiff.hpp"
#include "ovp/nn.hpp"
#include "ovp/rng.hpp"

using namespace ovp;
using nn::Bound;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed,
                     double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// Gradient check for a scalar-valued graph built by `make_loss` from a single
// input tensor.
double gradcheck(const Tensor& x,
                 const std::function<Var(Tape&, Var)>& make_loss,
                 int max_entries = -1) {
  Tape t;
  Var xin = t.leaf(x, true);
  Var loss = make_loss(t, xin);
  t.backward(loss);
  Tensor analytic = xin.grad();
  auto f = [&](const Tensor& pert) {
    Tape t2;
    Var v = t2.leaf(pert, true);
    return make_loss(t2, v).val()(0);
  };
  return nn::finite_diff_max_rel_err(f, x, analytic, 1e-5, max_entries);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Tensor x = random_tensor({3, 5}, 11);
  CHECK(gradcheck(x, [](Tape& t, Var v) {
          return t.mean_all(t.square(t.silu(v)));
        }) < 1e-6);
  CHECK(gradcheck(x, [](Tape& t, Var v) {
          return t.sum_all(t.mul(t.tanh_act(v), t.sigmoid_act(v)));
        }) < 1e-6);
  CHECK(gradcheck(x, [](Tape& t, Var v) {
          Var y = t.add(t.scale(v, 1.7), v);
          return t.mean_all(t.square(t.sub(y, t.scale(v, 0.3))));
        }) < 1e-6);
}

TEST_CASE("matmul and linear match finite differences") {
  Tensor x = random_tensor({4, 6}, 21);
  Tensor w = random_tensor({3, 6}, 22);
  Tensor b = random_tensor({3}, 23);
  CHECK(gradcheck(x, [&](Tape& t, Var v) {
          Var out = t.linear(v, t.constant(w), t.constant(b));
          return t.mean_all(t.square(out));
        }) < 1e-6);
  CHECK(gradcheck(w, [&](Tape& t, Var v) {
          Var out = t.linear(t.constant(x), v, t.constant(b));
          return t.mean_all(t.square(out));
        }) < 1e-6);
  Tensor a = random_tensor({4, 3}, 24);
  Tensor m = random_tensor({3, 5}, 25);
  CHECK(gradcheck(a, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.matmul(v, t.constant(m))));
        }) < 1e-6);
  CHECK(gradcheck(m, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.matmul(t.constant(a), v)));
        }) < 1e-6);
}

TEST_CASE("conv2d matches finite differences for input, weight and bias") {
  Tensor x = random_tensor({2, 3, 8, 8}, 31);
  Tensor w = random_tensor({4, 3, 3, 3}, 32, 0.5);
  Tensor b = random_tensor({4}, 33);
  for (int stride : {1, 2}) {
    CHECK(gradcheck(x,
                    [&](Tape& t, Var v) {
                      Var out =
                          t.conv2d(v, t.constant(w), t.constant(b), stride, 1);
                      return t.mean_all(t.square(out));
                    },
                    120) < 1e-5);
    CHECK(gradcheck(w,
                    [&](Tape& t, Var v) {
                      Var out =
                          t.conv2d(t.constant(x), v, t.constant(b), stride, 1);
                      return t.mean_all(t.square(out));
                    },
                    120) < 1e-5);
    CHECK(gradcheck(b, [&](Tape& t, Var v) {
            Var out = t.conv2d(t.constant(x), t.constant(w), v, stride, 1);
            return t.mean_all(t.square(out));
          }) < 1e-5);
  }
}

TEST_CASE("bilinear upsampling doubles size and matches finite differences") {
  Tensor x = random_tensor({1, 2, 5, 7}, 41);
  {
    Tape t;
    Var out = t.bilinear_up2(t.constant(x));
    CHECK(out.val().shape == std::vector<int>{1, 2, 10, 14});
  }
  CHECK(gradcheck(x, [](Tape& t, Var v) {
          return t.mean_all(t.square(t.bilinear_up2(v)));
        }) < 1e-6);
}

TEST_CASE("softmax_hw normalizes rows and matches finite differences") {
  Tensor x = random_tensor({2, 3, 4, 4}, 51, 2.0);
  Tape t;
  Var y = t.softmax_hw(t.constant(x));
  for (int b = 0; b < 2; ++b)
    for (int n = 0; n < 3; ++n) {
      double s = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) s += y.val()(b, n, i, j);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  CHECK(gradcheck(x, [](Tape& t2, Var v) {
          Var sm = t2.softmax_hw(v);
          return t2.sum_all(t2.square(sm));
        }) < 1e-6);
}

TEST_CASE("gaussian_maps matches finite differences in p and s") {
  std::vector<double> g = {-1.0, -0.5, 0.0, 0.5, 1.0};
  Tensor p({1, 2, 2}, {0.1, -0.2, -0.4, 0.3});
  Tensor s({1, 2}, {0.8, 0.5});
  CHECK(gradcheck(p, [&](Tape& t, Var v) {
          Var maps = t.gaussian_maps(v, t.constant(s), g, g, 0.3);
          return t.sum_all(t.square(maps));
        }) < 1e-6);
  CHECK(gradcheck(s, [&](Tape& t, Var v) {
          Var maps = t.gaussian_maps(t.constant(p), v, g, g, 0.3);
          return t.sum_all(t.square(maps));
        }) < 1e-6);
}

TEST_CASE("attention pooling matches finite differences for all reductions") {
  Tensor g = random_tensor({2, 2, 4, 4}, 61, 0.5);
  Tensor f = random_tensor({2, 3, 4, 4}, 62);
  for (nn::Reduce red : {nn::Reduce::kSum, nn::Reduce::kAvg, nn::Reduce::kMax}) {
    CHECK(gradcheck(g, [&](Tape& t, Var v) {
            return t.sum_all(t.square(t.attend(v, t.constant(f), red)));
          }) < 1e-5);
    CHECK(gradcheck(f, [&](Tape& t, Var v) {
            return t.sum_all(t.square(t.attend(t.constant(g), v, red)));
          }) < 1e-5);
  }
}

TEST_CASE("gather/scatter ops route gradients and sort sums by content") {
  Tensor x = random_tensor({5, 3}, 71);
  std::vector<int> idx = {4, 0, 2, 2, 1};
  CHECK(gradcheck(x, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.rows_gather(v, idx)));
        }) < 1e-6);
  Tensor e = random_tensor({6, 3}, 72);
  std::vector<int> recv = {0, 1, 1, 2, 2, 2};
  CHECK(gradcheck(e, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.rows_scatter_sorted_sum(v, recv, 3)));
        }) < 1e-6);

  // Content-sorted accumulation: permuting the incoming rows of one bucket
  // cannot change the sum bitwise.
  Tensor e1({3, 2}, {0.1, 0.7, -0.3, 0.2, 0.9, -0.5});
  Tensor e2({3, 2}, {0.9, -0.5, 0.1, 0.7, -0.3, 0.2});
  Tape t1, t2;
  Var s1 = t1.rows_scatter_sorted_sum(t1.constant(e1), {0, 0, 0}, 1);
  Var s2 = t2.rows_scatter_sorted_sum(t2.constant(e2), {0, 0, 0}, 1);
  CHECK(s1.val().data == s2.val().data);
}

TEST_CASE("concat and slice round-trip gradients") {
  Tensor a = random_tensor({3, 2}, 81);
  Tensor b = random_tensor({3, 4}, 82);
  CHECK(gradcheck(a, [&](Tape& t, Var v) {
          Var cat = t.concat_cols({v, t.constant(b)});
          return t.sum_all(t.square(t.slice_cols(cat, 0, 2)));
        }) < 1e-6);
  Tensor x = random_tensor({2, 3, 4, 4}, 83);
  Tensor y = random_tensor({2, 2, 4, 4}, 84);
  CHECK(gradcheck(x, [&](Tape& t, Var v) {
          Var cat = t.concat_channels({v, t.constant(y)});
          return t.mean_all(t.square(cat));
        }) < 1e-6);
  CHECK(gradcheck(y, [&](Tape& t, Var v) {
          Var cat = t.concat_channels({t.constant(x), v});
          return t.mean_all(t.square(t.slice_channels(cat, 2, 5)));
        }) < 1e-6);
}

TEST_CASE("fixed-kernel convolutions match finite differences") {
  Tensor x = random_tensor({1, 2, 6, 6}, 91);
  Tensor bank = random_tensor({3, 3, 3}, 92);
  CHECK(gradcheck(x, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.bank_conv_same(v, bank)));
        }) < 1e-6);
  Tensor ker = random_tensor({3, 3}, 93);
  CHECK(gradcheck(x, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.kernel_conv_valid(v, ker)));
        }) < 1e-6);
}

TEST_CASE("scale_channels matches finite differences") {
  Tensor maps = random_tensor({2, 4, 3, 3}, 95);
  Tensor coef = random_tensor({2, 4}, 96);
  CHECK(gradcheck(maps, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.scale_channels(v, t.constant(coef))));
        }) < 1e-6);
  CHECK(gradcheck(coef, [&](Tape& t, Var v) {
          return t.sum_all(t.square(t.scale_channels(t.constant(maps), v)));
        }) < 1e-6);
}

TEST_CASE("adam performs a deterministic descent step") {
  Rng rng(7);
  nn::Linear lin(4, 2, rng);
  std::vector<nn::ParamRef> refs;
  lin.collect("lin", refs);
  Tensor x = random_tensor({8, 4}, 101);
  auto loss_value = [&]() {
    Tape t;
    Bound bp(t, refs, false);
    Var out = lin(t, bp, t.constant(x));
    return t.mean_all(t.square(out)).val()(0);
  };
  double before = loss_value();
  nn::Adam opt(1e-2);
  for (int it = 0; it < 20; ++it) {
    Tape t;
    Bound bp(t, refs, true);
    Var out = lin(t, bp, t.constant(x));
    Var loss = t.mean_all(t.square(out));
    t.backward(loss);
    opt.step(refs, t, bp);
  }
  CHECK(loss_value() < before);
}
