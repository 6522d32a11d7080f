#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ciscnet/layers.hpp"
#include "ciscnet/rng.hpp"
#include "oracles.hpp"

using namespace ciscnet;

namespace {

template <typename T>
Tensor4<T> random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1, double hi = 1) {
  Tensor4<T> t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double dot(const Tensor4<T>& a, const Tensor4<T>& b) {
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("mish reference values") {
  CHECK(mish_scalar(0.0) == 0.0);
  CHECK(std::abs(mish_scalar(20.0) - 20.0) <= 1e-8);
  CHECK(mish_scalar(1.0) == doctest::Approx(0.8650983882673103).epsilon(1e-12));
  // stability far into the tails
  CHECK(std::isfinite(mish_scalar(700.0)));
  CHECK(std::isfinite(mish_scalar(-700.0)));
  CHECK(mish_scalar(-700.0) == doctest::Approx(0.0));
}

TEST_CASE("mish gradient matches finite differences") {
  Rng rng(4);
  Tensor4d x = random_tensor<double>(rng, 1, 2, 3, 3, -5, 5);
  Tensor4d up = random_tensor<double>(rng, 1, 2, 3, 3);
  Tensor4d analytic = mish_backward(x, up);
  const double h = 1e-6;
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor4d xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    double fd = (dot(mish(xp), up) - dot(mish(xm), up)) / (2 * h);
    CHECK(analytic.data[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("conv2d trivial cases") {
  // zero input -> bias everywhere
  Tensor4d x(1, 1, 3, 3);
  Tensor4d w(2, 1, 3, 3);
  Rng rng(1);
  for (auto& v : w.data) v = rng.uniform(-1, 1);
  std::vector<double> bias = {0.7, -0.3};
  Tensor4d out = conv2d(x, w, bias, 1, 1);
  for (int oc = 0; oc < 2; ++oc) {
    for (int i = 0; i < 9; ++i) CHECK(out.plane(0, oc)[i] == bias[oc]);
  }

  // identity kernel reproduces the input
  Tensor4d xin = random_tensor<double>(rng, 1, 1, 5, 6);
  Tensor4d ident(1, 1, 3, 3);
  ident.at(0, 0, 1, 1) = 1.0;
  Tensor4d same = conv2d(xin, ident, {0.0}, 1, 1);
  for (size_t i = 0; i < xin.data.size(); ++i) CHECK(same.data[i] == xin.data[i]);
}

TEST_CASE("conv2d agrees with the nested-loop reference") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor4d x = random_tensor<double>(rng, 2, 2, 6, 6);
      Tensor4d w = random_tensor<double>(rng, 3, 2, 3, 3);
      std::vector<double> bias = {0.1, -0.2, 0.3};
      Tensor4d fast = conv2d(x, w, bias, stride, pad);
      Tensor4d ref = oracles::naive_conv2d(x, w, bias, stride, pad);
      REQUIRE(fast.same_shape(ref));
      for (size_t i = 0; i < ref.data.size(); ++i) {
        CHECK(std::abs(fast.data[i] - ref.data[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("stride-2 pad-1 k-3 halves even dimensions") {
  Rng rng(3);
  Tensor4d x = random_tensor<double>(rng, 1, 2, 8, 12);
  Tensor4d w = random_tensor<double>(rng, 4, 2, 3, 3);
  Tensor4d out = conv2d(x, w, std::vector<double>(4, 0.0), 2, 1);
  CHECK(out.h == 4);
  CHECK(out.w == 6);
}

TEST_CASE("conv_transpose2d zero input and shape contract") {
  Tensor4d x(1, 1, 2, 2);
  Tensor4d w(1, 3, 2, 2);
  Rng rng(5);
  for (auto& v : w.data) v = rng.uniform(-1, 1);
  std::vector<double> bias = {0.25, -1.0, 2.0};
  Tensor4d out = conv_transpose2d(x, w, bias, 2);
  CHECK(out.c == 3);
  CHECK(out.h == 4);
  CHECK(out.w == 4);
  for (int oc = 0; oc < 3; ++oc) {
    for (int i = 0; i < 16; ++i) CHECK(out.plane(0, oc)[i] == bias[oc]);
  }
}

TEST_CASE("conv / transposed-conv adjoint identity over random shapes") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    int k = rng.uniform_int(0, 1) ? 2 : 3;
    int stride = rng.uniform_int(1, 2);
    int cin = rng.uniform_int(1, 4);
    int cout = rng.uniform_int(1, 4);
    int n = rng.uniform_int(1, 2);
    int ih = rng.uniform_int(k, 9), iw = rng.uniform_int(k, 9);
    // conv input dims must reach the kernel
    Tensor4d x = random_tensor<double>(rng, n, cin, ih, iw);
    Tensor4d w = random_tensor<double>(rng, cin, cout, k, k);  // transpose layout
    int oh = (ih - 1) * stride + k, ow = (iw - 1) * stride + k;
    Tensor4d y = random_tensor<double>(rng, n, cout, oh, ow);

    // <convT(x), y> vs <x, conv(y)> with the same weight tensor
    Tensor4d tx = conv_transpose2d(x, w, {}, stride);
    Tensor4d cy = conv2d(y, w, {}, stride, 0);  // w read as [oc=cin, ic=cout]
    double lhs = dot(tx, y);
    double rhs = dot(x, cy);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(7);
  Tensor4d x = random_tensor<double>(rng, 1, 2, 5, 5);
  Tensor4d w = random_tensor<double>(rng, 3, 2, 3, 3);
  std::vector<double> bias = {0.1, 0.2, -0.1};
  Tensor4d up = random_tensor<double>(rng, 1, 3, 3, 3);  // stride 2 pad 1 output

  ConvGrads<double> g = conv2d_backward(x, w, up, 2, 1, true);
  const double h = 1e-6;
  auto loss = [&](const Tensor4d& xx, const Tensor4d& ww, const std::vector<double>& bb) {
    return dot(conv2d(xx, ww, bb, 2, 1), up);
  };
  for (size_t i = 0; i < w.data.size(); ++i) {
    Tensor4d wp = w, wm = w;
    wp.data[i] += h;
    wm.data[i] -= h;
    double fd = (loss(x, wp, bias) - loss(x, wm, bias)) / (2 * h);
    CHECK(g.dw.data[i] == doctest::Approx(fd).epsilon(1e-7));
  }
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor4d xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    double fd = (loss(xp, w, bias) - loss(xm, w, bias)) / (2 * h);
    CHECK(g.dx.data[i] == doctest::Approx(fd).epsilon(1e-7));
  }
  for (size_t i = 0; i < bias.size(); ++i) {
    auto bp = bias, bm = bias;
    bp[i] += h;
    bm[i] -= h;
    double fd = (loss(x, w, bp) - loss(x, w, bm)) / (2 * h);
    CHECK(g.db[i] == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("conv_transpose2d backward matches finite differences") {
  Rng rng(8);
  Tensor4d x = random_tensor<double>(rng, 1, 3, 3, 4);
  Tensor4d w = random_tensor<double>(rng, 3, 2, 2, 2);
  std::vector<double> bias = {0.3, -0.4};
  Tensor4d up = random_tensor<double>(rng, 1, 2, 6, 8);

  ConvGrads<double> g = conv_transpose2d_backward(x, w, up, 2, true);
  const double h = 1e-6;
  auto loss = [&](const Tensor4d& xx, const Tensor4d& ww, const std::vector<double>& bb) {
    return dot(conv_transpose2d(xx, ww, bb, 2), up);
  };
  for (size_t i = 0; i < w.data.size(); ++i) {
    Tensor4d wp = w, wm = w;
    wp.data[i] += h;
    wm.data[i] -= h;
    double fd = (loss(x, wp, bias) - loss(x, wm, bias)) / (2 * h);
    CHECK(g.dw.data[i] == doctest::Approx(fd).epsilon(1e-7));
  }
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor4d xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    double fd = (loss(xp, w, bias) - loss(xm, w, bias)) / (2 * h);
    CHECK(g.dx.data[i] == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("group_norm constant input and gamma=0") {
  Tensor4d x(2, 4, 3, 3, 5.0);
  std::vector<double> gamma(4, 1.0), beta(4, 0.0);
  Tensor4d out = group_norm(x, gamma, beta, 2, 1e-5, static_cast<GroupNormCtx<double>*>(nullptr));
  for (double v : out.data) CHECK(v == 0.0);

  Rng rng(9);
  Tensor4d xr = random_tensor<double>(rng, 2, 4, 3, 3);
  std::vector<double> gamma0(4, 0.0), beta7(4, 0.7);
  Tensor4d out2 = group_norm(xr, gamma0, beta7, 2, 1e-5, static_cast<GroupNormCtx<double>*>(nullptr));
  for (double v : out2.data) CHECK(v == 0.7);
}

TEST_CASE("group_norm normalizes per sample and group") {
  Rng rng(10);
  Tensor4d x = random_tensor<double>(rng, 2, 4, 3, 3, -3, 7);
  std::vector<double> gamma(4, 1.0), beta(4, 0.0);
  Tensor4d out = group_norm(x, gamma, beta, 2, 1e-9, static_cast<GroupNormCtx<double>*>(nullptr));
  for (int n = 0; n < 2; ++n) {
    for (int g = 0; g < 2; ++g) {
      double mean = 0, var = 0;
      int count = 0;
      for (int c = g * 2; c < g * 2 + 2; ++c) {
        for (int i = 0; i < 9; ++i) {
          mean += out.plane(n, c)[i];
          ++count;
        }
      }
      mean /= count;
      for (int c = g * 2; c < g * 2 + 2; ++c) {
        for (int i = 0; i < 9; ++i) {
          double d = out.plane(n, c)[i] - mean;
          var += d * d;
        }
      }
      var /= count;
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-6);
    }
  }
  CHECK_THROWS_AS(group_norm(x, gamma, beta, 3, 1e-5, static_cast<GroupNormCtx<double>*>(nullptr)),
                  IndivisibleGroups);
}

TEST_CASE("group_norm backward matches finite differences") {
  Rng rng(11);
  Tensor4d x = random_tensor<double>(rng, 2, 4, 2, 3);
  std::vector<double> gamma = {1.1, 0.9, -0.5, 1.3}, beta = {0.1, -0.2, 0.0, 0.4};
  Tensor4d up = random_tensor<double>(rng, 2, 4, 2, 3);
  const double eps = 1e-5;

  GroupNormCtx<double> ctx;
  group_norm(x, gamma, beta, 2, eps, &ctx);
  GroupNormGrads<double> g = group_norm_backward(ctx, gamma, up);

  const double h = 1e-6;
  auto loss = [&](const Tensor4d& xx, const std::vector<double>& gm, const std::vector<double>& bt) {
    return dot(group_norm(xx, gm, bt, 2, eps, static_cast<GroupNormCtx<double>*>(nullptr)), up);
  };
  for (size_t i = 0; i < x.data.size(); ++i) {
    Tensor4d xp = x, xm = x;
    xp.data[i] += h;
    xm.data[i] -= h;
    double fd = (loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * h);
    CHECK(g.dx.data[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  for (size_t i = 0; i < gamma.size(); ++i) {
    auto gp = gamma, gm2 = gamma;
    gp[i] += h;
    gm2[i] -= h;
    double fd = (loss(x, gp, beta) - loss(x, gm2, beta)) / (2 * h);
    CHECK(g.dgamma[i] == doctest::Approx(fd).epsilon(1e-6));
    auto bp = beta, bm = beta;
    bp[i] += h;
    bm[i] -= h;
    fd = (loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * h);
    CHECK(g.dbeta[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("sum_channels cases") {
  Tensor4d zeros(1, 6, 2, 2);
  Tensor4d z = sum_channels(zeros);
  for (double v : z.data) CHECK(v == 0.0);

  // one-hot channel pattern copies that channel
  Tensor4d onehot(1, 6, 2, 2);
  Rng rng(12);
  for (int i = 0; i < 4; ++i) onehot.plane(0, 3)[i] = rng.uniform(-1, 1);
  Tensor4d copy = sum_channels(onehot);
  for (int i = 0; i < 4; ++i) CHECK(copy.plane(0, 0)[i] == onehot.plane(0, 3)[i]);

  Tensor4d x = random_tensor<double>(rng, 2, 6, 3, 3);
  Tensor4d s = sum_channels(x);
  for (int n = 0; n < 2; ++n) {
    for (int i = 0; i < 9; ++i) {
      double acc = 0;
      for (int c = 0; c < 6; ++c) acc += x.plane(n, c)[i];
      CHECK(s.plane(n, 0)[i] == doctest::Approx(acc).epsilon(1e-15));
    }
  }

  Tensor4d up = random_tensor<double>(rng, 2, 1, 3, 3);
  Tensor4d back = sum_channels_backward(up, 6);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 6; ++c) {
      for (int i = 0; i < 9; ++i) CHECK(back.plane(n, c)[i] == up.plane(n, 0)[i]);
    }
  }
}

TEST_CASE("concat and split are inverse") {
  Rng rng(13);
  Tensor4d a = random_tensor<double>(rng, 2, 3, 4, 4);
  Tensor4d b = random_tensor<double>(rng, 2, 5, 4, 4);
  Tensor4d j = concat_channels(a, b);
  CHECK(j.c == 8);
  Tensor4d da, db;
  split_channels(j, 3, da, db);
  CHECK(da.data == a.data);
  CHECK(db.data == b.data);
}
