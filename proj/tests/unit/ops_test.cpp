#include <gtest/gtest.h>

#include <cmath>

#include "amfusion/error.hpp"
#include "amfusion/ops.hpp"
#include "testing.hpp"

using namespace amfusion;
using amfusion::testing::check_input_gradient;
using amfusion::testing::project;
using amfusion::testing::oracle_conv;
using amfusion::testing::random_tensor;

namespace {

int reflect(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace

TEST(Tensor, SlicesAndStack) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({2, 3, 4, 5}, rng);
  const Tensor s = a.slice_channels(1, 2);
  EXPECT_EQ(s.shape(), (Shape{2, 2, 4, 5}));
  EXPECT_EQ(s.at(1, 0, 2, 3), a.at(1, 1, 2, 3));
  const Tensor b0 = a.slice_batch(0, 1);
  const Tensor b1 = a.slice_batch(1, 1);
  const std::vector<Tensor> parts{b0, b1};
  EXPECT_EQ(stack_batch(parts), a);
}

TEST(Autograd, NoGradGuardDropsTape) {
  const Var x = Var::leaf(Tensor::scalar(2.0), true);
  {
    NoGradGuard g;
    EXPECT_FALSE(ops::square(x).requires_grad());
  }
  EXPECT_TRUE(ops::square(x).requires_grad());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  const Var x = Var::leaf(Tensor::scalar(3.0), true);
  const Var y = ops::mul(x, x);
  backward(ops::add(y, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Ops, ElementwiseGradients) {
  std::mt19937_64 rng(2);
  const Tensor pos = random_tensor({2, 3, 4, 4}, rng, 0.2, 1.5);
  const Tensor other = random_tensor({1, 3, 1, 4}, rng, 0.5, 1.5);
  const std::vector<std::function<Var(const Var&)>> fns = {
      [&](const Var& x) { return project(ops::add(x, Var::constant(other))); },
      [&](const Var& x) { return project(ops::sub(Var::constant(other), x)); },
      [&](const Var& x) { return project(ops::mul(x, Var::constant(other))); },
      [&](const Var& x) { return project(ops::div(Var::constant(other), x)); },
      [&](const Var& x) { return project(ops::sqrt(x)); },
      [&](const Var& x) { return project(ops::sigmoid(ops::mul_scalar(x, 3.0))); },
      [&](const Var& x) { return project(ops::leaky_relu(ops::add_scalar(x, -0.8), 0.2)); },
      [&](const Var& x) { return project(ops::square(ops::one_minus(x))); },
      [&](const Var& x) { return ops::mean(ops::abs(ops::add_scalar(x, -0.77))); },
      [&](const Var& x) { return project(ops::sum_per_sample(x)); },
  };
  for (std::size_t i = 0; i < fns.size(); ++i) {
    EXPECT_LT(check_input_gradient(fns[i], pos, rng).relative_error, 1e-6) << "fn " << i;
  }
}

TEST(Ops, BroadcastGradientReducesToOperandShape) {
  std::mt19937_64 rng(3);
  const Tensor big = random_tensor({2, 3, 4, 4}, rng);
  auto f = [&](const Var& small) { return project(ops::mul(Var::constant(big), small)); };
  EXPECT_LT(check_input_gradient(f, random_tensor({1, 3, 1, 1}, rng), rng).relative_error, 1e-7);
}

TEST(Ops, Conv2dMatchesLoopOracle) {
  std::mt19937_64 rng(4);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {1, 1, 0}, {7, 1, 3}, {1, 2, 0}}) {
    const Tensor x = random_tensor({2, 3, 9, 8}, rng, -1, 1);
    const Tensor w = random_tensor({4, 3, k, k}, rng, -1, 1);
    const Tensor b = random_tensor({1, 4, 1, 1}, rng, -1, 1);
    const Var y = ops::conv2d(Var::constant(x), Var::constant(w), Var::constant(b), stride, pad);
    EXPECT_LT(max_abs_diff(y.value(), oracle_conv(x, w, b, stride, pad)), 1e-12) << k << stride << pad;
  }
}

TEST(Ops, Conv2dGradients) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 3, 6, 6}, rng, -1, 1);
  const Tensor w = random_tensor({4, 3, 3, 3}, rng, -1, 1);
  const Tensor b = random_tensor({1, 4, 1, 1}, rng, -1, 1);
  for (int stride : {1, 2}) {
    auto fx = [&](const Var& v) { return project(ops::conv2d(v, Var::constant(w), Var::constant(b), stride, 1)); };
    auto fw = [&](const Var& v) { return project(ops::conv2d(Var::constant(x), v, Var::constant(b), stride, 1)); };
    auto fb = [&](const Var& v) { return project(ops::conv2d(Var::constant(x), Var::constant(w), v, stride, 1)); };
    EXPECT_LT(check_input_gradient(fx, x, rng).relative_error, 1e-7);
    EXPECT_LT(check_input_gradient(fw, w, rng).relative_error, 1e-7);
    EXPECT_LT(check_input_gradient(fb, b, rng).relative_error, 1e-7);
  }
}

TEST(Ops, Filter2dReflectMatchesOracle) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({1, 2, 5, 6}, rng);
  const Tensor k = random_tensor({1, 1, 3, 3}, rng, -1, 1);
  const Tensor y = ops::filter2d(Var::constant(x), k, ops::Padding::Reflect).value();
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 6; ++j) {
        double acc = 0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) acc += k.at(0, 0, a, b) * x.at(0, c, reflect(i + a - 1, 5), reflect(j + b - 1, 6));
        EXPECT_NEAR(y.at(0, c, i, j), acc, 1e-12);
      }
  const Tensor valid = ops::filter2d(Var::constant(x), k, ops::Padding::Valid).value();
  EXPECT_EQ(valid.shape(), (Shape{1, 2, 3, 4}));
  auto f = [&](const Var& v) { return project(ops::filter2d(v, k, ops::Padding::Reflect)); };
  EXPECT_LT(check_input_gradient(f, x, rng).relative_error, 1e-7);
}

TEST(Ops, PoolingAndResamplingGradients) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const std::vector<std::function<Var(const Var&)>> fns = {
      [](const Var& v) { return project(ops::global_avg_pool(v)); },
      [](const Var& v) { return project(ops::global_max_pool(v)); },
      [](const Var& v) { return project(ops::channel_mean(v)); },
      [](const Var& v) { return project(ops::channel_max(v)); },
      [](const Var& v) { return project(ops::block_mean(v, 2)); },
      [](const Var& v) { return project(ops::upsample_nearest(v, 2)); },
      [](const Var& v) { return project(ops::concat_channels({v, ops::square(v)})); },
  };
  for (std::size_t i = 0; i < fns.size(); ++i) {
    EXPECT_LT(check_input_gradient(fns[i], x, rng).relative_error, 1e-7) << "fn " << i;
  }
  EXPECT_THROW(ops::block_mean(Var::constant(x), 3), Error);
}

TEST(Ops, LayerNormNormalizesChannels) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({2, 6, 3, 3}, rng, -2, 2);
  const Var ones = Var::constant(Tensor({1, 6, 1, 1}, 1.0));
  const Var zeros = Var::constant(Tensor({1, 6, 1, 1}, 0.0));
  const Tensor y = ops::layer_norm_channels(Var::constant(x), ones, zeros).value();
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) {
      double mu = 0, sq = 0;
      for (int c = 0; c < 6; ++c) mu += y.plane(n, c)[i] / 6;
      for (int c = 0; c < 6; ++c) sq += (y.plane(n, c)[i] - mu) * (y.plane(n, c)[i] - mu) / 6;
      EXPECT_NEAR(mu, 0.0, 1e-12);
      EXPECT_NEAR(sq, 1.0, 1e-4);
    }
  const Tensor g = random_tensor({1, 6, 1, 1}, rng, 0.5, 1.5);
  const Tensor b = random_tensor({1, 6, 1, 1}, rng, -1, 1);
  auto fx = [&](const Var& v) { return project(ops::layer_norm_channels(v, Var::constant(g), Var::constant(b))); };
  auto fg = [&](const Var& v) { return project(ops::layer_norm_channels(Var::constant(x), v, Var::constant(b))); };
  EXPECT_LT(check_input_gradient(fx, x, rng).relative_error, 1e-6);
  EXPECT_LT(check_input_gradient(fg, g, rng).relative_error, 1e-7);
}

TEST(Ops, AttentionMatchesScalarOracle) {
  std::mt19937_64 rng(9);
  const int heads = 2;
  const Tensor q = random_tensor({2, 4, 2, 3}, rng, -1, 1);
  const Tensor k = random_tensor({2, 4, 3, 2}, rng, -1, 1);
  const Tensor v = random_tensor({2, 4, 3, 2}, rng, -1, 1);
  std::vector<Tensor> probs;
  const Tensor y = ops::scaled_dot_attention(Var::constant(q), Var::constant(k), Var::constant(v), heads, &probs)
                       .value();
  ASSERT_EQ(probs.size(), 4u);
  const int d = 2, lq = 6, lk = 6;
  for (int n = 0; n < 2; ++n)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < lq; ++i) {
        std::vector<double> s(lk);
        double mx = -1e300;
        for (int j = 0; j < lk; ++j) {
          double dot = 0;
          for (int c = 0; c < d; ++c) dot += q.plane(n, h * d + c)[i] * k.plane(n, h * d + c)[j];
          s[j] = dot / std::sqrt(double(d));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (double& e : s) z += (e = std::exp(e - mx));
        double row = 0;
        for (int j = 0; j < lk; ++j) row += probs[n * heads + h][i * lk + j];
        EXPECT_NEAR(row, 1.0, 1e-12);
        for (int c = 0; c < d; ++c) {
          double acc = 0;
          for (int j = 0; j < lk; ++j) acc += s[j] / z * v.plane(n, h * d + c)[j];
          EXPECT_NEAR(y.plane(n, h * d + c)[i], acc, 1e-12);
        }
      }
  auto fq = [&](const Var& x) { return project(ops::scaled_dot_attention(x, Var::constant(k), Var::constant(v), heads)); };
  auto fk = [&](const Var& x) { return project(ops::scaled_dot_attention(Var::constant(q), x, Var::constant(v), heads)); };
  auto fv = [&](const Var& x) { return project(ops::scaled_dot_attention(Var::constant(q), Var::constant(k), x, heads)); };
  EXPECT_LT(check_input_gradient(fq, q, rng).relative_error, 1e-7);
  EXPECT_LT(check_input_gradient(fk, k, rng).relative_error, 1e-7);
  EXPECT_LT(check_input_gradient(fv, v, rng).relative_error, 1e-7);
}

TEST(Ops, AttentionRejectsIndivisibleHeads) {
  const Var x = Var::constant(Tensor({1, 6, 2, 2}, 0.1));
  try {
    ops::scaled_dot_attention(x, x, x, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::HeadDivisibility);
  }
}
