#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "mambair/errors.hpp"
#include "mambair/ops.hpp"

using namespace mambair;
using testing_util::full_grad_error;
using testing_util::random_tensor;

TEST(Tensor, ShapeAndStorage) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  for (double v : t.data()) EXPECT_EQ(v, 1.5);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_EQ(shape_str({4, 5}), "[4,5]");
}

TEST(Tensor, CopiesAliasClonesDoNot) {
  Tensor a({2}, 0.0);
  Tensor b = a;
  Tensor c = a.clone();
  a.data_mut()[0] = 7.0;
  EXPECT_EQ(b[0], 7.0);
  EXPECT_EQ(c[0], 0.0);
}

TEST(Tape, SumGivesOnes) {
  Tensor x({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Tape, QuadraticGradient) {
  Tensor x({2}, std::vector<double>{1, 2});
  x.set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Tape, RepeatedBackwardAccumulatesUntilCleared) {
  Tensor x({2}, std::vector<double>{1, 2});
  x.set_requires_grad();
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Tape, ErrorsOnNonScalarAndForeignValues) {
  Tensor x({2}, 1.0);
  x.set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), ShapeError);
  Tape other;
  EXPECT_THROW(other.backward(sum(y)), std::logic_error);
  EXPECT_NO_THROW(y.clone().set_requires_grad());
}

TEST(Tape, SetRequiresGradOnlyOnLeaves) {
  Tensor x({2}, 1.0);
  x.set_requires_grad();
  Tape tape;
  TapeScope scope(tape);
  Tensor y = mul(x, x);
  EXPECT_THROW(y.set_requires_grad(), std::logic_error);
}

TEST(Tape, NothingRecordedWithoutTrackedInputs) {
  Tape tape;
  TapeScope scope(tape);
  Tensor a({3}, 1.0), b({3}, 2.0);
  add(a, b);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, ClearReleasesIntermediates) {
  const std::size_t before = memory_stats().live_bytes;
  Tensor x({64}, 1.0);
  x.set_requires_grad();
  {
    Tape tape;
    {
      TapeScope scope(tape);
      Tensor y = sum(mul(silu(x), x));
      tape.backward(y);
    }
    EXPECT_GT(tape.size(), 0u);
    tape.clear();
    EXPECT_EQ(tape.size(), 0u);
  }
  // Only x and its gradient remain.
  EXPECT_EQ(memory_stats().live_bytes - before, 2 * 64 * sizeof(double));
}

TEST(Conv2d, IdentityKernel) {
  Tensor x({1, 1, 1}, 5.0);
  Tensor w({1, 1, 1, 1}, 1.0);
  EXPECT_EQ(conv2d(x, w, Tensor({1}, 0.0), 0)[0], 5.0);
}

TEST(Conv2d, OnesKernelCountsTaps) {
  Tensor y = conv2d(Tensor({3, 3, 1}, 1.0), Tensor({3, 3, 1, 1}, 1.0), Tensor({1}, 0.0), 1);
  EXPECT_EQ(y.shape(), (Shape{3, 3, 1}));
  EXPECT_EQ(y[4], 9.0);
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(y[1], 6.0);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  Rng rng(1);
  Tensor y = conv2d(random_tensor(rng, {4, 5, 2}), Tensor({3, 3, 2, 3}, 0.0),
                    Tensor({3}, std::vector<double>{1, 2, 3}), 1);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], static_cast<double>(i % 3 + 1));
}

TEST(Conv2d, ChannelMismatchAndEvenKernel) {
  EXPECT_THROW(conv2d(Tensor({3, 3, 2}), Tensor({3, 3, 1, 1}), Tensor{}, 1), ShapeError);
  EXPECT_THROW(conv2d(Tensor({3, 3, 1}), Tensor({2, 2, 1, 1}), Tensor{}, 1), ShapeError);
}

TEST(Conv2d, LinearInInput) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {5, 4, 3}), y = random_tensor(rng, {5, 4, 3});
  const Tensor w = random_tensor(rng, {3, 3, 3, 2});
  const Tensor zero({2}, 0.0);
  const Tensor lhs = conv2d(add(scale(x, 0.7), scale(y, -1.3)), w, zero, 1);
  const Tensor rhs = add(scale(conv2d(x, w, zero, 1), 0.7), scale(conv2d(y, w, zero, 1), -1.3));
  EXPECT_LE(testing_util::max_abs_diff(lhs.data(), rhs.data()), 1e-12);
}

TEST(DepthwiseConv, SingleChannelMatchesConv2d) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {5, 6, 1});
  const Tensor w = random_tensor(rng, {3, 3, 1});
  const Tensor b({1}, 0.25);
  const Tensor a = depthwise_conv2d(x, w, b);
  const Tensor c = conv2d(x, reshape(w, {3, 3, 1, 1}), b, 1);
  EXPECT_LE(testing_util::max_abs_diff(a.data(), c.data()), 1e-15);
}

TEST(DepthwiseConv, ZeroChannelIsBiasOnly) {
  Rng rng(4);
  Tensor x = random_tensor(rng, {4, 4, 2});
  for (std::size_t p = 0; p < 16; ++p) x.data_mut()[p * 2 + 1] = 0.0;
  const Tensor y = depthwise_conv2d(x, random_tensor(rng, {3, 3, 2}), Tensor({2}, std::vector<double>{0.0, 0.5}));
  for (std::size_t p = 0; p < 16; ++p) EXPECT_EQ(y[p * 2 + 1], 0.5);
}

TEST(DepthwiseConv, MatchesBruteForceLoop) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {4, 4, 3}), w = random_tensor(rng, {3, 3, 3}), b = random_tensor(rng, {3});
  const Tensor y = depthwise_conv2d(x, w, b);
  for (int h = 0; h < 4; ++h)
    for (int ww = 0; ww < 4; ++ww)
      for (int c = 0; c < 3; ++c) {
        double acc = b[c];
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = h + dy, xx = ww + dx;
            if (yy < 0 || yy >= 4 || xx < 0 || xx >= 4) continue;
            acc += x[(yy * 4 + xx) * 3 + c] * w[((dy + 1) * 3 + (dx + 1)) * 3 + c];
          }
        EXPECT_NEAR(y[(h * 4 + ww) * 3 + c], acc, 1e-14);
      }
  EXPECT_THROW(depthwise_conv2d(x, Tensor({3, 3, 2}), Tensor({2})), ShapeError);
}

TEST(LayerNorm, ConstantPixelNormalizesToZero) {
  const Tensor y = layer_norm(Tensor({1, 1, 3}, 0.7), Tensor({3}, 1.0), Tensor({3}, 0.0));
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LayerNorm, UnitVariancePair) {
  const Tensor x({1, 1, 2}, std::vector<double>{1.0, -1.0});
  const Tensor y = layer_norm(x, Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-12);
  EXPECT_NEAR(y[0], 1.0, 1e-9);
  EXPECT_NEAR(y[1], -1.0, 1e-9);
}

TEST(LayerNorm, ZeroGammaGivesBeta) {
  Rng rng(6);
  const Tensor y = layer_norm(random_tensor(rng, {3, 2, 4}), Tensor({4}, 0.0), Tensor({4}, 0.3));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(LayerNorm, MeanZeroVarianceOne) {
  Rng rng(7);
  const Tensor y = layer_norm(random_tensor(rng, {4, 4, 8}, -5, 5), Tensor({8}, 1.0), Tensor({8}, 0.0));
  for (std::size_t p = 0; p < 16; ++p) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 8; ++c) m += y[p * 8 + c] / 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y[p * 8 + c] - m) * (y[p * 8 + c] - m) / 8;
    EXPECT_LE(std::abs(m), 1e-10);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(Activations, ReferenceValues) {
  EXPECT_EQ(silu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_NEAR(softplus(Tensor::scalar(100.0)).item(), 100.0, 1e-12);
  EXPECT_NEAR(softplus(Tensor::scalar(-100.0)).item(), std::exp(-100.0), 1e-50);
  EXPECT_NEAR(softplus(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
  EXPECT_EQ(relu(Tensor::scalar(-2.0)).item(), 0.0);
  EXPECT_NEAR(gelu(Tensor::scalar(1.0)).item(), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(softplus_value(softplus_inverse(0.1)), 0.1, 1e-15);
}

TEST(UpsampleBilinear, HalfPixelCentersClampAtEdges) {
  const Tensor x({1, 2, 1}, std::vector<double>{0.0, 1.0});
  const Tensor y = upsample_bilinear(x, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 1}));
  const std::vector<double> row{0.0, 0.25, 0.75, 1.0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(y[i], row[i % 4]);
  EXPECT_EQ(testing_util::max_abs_diff(upsample_bilinear(x, 1).data(), x.data()), 0.0);
  EXPECT_THROW(upsample_bilinear(x, 0), ShapeError);
  EXPECT_THROW(upsample_bilinear(Tensor({2, 2}), 2), ShapeError);
}

TEST(PixelShuffle, DepthToSpace) {
  const Tensor x({1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = pixel_shuffle(x, 2);
  EXPECT_EQ(y.shape(), (Shape{2, 2, 1}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 2, 3, 4}));
  Rng rng(8);
  const Tensor z = random_tensor(rng, {3, 2, 5});
  EXPECT_EQ(testing_util::max_abs_diff(pixel_shuffle(z, 1).data(), z.data()), 0.0);
  const Tensor big = random_tensor(rng, {4, 6, 3});
  EXPECT_EQ(testing_util::max_abs_diff(pixel_shuffle(pixel_unshuffle(big, 2), 2).data(), big.data()), 0.0);
  EXPECT_THROW(pixel_shuffle(Tensor({1, 1, 3}), 2), ShapeError);
}

TEST(Linear, BiasAndShapes) {
  const Tensor x({2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor w({2, 1}, std::vector<double>{10, 1});
  const Tensor y = linear(x, w, Tensor({1}, 0.5));
  EXPECT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_EQ(y[0], 12.5);
  EXPECT_EQ(y[1], 34.5);
  EXPECT_THROW(linear(x, Tensor({3, 1}), Tensor{}), ShapeError);
}

TEST(GatherRows, PicksRows) {
  const Tensor x({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx{2, 0, 2};
  const Tensor y = gather_rows(x, idx);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{5, 6, 1, 2, 5, 6}));
}

TEST(Memory, PeakTracksLargestLiveSet) {
  reset_peak_memory();
  const std::size_t base = memory_stats().live_bytes;
  {
    Tensor big({1000}, 0.0);
    EXPECT_GE(memory_stats().peak_bytes, base + 8000);
  }
  EXPECT_EQ(memory_stats().live_bytes, base);
}

// Finite-difference checks for each differentiable op on inputs in [-1, 1].
class OpGradient : public ::testing::Test {
 protected:
  Rng rng{42};
  Tensor weight_like(const Tensor& t) { return random_tensor(rng, t.shape()); }
};

TEST_F(OpGradient, Elementwise) {
  Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
  const Tensor w = weight_like(a);
  EXPECT_LE(full_grad_error([&] { return sum(mul(add(mul(a, b), sub(a, scale(b, 0.3))), w)); }, {a, b}), 1e-5);
}

TEST_F(OpGradient, Activations) {
  Tensor x = random_tensor(rng, {5, 4});
  const Tensor w = weight_like(x);
  for (auto f : {sigmoid, silu, gelu, softplus}) {
    EXPECT_LE(full_grad_error([&] { return sum(mul(f(x), w)); }, {x}), 1e-5);
  }
  // Stay away from the kink at 0.
  Tensor y = random_tensor(rng, {5, 4}, 0.1, 1.0);
  EXPECT_LE(full_grad_error([&] { return sum(mul(relu(scale(y, -1.0)), w)); }, {y}), 1e-5);
}

TEST_F(OpGradient, ChannelBroadcasts) {
  Tensor x = random_tensor(rng, {2, 3, 4}), s = random_tensor(rng, {4}), b = random_tensor(rng, {4});
  const Tensor w = weight_like(x);
  EXPECT_LE(full_grad_error([&] { return sum(mul(add_channel(mul_channel(x, s), b), w)); }, {x, s, b}), 1e-5);
}

TEST_F(OpGradient, LinearAndMean) {
  Tensor x = random_tensor(rng, {5, 3}), w = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4});
  const Tensor out_w = random_tensor(rng, {5, 4});
  EXPECT_LE(full_grad_error([&] { return mean(mul(linear(x, w, b), out_w)); }, {x, w, b}), 1e-5);
}

TEST_F(OpGradient, Convolutions) {
  Tensor x = random_tensor(rng, {4, 5, 3}), w = random_tensor(rng, {3, 3, 3, 2}), b = random_tensor(rng, {2});
  const Tensor ow = random_tensor(rng, {4, 5, 2});
  EXPECT_LE(full_grad_error([&] { return sum(mul(conv2d(x, w, b, 1), ow)); }, {x, w, b}), 1e-5);
  Tensor dw = random_tensor(rng, {3, 3, 3}), db = random_tensor(rng, {3});
  const Tensor dow = random_tensor(rng, {4, 5, 3});
  EXPECT_LE(full_grad_error([&] { return sum(mul(depthwise_conv2d(x, dw, db), dow)); }, {x, dw, db}), 1e-5);
}

TEST_F(OpGradient, UpsampleBilinear) {
  Tensor x = random_tensor(rng, {3, 4, 2});
  for (std::size_t factor : {2, 3}) {
    const Tensor w = random_tensor(rng, {3 * factor, 4 * factor, 2});
    EXPECT_LE(full_grad_error([&] { return sum(mul(upsample_bilinear(x, factor), w)); }, {x}), 1e-5);
  }
}

TEST_F(OpGradient, LayerNorm) {
  Tensor x = random_tensor(rng, {3, 2, 5}), g = random_tensor(rng, {5}), b = random_tensor(rng, {5});
  const Tensor w = weight_like(x);
  EXPECT_LE(full_grad_error([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b}), 1e-5);
}

TEST_F(OpGradient, PoolShuffleGather) {
  Tensor x = random_tensor(rng, {2, 3, 8});
  const Tensor w1 = random_tensor(rng, {8}), w2 = random_tensor(rng, {4, 6, 2});
  EXPECT_LE(full_grad_error([&] { return add(sum(mul(global_avg_pool(x), w1)), sum(mul(pixel_shuffle(x, 2), w2))); },
                            {x}),
            1e-5);
  Tensor r = random_tensor(rng, {4, 3});
  const std::vector<std::size_t> idx{3, 1, 1, 0};
  const Tensor w3 = random_tensor(rng, {4, 3});
  EXPECT_LE(full_grad_error([&] { return sum(mul(gather_rows(reshape(r, {4, 3}), idx), w3)); }, {r}), 1e-5);
}

TEST(Determinism, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(9);
    Tensor x = random_tensor(rng, {6, 6, 4});
    Tensor w = random_tensor(rng, {3, 3, 4, 4});
    x.set_requires_grad();
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(silu(conv2d(x, w, Tensor{}, 1))));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  EXPECT_EQ(run(), run());
}
