#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fishdreamer/attention.hpp"
#include "fishdreamer/errors.hpp"
#include "fishdreamer/grad_check.hpp"
#include "support.hpp"

namespace fd {
namespace {

using testing::naive_attention;
using testing::random_attention;
using testing::random_swin;
using testing::random_tensor;
using testing::to_double;

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(WindowPartition, CountFollowsGrid) {
  std::mt19937 rng(1);
  Tensor x = random_tensor({8, 8, 3}, rng);
  Tensor w = window_partition(x, {8, 8, 3, 4, 0});
  EXPECT_EQ(w.shape(), (Shape{4, 16, 3}));
  // window 1 is the top-right block
  EXPECT_EQ(w.at((1 * 16 + 0) * 3 + 2), x.at((0 * 8 + 4) * 3 + 2));
}

TEST(WindowPartition, SingleWindowIsFlattenedMap) {
  std::mt19937 rng(2);
  Tensor x = random_tensor({4, 4, 5}, rng);
  Tensor w = window_partition(x, {4, 4, 5, 4, 0});
  EXPECT_EQ(w.shape(), (Shape{1, 16, 5}));
  EXPECT_EQ(values(w), values(x));
}

TEST(WindowPartition, RoundTripsBitExactly) {
  std::mt19937 rng(3);
  for (std::size_t shift : {0u, 2u}) {
    Tensor x = random_tensor({8, 12, 6}, rng);
    const WindowGrid g{8, 12, 6, 4, shift};
    EXPECT_EQ(values(window_merge(window_partition(x, g), g)), values(x)) << shift;
  }
}

TEST(WindowPartition, ShiftRollsTowardsOrigin) {
  std::mt19937 rng(4);
  Tensor x = random_tensor({8, 8, 1}, rng);
  Tensor w = window_partition(x, {8, 8, 1, 4, 2});
  EXPECT_EQ(w.at(0), x.at(2 * 8 + 2));
  // last token of the last window wraps to (1, 1)
  EXPECT_EQ(w.at(4 * 16 - 1), x.at(1 * 8 + 1));
}

TEST(WindowPartition, IndivisibleMapIsContractError) {
  Tensor x(Shape{6, 8, 2});
  EXPECT_THROW(window_partition(x, {6, 8, 2, 4, 0}), ContractError);
}

// Within a window of the rolled map, two tokens may attend to each other iff
// neither or both of them wrapped around each axis.
TEST(ShiftedWindowMask, MatchesWrapOracle) {
  for (auto [h, w, n] : {std::tuple{8u, 8u, 4u}, std::tuple{12u, 8u, 4u}, std::tuple{6u, 6u, 2u}}) {
    const WindowGrid g{h, w, 1, n, n / 2};
    Tensor m = shifted_window_mask(g);
    const std::size_t t = n * n;
    const std::size_t wx = w / n;
    for (std::size_t win = 0; win < g.num_windows(); ++win) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
          auto wrapped = [&](std::size_t k) {
            const std::size_t y = (win / wx) * n + k / n;
            const std::size_t x = (win % wx) * n + k % n;
            return std::pair{y + g.shift >= h, x + g.shift >= w};
          };
          const float expect = wrapped(i) == wrapped(j) ? 0.0f : kMaskedLogit;
          ASSERT_EQ(m.at((win * t + i) * t + j), expect);
        }
      }
    }
  }
}

TEST(Attention, SingleTokenReturnsProjectedValue) {
  std::mt19937 rng(5);
  auto p = random_attention(4, 2, rng);
  Tensor x = random_tensor({1, 4}, rng);
  Tensor weights;
  Tensor out = multi_head_attention(x, x, p, Tensor(), &weights);
  for (float v : weights.data()) EXPECT_EQ(v, 1.0f);
  auto v = testing::naive_linear(to_double(x), 1, p.wv, p.bv);
  auto expect = testing::naive_linear(v, 1, p.wo, p.bo);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.at(i), expect[i], 1e-5);
}

TEST(Attention, IdenticalKeysAverageValues) {
  std::mt19937 rng(6);
  auto p = random_attention(6, 3, rng);
  Tensor q = random_tensor({5, 6}, rng);
  Tensor row = random_tensor({1, 6}, rng);
  std::vector<float> kv;
  for (int i = 0; i < 4; ++i) kv.insert(kv.end(), row.data().begin(), row.data().end());
  Tensor out = multi_head_attention(q, Tensor({4, 6}, kv), p);
  auto v = testing::naive_linear(to_double(row), 1, p.wv, p.bv);
  auto expect = testing::naive_linear(v, 1, p.wo, p.bo);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out.at(i * 6 + c), expect[c], 1e-5);
  }
}

TEST(Attention, MatchesLoopOracle) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_int_distribution<int> heads(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = heads(rng);
    const std::size_t c = h * 2 * static_cast<std::size_t>(len(rng));
    const std::size_t t = len(rng);
    const std::size_t s = len(rng);
    auto p = random_attention(c, h, rng, trial % 5 != 0);
    Tensor q = random_tensor({t, c}, rng);
    Tensor kv = random_tensor({s, c}, rng);
    std::vector<float> mask(t * s, 0.0f);
    if (trial % 2) {
      for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < s; ++j) mask[i * s + j] = (rng() % 3 == 0) ? kMaskedLogit : 0.0f;
        mask[i * s + rng() % s] = 0.0f;
      }
    }
    Tensor out = multi_head_attention(q, kv, p, trial % 2 ? Tensor({t, s}, mask) : Tensor());
    auto expect = naive_attention(to_double(q), t, to_double(kv), s, p, trial % 2 ? mask : std::vector<float>{});
    for (std::size_t i = 0; i < out.numel(); ++i) {
      ASSERT_NEAR(out.at(i), expect[i], 1e-5) << "trial " << trial;
    }
  }
}

TEST(Attention, WeightRowsSumToOne) {
  std::mt19937 rng(8);
  auto p = random_attention(8, 2, rng);
  Tensor q = random_tensor({3, 5, 8}, rng, 4.0f);
  std::vector<float> mask(3 * 5 * 7, 0.0f);
  for (std::size_t r = 0; r < 15; ++r) {
    for (std::size_t j = 1; j < 7; j += 2) mask[r * 7 + j] = kMaskedLogit;
  }
  Tensor weights;
  multi_head_attention(q, random_tensor({3, 7, 8}, rng, 4.0f), p, Tensor({3, 5, 7}, mask), &weights);
  ASSERT_EQ(weights.shape(), (Shape{3, 2, 5, 7}));
  for (std::size_t r = 0; r < 30; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      const float w = weights.at(r * 7 + j);
      if (j % 2) {
        EXPECT_EQ(w, 0.0f);
      }
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Attention, KeyValuePermutationInvariance) {
  std::mt19937 rng(9);
  auto p = random_attention(8, 4, rng);
  Tensor q = random_tensor({4, 8}, rng);
  Tensor kv = random_tensor({6, 8}, rng);
  std::vector<std::int64_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor shuffled = ops::gather_rows(kv, ops::make_row_index(perm));
  Tensor a = multi_head_attention(q, kv, p);
  Tensor b = multi_head_attention(q, shuffled, p);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-5);
}

TEST(Attention, FullyMaskedRowIsContractError) {
  std::mt19937 rng(10);
  auto p = random_attention(4, 1, rng);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor mask({2, 2}, {0.0f, 0.0f, kMaskedLogit, kMaskedLogit});
  EXPECT_THROW(multi_head_attention(x, x, p, mask), ContractError);
}

TEST(SwinBlock, ZeroOutputProjectionsGiveIdentity) {
  std::mt19937 rng(11);
  auto p = random_swin(8, 2, rng);
  p.attn.wo = Tensor::zeros({8, 8});
  p.attn.bo = Tensor::zeros({8});
  p.fc2_w = Tensor::zeros({32, 8});
  p.fc2_b = Tensor::zeros({8});
  Tensor z = random_tensor({8, 8, 8}, rng);
  for (std::size_t shift : {0u, 2u}) {
    EXPECT_EQ(values(swin_block(z, p, {8, 8, 8, 4, shift})), values(z));
  }
}

TEST(SwinBlock, PreservesShape) {
  std::mt19937 rng(12);
  for (auto [h, w, c, n] : {std::tuple{4u, 4u, 4u, 4u}, std::tuple{8u, 4u, 6u, 2u}, std::tuple{12u, 8u, 8u, 4u}}) {
    auto p = random_swin(c, 2, rng);
    Tensor z = random_tensor({h, w, c}, rng);
    EXPECT_EQ(swin_block(z, p, {h, w, c, n, n / 2}).shape(), (Shape{h, w, c}));
  }
}

TEST(SwinBlock, ShiftedWindowsMixAcrossBoundaries) {
  std::mt19937 rng(13);
  auto p = random_swin(4, 1, rng);
  Tensor z = random_tensor({8, 8, 4}, rng);
  Tensor bumped = z.clone();
  bumped.mutable_data()[(3 * 8 + 3) * 4] += 1.0f;  // token (3, 3)
  auto changed_at = [&](std::size_t shift, std::size_t y, std::size_t x) {
    const WindowGrid g{8, 8, 4, 4, shift};
    Tensor a = swin_block(z, p, g);
    Tensor b = swin_block(bumped, p, g);
    return a.at((y * 8 + x) * 4) != b.at((y * 8 + x) * 4);
  };
  EXPECT_FALSE(changed_at(0, 4, 4));
  EXPECT_TRUE(changed_at(2, 4, 4));
}

TEST(SwinBlock, GradientAlongRandomDirections) {
  std::mt19937 rng(14);
  auto p = random_swin(16, 2, rng);
  const WindowGrid g{8, 8, 16, 4, 2};
  Tensor z = random_tensor({8, 8, 16}, rng);
  auto slice = testing::random_slice(z, 16, rng);
  const Tensor t0 = Tensor::zeros({1, 16});
  auto f = testing::probe_objective([&](const Tensor& t) { return swin_block(slice.at(t), p, g); },
                                    t0, 1);
  EXPECT_LT(grad_check(f, t0, 1e-2).max_rel_error, 1e-2);
}

TEST(SwinBlock, ParameterGradientsAlongRandomDirections) {
  std::mt19937 rng(15);
  auto p = random_swin(8, 2, rng);
  const WindowGrid g{8, 8, 8, 4, 2};
  Tensor z = random_tensor({8, 8, 8}, rng);
  for (Tensor* w : {&p.attn.wq, &p.attn.wv, &p.fc1_w, &p.ln1_gamma}) {
    const Tensor w0 = *w;
    auto slice = testing::random_slice(w0, 8, rng);
    const Tensor t0 = Tensor::zeros({1, 8});
    auto f = testing::probe_objective(
        [&](const Tensor& t) {
          *w = slice.at(t);
          Tensor out = swin_block(z, p, g);
          *w = w0;
          return out;
        },
        t0, 2);
    EXPECT_LT(grad_check(f, t0, 1e-2).max_rel_error, 1e-2);
  }
}

}  // namespace
}  // namespace fd
