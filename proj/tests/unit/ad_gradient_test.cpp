#include <gtest/gtest.h>

#include <random>

#include "../support/gradcheck.hpp"
#include "egqn/ad/ops.hpp"

namespace {

using egqn::ad::Array;
using egqn::ad::Padding;
using egqn::testing::grad_check;
using egqn::testing::random_array;
using egqn::testing::weighted_sum;
namespace ad = egqn::ad;

constexpr double kTolerance = 1e-5;

// Pushes every element away from zero so FD steps never straddle the relu kink.
Array<double> away_from_zero(Array<double> a) {
  std::vector<double> v = a.vector();
  for (auto& x : v) x = x >= 0 ? x + 0.1 : x - 0.1;
  return a.replaced(std::move(v));
}

TEST(GradCheck, BinaryOpsWithBroadcast) {
  std::mt19937_64 rng(21);
  auto a = random_array({3, 2, 4}, rng);
  auto b = random_array({3, 2, 4}, rng);
  auto bias = random_array({4}, rng);
  auto s = random_array({1}, rng);
  for (auto op : {ad::BinaryOp::kAdd, ad::BinaryOp::kSub, ad::BinaryOp::kMul}) {
    auto r = grad_check([op](const auto& l) { return weighted_sum(ad::elementwise(op, l[0], l[1])); }, {a, b});
    EXPECT_LT(r.max_rel_error, kTolerance);
    r = grad_check([op](const auto& l) { return weighted_sum(ad::elementwise(op, l[0], l[1])); }, {a, bias});
    EXPECT_LT(r.max_rel_error, kTolerance);
    r = grad_check([op](const auto& l) { return weighted_sum(ad::elementwise(op, l[0], l[1])); }, {s, a});
    EXPECT_LT(r.max_rel_error, kTolerance);
  }
}

TEST(GradCheck, UnaryOps) {
  std::mt19937_64 rng(22);
  auto x = away_from_zero(random_array({5, 3}, rng, -2, 2));
  for (auto op : {ad::UnaryOp::kSigmoid, ad::UnaryOp::kTanh, ad::UnaryOp::kRelu, ad::UnaryOp::kExp}) {
    auto r = grad_check([op](const auto& l) { return weighted_sum(ad::elementwise(op, l[0])); }, {x});
    EXPECT_LT(r.max_rel_error, kTolerance) << static_cast<int>(op);
  }
  auto r = grad_check([](const auto& l) { return weighted_sum(ad::scale(l[0], -0.7)); }, {x});
  EXPECT_LT(r.max_rel_error, kTolerance);
  r = grad_check([](const auto& l) { return weighted_sum(ad::clamp(l[0], -1.0, 1.0)); }, {x});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, ReluSubgradientAtZeroIsZero) {
  auto x = Array<double>(ad::Shape{3}, {0.0, 1.0, -1.0}, true);
  ad::Tape<double> tape;
  Array<double> loss;
  {
    ad::TapeScope<double> scope(tape);
    loss = ad::sum(ad::relu(x));
  }
  auto g = ad::backward(loss, tape).at(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(GradCheck, ShapeOps) {
  std::mt19937_64 rng(23);
  auto a = random_array({2, 3, 2}, rng);
  auto b = random_array({2, 3, 5}, rng);
  auto c = random_array({2, 3, 2}, rng);
  auto r = grad_check(
      [](const auto& l) {
        std::vector<Array<double>> parts{l[0], l[1]};
        auto cat = ad::concat_last(std::span<const Array<double>>(parts));
        auto sl = ad::slice_last(cat, 1, 6);
        return weighted_sum(ad::reshape(sl, {6, 5}));
      },
      {a, b});
  EXPECT_LT(r.max_rel_error, kTolerance);
  r = grad_check(
      [](const auto& l) {
        std::vector<Array<double>> terms{l[0], l[1]};
        return weighted_sum(ad::add_n(std::span<const Array<double>>(terms)));
      },
      {a, c});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, SumOfMatmul) {
  std::mt19937_64 rng(24);
  auto a = random_array({3, 4}, rng);
  auto b = random_array({4, 2}, rng);
  auto r = grad_check([](const auto& l) { return ad::sum(ad::matmul(l[0], l[1])); }, {a, b});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, MatmulVariants) {
  std::mt19937_64 rng(25);
  auto a = random_array({2, 3, 4}, rng);
  auto shared = random_array({4, 5}, rng);
  auto shared_t = random_array({5, 4}, rng);
  auto batched = random_array({2, 4, 5}, rng);
  auto batched_t = random_array({2, 5, 4}, rng);
  EXPECT_LT(grad_check([](const auto& l) { return weighted_sum(ad::matmul(l[0], l[1])); }, {a, shared}).max_rel_error, kTolerance);
  EXPECT_LT(grad_check([](const auto& l) { return weighted_sum(ad::matmul(l[0], l[1], true)); }, {a, shared_t}).max_rel_error, kTolerance);
  EXPECT_LT(grad_check([](const auto& l) { return weighted_sum(ad::matmul(l[0], l[1])); }, {a, batched}).max_rel_error, kTolerance);
  EXPECT_LT(grad_check([](const auto& l) { return weighted_sum(ad::matmul(l[0], l[1], true)); }, {a, batched_t}).max_rel_error, kTolerance);
}

TEST(GradCheck, SoftmaxOfMatmulChain) {
  std::mt19937_64 rng(26);
  auto a = random_array({3, 4}, rng);
  auto b = random_array({4, 6}, rng);
  auto r = grad_check(
      [](const auto& l) { return weighted_sum(ad::softmax_last(ad::matmul(l[0], l[1]))); }, {a, b});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, Conv2dAllGeometries) {
  std::mt19937_64 rng(27);
  struct Case { std::size_t h, k, s; Padding p; };
  for (const Case c : {Case{6, 3, 1, Padding::kSame}, Case{7, 3, 2, Padding::kSame},
                       Case{8, 2, 2, Padding::kValid}, Case{5, 1, 1, Padding::kSame}}) {
    auto x = random_array({c.h, c.h, 2}, rng);
    auto w = random_array({c.k, c.k, 2, 3}, rng);
    auto r = grad_check(
        [c](const auto& l) { return weighted_sum(ad::conv2d(l[0], l[1], c.s, c.p)); }, {x, w});
    EXPECT_LT(r.max_rel_error, kTolerance) << c.h << " " << c.k << " " << c.s;
  }
}

TEST(GradCheck, Conv2dTranspose) {
  std::mt19937_64 rng(28);
  auto x = random_array({2, 2, 3}, rng);
  auto w = random_array({4, 4, 2, 3}, rng);
  auto r = grad_check(
      [](const auto& l) {
        return weighted_sum(ad::conv2d_transpose(l[0], l[1], 4, Padding::kValid, 8, 8));
      },
      {x, w});
  EXPECT_LT(r.max_rel_error, kTolerance);
  auto x2 = random_array({3, 3, 3}, rng);
  auto w2 = random_array({3, 3, 2, 3}, rng);
  r = grad_check(
      [](const auto& l) {
        return weighted_sum(ad::conv2d_transpose(l[0], l[1], 2, Padding::kSame, 5, 5));
      },
      {x2, w2});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, GatherCellsScatter) {
  std::mt19937_64 rng(29);
  auto src = random_array({4, 4, 3}, rng);
  std::vector<std::int32_t> rows{0, -1, 3, 2, 2, -1, 1};
  std::vector<std::int32_t> cols{1, 0, 3, 2, 2, 1, 0};
  auto r = grad_check(
      [&](const auto& l) {
        return weighted_sum(ad::gather_cells(l[0], std::span<const std::int32_t>(rows),
                                             std::span<const std::int32_t>(cols)));
      },
      {src});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

TEST(GradCheck, GaussianTerms) {
  std::mt19937_64 rng(30);
  auto mq = random_array({3, 2}, rng);
  auto lq = random_array({3, 2}, rng, -1, 1);
  auto mp = random_array({3, 2}, rng);
  auto lp = random_array({3, 2}, rng, -1, 1);
  auto r = grad_check([](const auto& l) { return ad::gaussian_kl(l[0], l[1], l[2], l[3]); },
                      {mq, lq, mp, lp});
  EXPECT_LT(r.max_rel_error, kTolerance);
  auto target = random_array({3, 2}, rng, -1, 1, false);
  r = grad_check([&](const auto& l) { return ad::gaussian_nll(target, l[0], 1.4); }, {mq});
  EXPECT_LT(r.max_rel_error, kTolerance);
}

}  // namespace
