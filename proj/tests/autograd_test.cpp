/* Copyright 2026 The paramaug Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "paramaug/gradcheck.hpp"
#include "paramaug/ops.hpp"
#include "paramaug/rng.hpp"

namespace paramaug {
namespace {

TEST(Backward, SumOfOnes) {
  Tensor x = Tensor::ones(Shape{3}, true);
  backward(sum(x));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  Tensor x(Shape{3}, {1, 2, 3}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::ones(Shape{3}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, RepeatedPassesAccumulate) {
  Rng rng(4);
  Tensor x = Tensor::normal(Shape{2, 3, 5, 5}, rng, 1.0, true);
  Tensor w = Tensor::normal(Shape{4, 3, 3, 3}, rng, 1.0, true);
  Tensor loss = sum(mul(relu(conv2d(x, w, std::nullopt, 1, 1)),
                        sigmoid(conv2d(x, w, std::nullopt, 1, 1))));
  backward(loss);
  std::vector<double> once(w.grad().begin(), w.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i)
    EXPECT_EQ(w.grad()[i], 2.0 * once[i]);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  Tensor x(Shape{2}, {1.5, -0.5}, true);
  Tensor y = mul(x, x);
  backward(sum(add(y, y)));  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -2.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::ones(Shape{2}, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  EXPECT_TRUE(y.is_leaf());
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, IdentityIsExactUpToRounding) {
  Rng rng(1);
  Tensor x = Tensor::normal(Shape{10}, rng, 1.0);
  GradReport r = check_gradients([](const Tensor& t) { return t; }, x);
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.coordinates, 10u);
}

TEST(GradCheck, NonFiniteReportsCoordinate) {
  Tensor x(Shape{3}, {1.0, 2.0, std::numeric_limits<double>::infinity()});
  try {
    check_gradients([](const Tensor& t) { return sum(mul(t, t)); }, x);
    FAIL();
  } catch (const NonFiniteError& e) {
    SUCCEED();
  }
}

TEST(GradCheck, RejectsNonPositiveStep) {
  Tensor x = Tensor::ones(Shape{2});
  EXPECT_THROW(check_gradients([](const Tensor& t) { return t; }, x, 0.0),
               ContractError);
}

TEST(GradCheck, DetectsCorruptedBackwardRule) {
  Rng rng(2);
  Tensor x = Tensor::normal(Shape{4}, rng, 1.0);
  ScopedBackwardFault fault("sigmoid", 1.01);
  GradReport r = check_gradients([](const Tensor& t) { return sigmoid(t); }, x);
  EXPECT_GT(r.max_rel_error, 1e-3);
}

// Every registered op against central differences, 20 seeds each.
struct OpCase {
  std::string name;
  Shape input;
  std::function<Tensor(const Tensor&, Rng&)> build;
};

class OpGradients : public ::testing::TestWithParam<std::size_t> {};

std::vector<OpCase> op_cases() {
  return {
      {"add", Shape{3, 4}, [](const Tensor& x, Rng& r) {
         return add(x, Tensor::normal(Shape{4}, r, 1.0, true)); }},
      {"add_bcast_grad", Shape{4}, [](const Tensor& x, Rng& r) {
         return add(Tensor::normal(Shape{3, 4}, r, 1.0), x); }},
      {"sub", Shape{3, 4}, [](const Tensor& x, Rng& r) {
         return sub(Tensor::normal(Shape{3, 4}, r, 1.0), x); }},
      {"mul", Shape{3, 4}, [](const Tensor& x, Rng& r) {
         return mul(x, Tensor::normal(Shape{3, 4}, r, 1.0)); }},
      {"mul_self", Shape{5}, [](const Tensor& x, Rng&) { return mul(x, x); }},
      {"scale", Shape{5}, [](const Tensor& x, Rng&) { return scale(x, -2.5); }},
      {"relu", Shape{6}, [](const Tensor& x, Rng&) { return relu(x); }},
      {"sigmoid", Shape{6}, [](const Tensor& x, Rng&) { return sigmoid(x); }},
      {"silu", Shape{6}, [](const Tensor& x, Rng&) { return silu(x); }},
      {"matmul_lhs", Shape{3, 4}, [](const Tensor& x, Rng& r) {
         return matmul(x, Tensor::normal(Shape{4, 2}, r, 1.0)); }},
      {"matmul_rhs", Shape{4, 2}, [](const Tensor& x, Rng& r) {
         return matmul(Tensor::normal(Shape{3, 4}, r, 1.0), x); }},
      {"transpose", Shape{3, 4}, [](const Tensor& x, Rng&) { return transpose(x); }},
      {"reshape", Shape{3, 4}, [](const Tensor& x, Rng&) {
         return reshape(x, Shape{2, 6}); }},
      {"sum_axis", Shape{2, 3, 4}, [](const Tensor& x, Rng&) { return sum(x, 1); }},
      {"mean_axis", Shape{2, 3, 4}, [](const Tensor& x, Rng&) { return mean(x, 2); }},
      {"mean", Shape{2, 3}, [](const Tensor& x, Rng&) { return mean(x); }},
      {"softmax0", Shape{4, 3}, [](const Tensor& x, Rng&) { return softmax(x, 0); }},
      {"softmax1", Shape{4, 3}, [](const Tensor& x, Rng&) { return softmax(x, 1); }},
      {"causal_softmax", Shape{4, 4}, [](const Tensor& x, Rng&) {
         return softmax(causal_mask(x), 1); }},
      {"global_avg_pool", Shape{2, 3, 4, 4}, [](const Tensor& x, Rng&) {
         return global_avg_pool(x); }},
      {"slice", Shape{3, 5}, [](const Tensor& x, Rng&) { return slice(x, 1, 1, 3); }},
      {"concat", Shape{2, 3}, [](const Tensor& x, Rng&) {
         return concat({x, scale(x, 3.0), x}, 1); }},
      {"index_select", Shape{4, 3}, [](const Tensor& x, Rng&) {
         std::vector<std::size_t> rows{3, 0, 3, 1};
         return index_select(x, rows); }},
      {"scatter_rows", Shape{2, 3}, [](const Tensor& x, Rng&) {
         std::vector<std::size_t> rows{4, 1};
         return scatter_rows(x, rows, 5); }},
      {"gather", Shape{3, 4}, [](const Tensor& x, Rng&) {
         std::vector<std::size_t> r{0, 2, 2}, c{3, 1, 0};
         return gather(x, r, c); }},
      {"scale_rows_a", Shape{3, 4}, [](const Tensor& x, Rng& r) {
         return scale_rows(x, Tensor::normal(Shape{3}, r, 1.0)); }},
      {"scale_rows_s", Shape{3}, [](const Tensor& x, Rng& r) {
         return scale_rows(Tensor::normal(Shape{3, 4}, r, 1.0), x); }},
      {"rms_norm_x", Shape{3, 5}, [](const Tensor& x, Rng& r) {
         return rms_norm(x, Tensor::normal(Shape{5}, r, 1.0)); }},
      {"rms_norm_w", Shape{5}, [](const Tensor& x, Rng& r) {
         return rms_norm(Tensor::normal(Shape{3, 5}, r, 1.0), x); }},
      {"cross_entropy", Shape{4, 5}, [](const Tensor& x, Rng&) {
         std::vector<std::size_t> t{0, 4, 2, 2};
         return cross_entropy(x, t, 0.1); }},
      {"conv2d_x", Shape{2, 3, 5, 5}, [](const Tensor& x, Rng& r) {
         return conv2d(x, Tensor::normal(Shape{4, 3, 3, 3}, r, 1.0),
                       Tensor::normal(Shape{4}, r, 1.0), 2, 1); }},
      {"conv2d_w", Shape{4, 3, 3, 3}, [](const Tensor& w, Rng& r) {
         return conv2d(Tensor::normal(Shape{2, 3, 5, 5}, r, 1.0), w,
                       std::nullopt, 1, 1); }},
      {"conv2d_b", Shape{4}, [](const Tensor& b, Rng& r) {
         return conv2d(Tensor::normal(Shape{2, 3, 5, 5}, r, 1.0),
                       Tensor::normal(Shape{4, 3, 3, 3}, r, 1.0), b, 1, 0); }},
      {"grouped_conv2d_x", Shape{1, 4, 5, 5}, [](const Tensor& x, Rng& r) {
         return grouped_conv2d(x, Tensor::normal(Shape{4, 1, 3, 3}, r, 1.0), 4,
                               std::nullopt, 1, 1); }},
      {"grouped_conv2d_w", Shape{6, 2, 3, 3}, [](const Tensor& w, Rng& r) {
         return grouped_conv2d(Tensor::normal(Shape{2, 4, 5, 5}, r, 1.0), w, 2,
                               std::nullopt, 2, 1); }},
      {"conv2d_per_sample_w", Shape{2, 3, 2, 3, 3}, [](const Tensor& w, Rng& r) {
         return conv2d_per_sample(Tensor::normal(Shape{2, 2, 4, 4}, r, 1.0), w,
                                  Tensor::normal(Shape{2, 3}, r, 1.0),
                                  ConvGeometry{1, 1, 1}); }},
      {"mix_coeffs", Shape{3, 2}, [](const Tensor& a, Rng& r) {
         return mix(a, {Tensor::normal(Shape{2, 2}, r, 1.0),
                        Tensor::normal(Shape{2, 2}, r, 1.0)}); }},
      {"mix_expert", Shape{2, 2}, [](const Tensor& e, Rng& r) {
         return mix(Tensor::normal(Shape{3, 2}, r, 1.0),
                    {e, Tensor::normal(Shape{2, 2}, r, 1.0)}); }},
  };
}

TEST_P(OpGradients, MatchCentralDifferences) {
  const OpCase c = op_cases()[GetParam()];
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed * 131 + 17);
    Tensor x = Tensor::normal(c.input, rng, 1.0);
    Rng aux = rng.split(1);
    std::function<Tensor(const Tensor&)> f = [&](const Tensor& t) {
      Rng local = aux;  // same auxiliary operands on every evaluation
      return c.build(t, local);
    };
    GradReport r = check_gradients(f, x, 1e-5, seed);
    EXPECT_LE(r.max_rel_error, 1e-5) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradients,
                         ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) {
                           return op_cases()[info.param].name;
                         });

}  // namespace
}  // namespace paramaug
