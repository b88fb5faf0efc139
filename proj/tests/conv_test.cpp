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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "paramaug/ops.hpp"
#include "paramaug/rng.hpp"
#include "oracles.hpp"

namespace paramaug {
namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

TEST(Conv2d, SumOfNineOnes) {
  Tensor y = conv2d(Tensor::ones(Shape{1, 1, 3, 3}), Tensor::ones(Shape{1, 1, 3, 3}));
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  Tensor x = Tensor::normal(Shape{2, 1, 5, 4}, rng, 1.0);
  Tensor y = conv2d(x, Tensor::ones(Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(2024);
  Tensor x = Tensor::normal(Shape{2, 3, 8, 8}, rng, 1.0);
  Tensor w = Tensor::normal(Shape{4, 3, 3, 3}, rng, 1.0);
  Tensor b = Tensor::normal(Shape{4}, rng, 1.0);
  Tensor y = conv2d(x, w, b, 1, 1);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 8, 8}));
  EXPECT_LE(max_abs_diff(y, testing::naive_conv2d(x, w, b, 1, 1, 1)), 1e-12);
}

TEST(Conv2d, MatchesLoopOracleAcrossGeometries) {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t groups = 1 + rng.uniform_int(3);
    const std::size_t cin = groups * (1 + rng.uniform_int(3));
    const std::size_t cout = groups * (1 + rng.uniform_int(3));
    const std::size_t k = 1 + 2 * rng.uniform_int(3);
    const std::size_t stride = 1 + rng.uniform_int(3);
    const std::size_t pad = rng.uniform_int(3);
    const std::size_t h = k + rng.uniform_int(6);
    const std::size_t w = k + rng.uniform_int(6);
    Tensor x = Tensor::normal(Shape{2, cin, h, w}, rng, 1.0);
    Tensor kw = Tensor::normal(Shape{cout, cin / groups, k, k}, rng, 1.0);
    Tensor b = Tensor::normal(Shape{cout}, rng, 1.0);
    Tensor y = grouped_conv2d(x, kw, groups, b, stride, pad);
    EXPECT_LE(max_abs_diff(y, testing::naive_conv2d(x, kw, b, stride, pad, groups)),
              1e-12)
        << "trial " << trial;
  }
}

TEST(Conv2d, ShapeErrorsNameTheAxis) {
  Tensor x = Tensor::zeros(Shape{1, 3, 5, 5});
  try {
    conv2d(x, Tensor::zeros(Shape{2, 4, 3, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.axis(), 1);
  }
  EXPECT_THROW(conv2d(x, Tensor::zeros(Shape{2, 3, 7, 7})), GeometryError);
  EXPECT_THROW(conv2d(x, Tensor::zeros(Shape{2, 3, 3, 3}), std::nullopt, 0, 0),
               ContractError);
}

TEST(GroupedConv2d, GroupsOneIsConv2d) {
  Rng rng(5);
  Tensor x = Tensor::normal(Shape{2, 4, 6, 6}, rng, 1.0);
  Tensor w = Tensor::normal(Shape{3, 4, 3, 3}, rng, 1.0);
  EXPECT_EQ(grouped_conv2d(x, w, 1, std::nullopt, 1, 1).values(),
            conv2d(x, w, std::nullopt, 1, 1).values());
}

TEST(GroupedConv2d, DepthwiseOfOnes) {
  Tensor y = grouped_conv2d(Tensor::ones(Shape{1, 2, 3, 3}),
                            Tensor::ones(Shape{2, 1, 3, 3}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_EQ(y.values(), (std::vector<double>{9.0, 9.0}));
}

TEST(GroupedConv2d, RandomDepthwiseMatchesOracle) {
  Rng rng(11);
  Tensor x = Tensor::normal(Shape{3, 6, 9, 7}, rng, 1.0);
  Tensor w = Tensor::normal(Shape{6, 1, 3, 3}, rng, 1.0);
  Tensor y = grouped_conv2d(x, w, 6, std::nullopt, 2, 1);
  EXPECT_LE(max_abs_diff(y, testing::naive_conv2d(x, w, std::nullopt, 2, 1, 6)),
            1e-12);
}

TEST(GroupedConv2d, DivisibilityViolation) {
  EXPECT_THROW(grouped_conv2d(Tensor::zeros(Shape{1, 3, 4, 4}),
                              Tensor::zeros(Shape{2, 1, 3, 3}), 2),
               ShapeError);
}

TEST(Conv2dPerSample, EachSampleUsesItsKernel) {
  Rng rng(9);
  Tensor x = Tensor::normal(Shape{3, 2, 5, 5}, rng, 1.0);
  Tensor w = Tensor::normal(Shape{3, 4, 2, 3, 3}, rng, 1.0);
  Tensor b = Tensor::normal(Shape{3, 4}, rng, 1.0);
  Tensor y = conv2d_per_sample(x, w, b, ConvGeometry{1, 1, 1});
  for (std::size_t s = 0; s < 3; ++s) {
    Tensor ys = testing::naive_conv2d(slice(x, 0, s, 1),
                                      reshape(slice(w, 0, s, 1), Shape{4, 2, 3, 3}),
                                      reshape(slice(b, 0, s, 1), Shape{4}), 1, 1, 1);
    EXPECT_LE(max_abs_diff(slice(y, 0, s, 1), ys), 1e-12);
  }
}

}  // namespace
}  // namespace paramaug
