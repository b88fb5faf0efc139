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
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "paramaug/train/trainer.hpp"

namespace paramaug::train {
namespace {

layers::NamedTensor scalar_param(double v) {
  return {"p", Tensor(Shape{1}, {v}, true)};
}

// Sets the gradient of a leaf directly.
void set_grad(Tensor t, std::vector<double> g) {
  auto dst = t.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

// Hand-evaluated AdamW update for one scalar coordinate.
struct AdamOracle {
  double p, m = 0.0, v = 0.0;
  int t = 0;
  void step(double g, double lr, double wd, double b1 = 0.9, double b2 = 0.999,
            double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    p = p - lr * wd * p;
    p = p - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(AdamW, FirstStepOnScalar) {
  auto p = scalar_param(1.0);
  AdamW opt({p});
  set_grad(p.tensor, {1.0});
  opt.step(0.1, 0.0);
  EXPECT_NEAR(p.tensor.item(), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.tensor.item(), 0.9, 1e-8);
}

TEST(AdamW, MatchesOracleOverManySteps) {
  Rng rng(3);
  auto p = scalar_param(0.7);
  AdamW opt({p});
  AdamOracle ref{0.7};
  for (int i = 0; i < 50; ++i) {
    const double g = rng.normal();
    const double lr = 0.01 * (1 + i % 3), wd = 0.05;
    opt.zero_grad();
    set_grad(p.tensor, {g});
    opt.step(lr, wd);
    ref.step(g, lr, wd);
    ASSERT_NEAR(p.tensor.item(), ref.p, 1e-14) << i;
  }
}

TEST(AdamW, ZeroGradientWithoutDecayIsNoOp) {
  auto p = scalar_param(2.5);
  AdamW opt({p});
  set_grad(p.tensor, {0.0});
  for (int i = 0; i < 5; ++i) opt.step(0.1, 0.0);
  EXPECT_EQ(p.tensor.item(), 2.5);
}

TEST(AdamW, ZeroLearningRateMakesDecayInert) {
  auto p = scalar_param(2.5);
  AdamW opt({p});
  set_grad(p.tensor, {0.3});
  for (int i = 0; i < 5; ++i) opt.step(0.0, 0.5);
  EXPECT_EQ(p.tensor.item(), 2.5);
}

TEST(AdamW, DecayIsDecoupledFromGradient) {
  // With a zero gradient only the multiplicative decay acts.
  auto p = scalar_param(4.0);
  AdamW opt({p});
  set_grad(p.tensor, {0.0});
  opt.step(0.1, 0.5);
  EXPECT_DOUBLE_EQ(p.tensor.item(), 4.0 * (1.0 - 0.05));
}

TEST(AdamW, QuadraticBowlConverges) {
  // f(x) = 0.5 * sum_i a_i (x_i - c_i)^2
  const std::vector<double> a{1.0, 4.0, 0.25}, c{1.5, -2.0, 0.5};
  Tensor x(Shape{3}, {0.0, 0.0, 0.0}, true);
  AdamW opt({{"x", x}});
  std::size_t steps = 0;
  const std::size_t total = 500;
  for (; steps < total; ++steps) {
    double dist = 0.0;
    for (std::size_t i = 0; i < 3; ++i) dist = std::max(dist, std::abs(x.data()[i] - c[i]));
    if (dist <= 1e-6) break;
    opt.zero_grad();
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = a[i] * (x.data()[i] - c[i]);
    set_grad(x, g);
    opt.step(cosine_lr(steps + 1, total, 0, 0.1, 0.0), 0.0);
  }
  EXPECT_LT(steps, total);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(x.data()[i], c[i], 1e-6);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  layers::NamedTensor a{"stem.weight", Tensor(Shape{2}, {1.0, 2.0}, true)};
  layers::NamedTensor b{"head.bias", Tensor(Shape{3}, {1.0, 2.0, 3.0}, true)};
  AdamW opt({a, b});
  set_grad(a.tensor, {0.1, 0.1});
  set_grad(b.tensor, {0.0, NAN, 0.0});
  try {
    opt.step(0.1, 0.0);
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos);
    EXPECT_EQ(e.index(), 1u);
  }
  // Nothing moved.
  EXPECT_EQ(a.tensor.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Clip, ScalesToMaxNorm) {
  Tensor t(Shape{2}, {0.0, 0.0}, true);
  set_grad(t, {3.0, 4.0});
  std::vector<layers::NamedTensor> ps{{"t", t}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(grad_norm(ps), 1.0, 1e-15);
}

TEST(CosineLr, Landmarks) {
  EXPECT_DOUBLE_EQ(cosine_lr(10, 110, 10, 0.5, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(cosine_lr(110, 110, 10, 0.5, 0.1), 0.05);
  EXPECT_NEAR(cosine_lr(60, 110, 10, 0.5, 0.0), 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(0, 110, 10, 0.5, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(cosine_lr(5, 110, 10, 0.5, 0.1), 0.25);
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0, 0.5, 0.1), 0.5);
}

TEST(CosineLr, MonotoneAfterWarmup) {
  double prev = cosine_lr(20, 200, 20, 1.0, 0.1);
  for (std::size_t s = 21; s <= 200; ++s) {
    const double lr = cosine_lr(s, 200, 20, 1.0, 0.1);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, 0.1 - 1e-15);
    prev = lr;
  }
}

TEST(CosineLr, ArgumentErrors) {
  EXPECT_THROW(cosine_lr(11, 10, 0, 1.0, 0.1), ContractError);
  EXPECT_THROW(cosine_lr(0, 10, 10, 1.0, 0.1), ContractError);
  EXPECT_THROW(cosine_lr(0, 10, 12, 1.0, 0.1), ContractError);
  EXPECT_THROW(cosine_lr(0, 10, 2, 1.0, 1.5), ContractError);
}

TEST(Config, TableStyleKeysParse) {
  const json j = json::parse(R"({
    "epochs": 300, "optimizer": "AdamW", "batch_size": 1024, "start_lr": 1e-3,
    "layer_decay": null, "lr_schedule": "Cosine", "warmup_epochs": 20,
    "weight_decay": 0.05, "label_smoothing": 0.1, "stochastic_path": false,
    "randaugment": true, "mixup": false, "cutmix": false, "random_erasing": 0.25,
    "ema": 0.9999
  })");
  const TrainConfig c = config_from_json(j);
  EXPECT_EQ(c.epochs, 300u);
  EXPECT_EQ(c.batch_size, 1024u);
  EXPECT_EQ(c.optimizer, "adamw");
  EXPECT_EQ(c.lr_schedule, "cosine");
  EXPECT_DOUBLE_EQ(c.warmup_epochs, 20.0);
  EXPECT_DOUBLE_EQ(c.label_smoothing, 0.1);
  EXPECT_EQ(c.inert["random_erasing"], 0.25);
  EXPECT_TRUE(c.inert["randaugment"].get<bool>());
  EXPECT_FALSE(c.inert.contains("layer_decay"));
}

TEST(Config, RoundTripAndHash) {
  TrainConfig c;
  c.grad_clip = 1.0;
  c.data = GrammarSpec{};
  c.inert["ema"] = 0.9999;
  const TrainConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  TrainConfig d = c;
  d.seed = 1;
  EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, HashIsFnv1aOfCanonicalText) {
  const std::string text = to_json(TrainConfig{}).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  EXPECT_EQ(config_hash(TrainConfig{}), buf);
}

TEST(Config, ValidationNamesField) {
  auto field_of = [](const std::string& text) {
    try {
      config_from_json(json::parse(text));
    } catch (const ValidationError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(R"({"epochs": 0})"), "epochs");
  EXPECT_EQ(field_of(R"({"learning_rate": 0.1})"), "learning_rate");
  EXPECT_EQ(field_of(R"({"optimizer": "sgd"})"), "optimizer");
  EXPECT_EQ(field_of(R"({"optimizer": {"name": "adamw", "beta1": 1.0}})"), "optimizer.beta1");
  EXPECT_EQ(field_of(R"({"epochs": 5, "warmup_epochs": 5})"), "warmup_epochs");
  EXPECT_EQ(field_of(R"({"lr_schedule": "step"})"), "lr_schedule");
  EXPECT_EQ(field_of(R"({"data": {"kind": "imagenet"}})"), "data.kind");
  EXPECT_EQ(field_of(R"({"data": {"kind": "blobs", "vocab": 3}})"), "data.vocab");
  EXPECT_EQ(field_of(R"({"data": {"kind": "grammar", "branching": 100}})"), "data.branching");
  EXPECT_EQ(field_of(R"({"aux_loss_weight": -1})"), "aux_loss_weight");
  EXPECT_EQ(field_of(R"({"epochs": 3})"), "<none>");
}

TEST(Config, LoadPrefixesPath) {
  const auto path = std::filesystem::temp_directory_path() / "paramaug_bad_config.json";
  std::ofstream(path) << R"({"batch_size": -4})";
  try {
    load_config(path.string());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), path.string() + ":batch_size");
  }
  std::filesystem::remove(path);
}

TEST(Data, BlobsAreSeedDetermined) {
  BlobSpec s;
  s.size = 40;
  const BlobDataset a = make_blobs(s), b = make_blobs(s);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  s.seed = 1;
  EXPECT_NE(make_blobs(s).images, a.images);
  // Sample i depends on (seed, i) only: a longer set extends a shorter one.
  BlobSpec longer = s;
  longer.size = 80;
  const BlobDataset l = make_blobs(longer), sh = make_blobs(s);
  EXPECT_TRUE(std::equal(sh.images.begin(), sh.images.end(), l.images.begin()));
  const std::vector<std::size_t> rows{3, 0};
  EXPECT_EQ(a.batch(rows).shape(), (Shape{2, 3, 8, 8}));
}

TEST(Data, GrammarStreamProperties) {
  GrammarSpec g;
  g.tokens = 5000;
  const TokenStream a = make_grammar(g), b = make_grammar(g);
  EXPECT_EQ(a.tokens, b.tokens);
  ASSERT_EQ(a.tokens.size(), 5000u);
  std::map<std::size_t, std::set<std::size_t>> successors;
  for (std::size_t i = 0; i + 1 < a.tokens.size(); ++i) {
    ASSERT_LT(a.tokens[i], g.vocab);
    if (a.tokens[i] != 0 && a.tokens[i + 1] != 0) successors[a.tokens[i]].insert(a.tokens[i + 1]);
  }
  for (const auto& [sym, next] : successors) EXPECT_LE(next.size(), g.branching) << sym;
  EXPECT_EQ(a.windows(), (5000u - 1) / g.seq_len);
  const auto w = a.window(2);
  EXPECT_EQ(w.size(), g.seq_len + 1);
  EXPECT_EQ(w[0], a.tokens[2 * g.seq_len]);
}

models::CnnDescriptor tiny_cnn(bool dynamic) {
  models::CnnDescriptor d;
  d.input_h = d.input_w = 8;
  d.stem = {8, 3, 1};
  d.stages = {{{2.0, 8, 1, 3, {}}}, {{2.0, 16, 2, 3, {}}}};
  d.head_channels = 16;
  d.num_classes = 2;
  if (dynamic) d.dynamic = models::DynamicDesc{4, {models::ConvRole::Expand}, {}};
  return d;
}

TrainConfig blob_config() {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 32;
  c.start_lr = 1e-2;
  c.warmup_epochs = 1;
  c.weight_decay = 0.0;
  c.label_smoothing = 0.1;
  BlobSpec s;
  s.size = 256;
  c.data = s;
  return c;
}

RunRecord run_blobs(bool dynamic, const TrainConfig& c) {
  Rng rng(c.seed);
  models::CnnModel model(tiny_cnn(dynamic), rng);
  return train_classifier(model, make_blobs(std::get<BlobSpec>(c.data)), c);
}

TEST(TrainClassifier, SeparableBlobsAndDeterminism) {
  const TrainConfig c = blob_config();
  const RunRecord a = run_blobs(false, c);
  EXPECT_LE(a.steps.size(), 500u);
  EXPECT_GE(*a.final_accuracy, 0.99);
  const RunRecord b = run_blobs(false, c);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
  EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
  EXPECT_FALSE(a.wall_clock_seconds.has_value());
}

TEST(TrainClassifier, DynamicCoefficientsStayPositive) {
  const RunRecord r = run_blobs(true, blob_config());
  EXPECT_GE(*r.final_accuracy, 0.99);
  for (const auto& s : r.steps) {
    ASSERT_TRUE(s.alpha_min.has_value());
    EXPECT_TRUE(std::isfinite(*s.alpha_min));
    EXPECT_GT(*s.alpha_min, 0.0);
  }
}

TEST(TrainClassifier, ShapeMismatchAndDivergence) {
  TrainConfig c = blob_config();
  BlobSpec s = std::get<BlobSpec>(c.data);
  s.channels = 1;
  Rng rng(0);
  models::CnnModel model(tiny_cnn(false), rng);
  EXPECT_THROW(train_classifier(model, make_blobs(s), c), ShapeError);
  s.channels = 3;
  s.num_classes = 3;
  EXPECT_THROW(train_classifier(model, make_blobs(s), c), ShapeError);

  // Poison the classifier bias so the first loss is NaN (ReLU would mask a
  // NaN placed earlier in the network).
  s.num_classes = 2;
  Tensor w = model.parameters().back().tensor;
  w.mutable_data()[0] = NAN;
  try {
    train_classifier(model, make_blobs(s), c);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 0u);
  }
}

TEST(TrainClassifier, LabelSmoothingZeroIsPlainCrossEntropy) {
  Rng rng(1);
  Tensor logits = Tensor::normal(Shape{5, 4}, rng, 2.0);
  const std::vector<std::size_t> t{0, 3, 1, 1, 2};
  double ref = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double mx = -INFINITY, z = 0.0;
    for (std::size_t k = 0; k < 4; ++k) mx = std::max(mx, logits.at({i, k}));
    for (std::size_t k = 0; k < 4; ++k) z += std::exp(logits.at({i, k}) - mx);
    ref += -(logits.at({i, t[i]}) - mx - std::log(z));
  }
  EXPECT_NEAR(cross_entropy(logits, t, 0.0).item(), ref / 5.0, 1e-14);
}

// Single-layer toy LM on a 4096-token grammar stream, 12 epochs.
models::LlamaDescriptor tiny_lm(std::size_t experts, double aux_weight) {
  models::LlamaDescriptor d;
  d.d_model = 32;
  d.d_ff = 64;
  d.n_heads = 2;
  d.n_layers = 1;
  d.vocab_size = 100;
  d.max_seq_len = 32;
  if (experts) d.moe = models::MoeDesc{experts, layers::Placement::UpProj, 2.0, aux_weight};
  return d;
}

TrainConfig lm_config(std::uint64_t seed, double aux_weight) {
  TrainConfig c;
  c.epochs = 12;
  c.batch_size = 8;
  c.start_lr = 1e-2;
  c.weight_decay = 0.0;
  c.aux_loss_weight = aux_weight;
  c.seed = seed;
  GrammarSpec g;
  g.tokens = 4096;
  g.vocab = 100;
  g.seq_len = 32;
  c.data = g;
  return c;
}

RunRecord run_lm(std::size_t experts, double aux_weight, std::uint64_t seed) {
  const TrainConfig c = lm_config(seed, aux_weight);
  Rng rng(seed);
  models::LlamaModel model(tiny_lm(experts, aux_weight), rng);
  return train_lm(model, make_grammar(std::get<GrammarSpec>(c.data)), c);
}

TEST(TrainLm, DenseLossDecreasesEveryEpoch) {
  const RunRecord r = run_lm(0, 0.0, 0);
  ASSERT_EQ(r.epochs.size(), 12u);
  for (std::size_t e = 1; e < r.epochs.size(); ++e)
    EXPECT_LT(r.epochs[e].mean_loss, r.epochs[e - 1].mean_loss) << e;
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.aux, 0.0);
    EXPECT_TRUE(s.load.empty());
  }
}

TEST(TrainLm, MoeNotWorseThanDenseOnSameStream) {
  const RunRecord dense = run_lm(0, 0.0, 0);
  const RunRecord moe = run_lm(4, 0.01, 0);
  EXPECT_GT(moe.parameters, dense.parameters);
  EXPECT_LE(moe.final_ce, dense.final_ce);
  ASSERT_FALSE(moe.steps.front().load.empty());
  std::size_t routed = 0;
  for (std::size_t n : moe.steps.front().load[0]) routed += n;
  EXPECT_EQ(routed, 8u * 32u);  // every token of the batch is dispatched once
}

TEST(TrainLm, ZeroAuxWeightGivesPureCrossEntropy) {
  const RunRecord r = run_lm(4, 0.0, 1);
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.loss, s.ce);
    EXPECT_GE(s.aux, 1.0 - 1e-12);
  }
}

TEST(TrainLm, BalancingLossLowersLoadRatio) {
  std::vector<double> with, without;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    with.push_back(*run_lm(4, 0.1, seed).load_ratio);
    without.push_back(*run_lm(4, 0.0, seed).load_ratio);
  }
  std::sort(with.begin(), with.end());
  std::sort(without.begin(), without.end());
  EXPECT_LT(with[1], without[1]);
}

TEST(TrainLm, Deterministic) {
  const RunRecord a = run_lm(2, 0.01, 5), b = run_lm(2, 0.01, 5);
  EXPECT_EQ(summary_json(a).dump(), summary_json(b).dump());
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].loss, b.steps[i].loss);
    EXPECT_EQ(a.steps[i].load, b.steps[i].load);
  }
}

TEST(RunRecordIo, WriteAndReadBack) {
  const RunRecord r = run_blobs(false, blob_config());
  const auto dir = std::filesystem::temp_directory_path() / "paramaug_run_io";
  std::filesystem::remove_all(dir);
  write_run_record(r, dir, 3);
  std::ifstream steps(dir / "steps.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(steps, line);) {
    const json j = json::parse(line);
    EXPECT_TRUE(j.contains("loss"));
    ++lines;
  }
  EXPECT_EQ(lines, (r.steps.size() + 2) / 3 + ((r.steps.size() - 1) % 3 != 0));
  const RunRecord back = read_run_summary(dir / "summary.json");
  EXPECT_EQ(back.final_accuracy, r.final_accuracy);
  EXPECT_EQ(back.parameters, r.parameters);
  EXPECT_EQ(back.epochs.size(), r.epochs.size());

  std::ofstream(dir / "broken.json") << "{\"task\": \"lm\"}";
  try {
    read_run_summary(dir / "broken.json");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace paramaug::train
