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
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include <gtest/gtest.h>

#include "paramaug/complexity.hpp"
#include "paramaug/models/checkpoint.hpp"

namespace paramaug::models {
namespace {

CnnDescriptor toy_cnn() {
  CnnDescriptor d;
  d.stem = {16, 3, 1};
  d.stages = {{{2.0, 16, 1, 3, {}}},
              {{2.0, 32, 2, 3, {}}},
              {{2.0, 64, 2, 3, {}}, {1.5, 64, 1, 5, {}}}};
  d.head_channels = 64;
  d.num_classes = 10;
  return d;
}

// Sums the sizes of tensors named `scope` or living under `scope.`.
std::size_t enumerate(const std::vector<layers::NamedTensor>& params,
                      const std::string& scope = "") {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (scope.empty() || p.name == scope || p.name.rfind(scope + ".", 0) == 0)
      n += p.tensor.numel();
  }
  return n;
}

TEST(Descriptor, JsonRoundTrip) {
  CnnDescriptor d = toy_cnn();
  d.dynamic = DynamicDesc{4, {ConvRole::Expand, ConvRole::Shortcut}, {1, 2}};
  const json j = to_json(d);
  EXPECT_EQ(to_json(cnn_from_json(j)), j);

  LlamaDescriptor lm = llama_1b(MoeDesc{8, layers::Placement::DownProj, 1.5, 0.02});
  EXPECT_EQ(to_json(llama_from_json(to_json(lm))), to_json(lm));
  EXPECT_TRUE(std::holds_alternative<LlamaDescriptor>(descriptor_from_json(to_json(lm))));
}

TEST(Descriptor, UnknownFieldNamesPath) {
  json j = to_json(toy_cnn());
  j["stages"][1][0]["ratio"] = 3;
  try {
    cnn_from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "stages[1][0].ratio");
  }
}

TEST(Descriptor, ChannelChainMismatchNamesBlock) {
  CnnDescriptor d = toy_cnn();
  d.stages[2][0].c_in = 16;  // previous block produces 32
  try {
    d.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "stages[2][0].c_in");
    EXPECT_NE(std::string(e.what()).find("block 2.0"), std::string::npos);
  }
  d.stages[2][0].c_in = 32;
  EXPECT_NO_THROW(d.validate());
}

TEST(Descriptor, ValidationErrors) {
  auto field_of = [](const CnnDescriptor& d) {
    try {
      d.validate();
    } catch (const ValidationError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CnnDescriptor d = toy_cnn();
  d.stages[0][0].c_out = 15;
  EXPECT_EQ(field_of(d), "stages[0][0].c_out");
  d = toy_cnn();
  d.stages[1][0].expansion = 1.03;
  EXPECT_EQ(field_of(d), "stages[1][0].expansion");
  d = toy_cnn();
  d.stages[0][0].kernel = 4;
  EXPECT_EQ(field_of(d), "stages[0][0].kernel");
  d = toy_cnn();
  d.dynamic = DynamicDesc{2, {ConvRole::Cheap}, {}};
  EXPECT_EQ(field_of(d), "dynamic.roles");
  d.dynamic = DynamicDesc{2, {ConvRole::Expand}, {9}};
  EXPECT_EQ(field_of(d), "dynamic.blocks[0]");
  d = toy_cnn();
  d.input_h = d.input_w = 1;
  d.stem.kernel = 7;
  d.stem.stride = 4;
  EXPECT_NO_THROW(d.validate());  // padding keeps every extent >= 1

  LlamaDescriptor lm;
  lm.n_heads = 5;
  EXPECT_THROW(lm.validate(), ValidationError);
  json j = to_json(LlamaDescriptor{});
  j["moe"] = {{"n_experts", 4}, {"placement", "attn"}};
  try {
    llama_from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "moe.placement");
  }
}

TEST(Descriptor, SyntaxErrorCarriesLineAndColumn) {
  try {
    parse_json_text("{\n  \"type\": \"cnn\",\n  \"stages\": [,]\n}", "toy.json");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "toy.json:3:14");
  }
}

TEST(Cnn, ToyForwardShape) {
  Rng rng(1);
  CnnModel model(toy_cnn(), rng);
  Tensor logits = model.forward(Tensor::zeros(Shape{2, 3, 32, 32}));
  ASSERT_EQ(logits.shape(), (Shape{2, 10}));
  for (double v : logits.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(model.forward(Tensor::zeros(Shape{2, 4, 32, 32})), ShapeError);
}

TEST(Cnn, BuiltCountsEqualClosedForms) {
  const std::set<ConvRole> role_sets[] = {
      {},
      {ConvRole::Expand},
      {ConvRole::Project, ConvRole::Downsample},
      {ConvRole::Stem, ConvRole::Shortcut, ConvRole::Head},
      {ConvRole::Stem, ConvRole::Expand, ConvRole::Downsample, ConvRole::Project,
       ConvRole::Shortcut, ConvRole::Head}};
  for (const auto& roles : role_sets) {
    for (std::size_t m : {1u, 2u, 3u}) {
      CnnDescriptor d = toy_cnn();
      if (!roles.empty()) d.dynamic = DynamicDesc{m, roles, {}};
      Rng rng(m);
      CnnModel model(d, rng);
      const auto params = model.parameters();
      complexity::ComplexityReport r = complexity::count_cnn(d);
      EXPECT_EQ(static_cast<complexity::Count>(enumerate(params)), r.total_params);
      for (const auto& cost : r.per_layer) {
        EXPECT_EQ(static_cast<complexity::Count>(enumerate(params, cost.layer)), cost.params())
            << cost.layer;
      }
    }
  }
}

TEST(Cnn, SingleExpertAddsOnlyRouterTerms) {
  CnnDescriptor dense = toy_cnn();
  CnnDescriptor dyn = dense;
  dyn.dynamic = DynamicDesc{1, {ConvRole::Expand}, {}};
  Rng a(3), b(3);
  const std::size_t n_dense = CnnModel(dense, a).parameter_count();
  const std::size_t n_dyn = CnnModel(dyn, b).parameter_count();
  std::size_t router = 0;
  for (const auto& site : layout(dyn).convs) {
    if (site.dynamic_m == 0) continue;
    const std::size_t c = site.spec.c_in;
    router += c * c + c + c + 1;  // w1, b1, w2 (c x 1), b2
  }
  EXPECT_GT(router, 0u);
  EXPECT_EQ(n_dyn - n_dense, router);
}

TEST(Cnn, AffineGrowthInExperts) {
  std::vector<long long> totals;
  for (std::size_t m : {1u, 2u, 4u, 8u}) {
    CnnDescriptor d = toy_cnn();
    d.dynamic = DynamicDesc{m, {ConvRole::Expand, ConvRole::Project}, {}};
    Rng rng(0);
    totals.push_back(static_cast<long long>(CnnModel(d, rng).parameter_count()));
  }
  const long long slope = totals[1] - totals[0];
  EXPECT_EQ(totals[2] - totals[0], 3 * slope);
  EXPECT_EQ(totals[3] - totals[0], 7 * slope);
}

TEST(Cnn, DynamicReplacementIsLocal) {
  CnnDescriptor plain = toy_cnn();
  CnnDescriptor dyn = plain;
  dyn.dynamic = DynamicDesc{4, {ConvRole::Expand, ConvRole::Project}, {1}};
  Rng a(11), b(11);
  CnnModel ma(plain, a), mb(dyn, b);
  std::map<std::string, Tensor> pa;
  for (const auto& p : ma.parameters()) pa.emplace(p.name, p.tensor);
  std::size_t compared = 0;
  for (const auto& p : mb.parameters()) {
    if (p.name.rfind("stages.1.", 0) == 0) continue;  // block 1 was replaced
    ASSERT_TRUE(pa.count(p.name)) << p.name;
    EXPECT_EQ(pa.at(p.name).values(), p.tensor.values()) << p.name;
    ++compared;
  }
  std::size_t untouched = 0;
  for (const auto& [name, t] : pa)
    if (name.rfind("stages.1.", 0) != 0) ++untouched;
  EXPECT_EQ(compared, untouched);
  Rng xr(5);
  const std::size_t widths[] = {16, 16, 32, 64}, sides[] = {32, 32, 16, 8};
  for (std::size_t i : {0u, 2u, 3u}) {
    Tensor x = Tensor::normal(Shape{2, widths[i], sides[i], sides[i]}, xr, 1.0);
    EXPECT_EQ(ma.block(i).forward(x).values(), mb.block(i).forward(x).values());
  }
}

TEST(Cnn, TraceCollectsCoefficients) {
  CnnDescriptor d = toy_cnn();
  d.dynamic = DynamicDesc{4, {ConvRole::Expand}, {}};
  Rng rng(2);
  CnnModel model(d, rng);
  layers::ForwardTrace trace;
  model.forward(Tensor::zeros(Shape{3, 3, 32, 32}), &trace);
  ASSERT_EQ(trace.coefficients.size(), d.block_count());
  for (const Tensor& alpha : trace.coefficients) EXPECT_EQ(alpha.shape(), (Shape{3, 4}));
}

LlamaDescriptor tiny_lm() {
  LlamaDescriptor d;
  d.d_model = 64;
  d.d_ff = 256;
  d.n_heads = 4;
  d.n_layers = 2;
  d.vocab_size = 100;
  d.max_seq_len = 16;
  return d;
}

TEST(Lm, LogitsShapeAndCausality) {
  Rng rng(4);
  LlamaModel model(tiny_lm(), rng);
  std::vector<std::size_t> a{1, 5, 9, 13, 17, 21, 25, 29};
  Tensor la = model.forward(a).logits;
  ASSERT_EQ(la.shape(), (Shape{8, 100}));
  for (std::size_t t = 0; t < 8; ++t) {
    std::vector<std::size_t> b = a;
    for (std::size_t j = t + 1; j < 8; ++j) b[j] = (b[j] * 7 + 3) % 100;
    Tensor lb = model.forward(b).logits;
    EXPECT_EQ(slice(la, 0, 0, t + 1).values(), slice(lb, 0, 0, t + 1).values()) << t;
    if (t + 1 < 8) {
      EXPECT_NE(slice(la, 0, t + 1, 1).values(), slice(lb, 0, t + 1, 1).values());
    }
  }
}

TEST(Lm, SingleExpertMatchesDense) {
  LlamaDescriptor dense_desc = tiny_lm();
  for (layers::Placement p :
       {layers::Placement::Gate, layers::Placement::UpProj, layers::Placement::DownProj}) {
    LlamaDescriptor moe_desc = dense_desc;
    moe_desc.moe = MoeDesc{1, p, 1.0, 0.01};
    Rng a(6), b(7);
    LlamaModel dense(dense_desc, a), moe(moe_desc, b);
    std::map<std::string, Tensor> src;
    for (const auto& q : dense.parameters()) src.emplace(q.name, q.tensor);
    for (auto& q : moe.parameters()) {
      if (q.name.ends_with(".router")) continue;
      std::string name = q.name;
      if (name.ends_with(".expert0")) name.resize(name.size() - 8);
      ASSERT_TRUE(src.count(name)) << q.name;
      Tensor dst = q.tensor;
      const auto& v = src.at(name).values();
      std::copy(v.begin(), v.end(), dst.mutable_data().begin());
    }
    std::vector<std::size_t> tokens{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
    Tensor ld = dense.forward(tokens).logits;
    LmOutput lo = moe.forward(tokens);
    double diff = 0.0;
    for (std::size_t i = 0; i < ld.numel(); ++i)
      diff = std::max(diff, std::abs(ld.data()[i] - lo.logits.data()[i]));
    EXPECT_LE(diff, 1e-12);
    EXPECT_DOUBLE_EQ(lo.aux_loss.item(), 1.0);
  }
}

TEST(Lm, BuiltCountEqualsClosedForm) {
  for (std::size_t n : {0u, 1u, 3u}) {
    for (layers::Placement p :
         {layers::Placement::Gate, layers::Placement::UpProj, layers::Placement::DownProj}) {
      LlamaDescriptor d = tiny_lm();
      if (n) d.moe = MoeDesc{n, p, 1.25, 0.01};
      Rng rng(1);
      LlamaModel model(d, rng);
      complexity::ComplexityReport r = complexity::count_transformer(d);
      EXPECT_EQ(static_cast<complexity::Count>(model.parameter_count()), r.total_params);
      for (const auto& cost : r.per_layer) {
        // Norm/attn/ffn entries own every parameter under their name prefix.
        if (cost.kind == complexity::LayerKind::Router || cost.kind == complexity::LayerKind::MoeFfn)
          continue;
        EXPECT_EQ(static_cast<complexity::Count>(enumerate(model.parameters(), cost.layer)),
                  cost.params())
            << cost.layer;
      }
    }
  }
}

TEST(Lm, InputContract) {
  Rng rng(1);
  LlamaModel model(tiny_lm(), rng);
  std::vector<std::size_t> too_long(17, 1), bad{1, 100}, empty;
  EXPECT_THROW(model.forward(too_long), ContractError);
  EXPECT_THROW(model.forward(bad), ContractError);
  EXPECT_THROW(model.forward(empty), ContractError);
}

Model trained_toy(std::uint64_t seed) {
  CnnDescriptor d = toy_cnn();
  d.dynamic = DynamicDesc{2, {ConvRole::Expand}, {}};
  Rng rng(seed);
  return build(Descriptor{d}, rng);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model m = trained_toy(9);
  // Perturb so the parameters differ from a fresh build with the same seed.
  for (auto& p : m.parameters())
    for (double& v : p.tensor.mutable_data()) v = v * 1.25 + 1e-3;
  const std::string bytes = serialize_checkpoint(m, {9, 42});
  LoadedCheckpoint loaded = deserialize_checkpoint(bytes);
  EXPECT_EQ(loaded.meta.seed, 9u);
  EXPECT_EQ(loaded.meta.step, 42u);
  EXPECT_EQ(serialize_checkpoint(loaded.model, loaded.meta), bytes);
  Rng xr(1);
  Tensor probe = Tensor::normal(Shape{2, 3, 32, 32}, xr, 1.0);
  EXPECT_EQ(m.cnn()->forward(probe).values(), loaded.model.cnn()->forward(probe).values());
}

TEST(Checkpoint, FileRoundTripAndLm) {
  const auto dir = std::filesystem::temp_directory_path() / "paramaug_ckpt_test";
  std::filesystem::create_directories(dir);
  LlamaDescriptor d = tiny_lm();
  d.moe = MoeDesc{2, layers::Placement::Gate, 1.25, 0.01};
  Rng rng(3);
  Model m = build(Descriptor{d}, rng);
  save_checkpoint(m, (dir / "a.ckpt").string(), {3, 7});
  LoadedCheckpoint l = load_checkpoint((dir / "a.ckpt").string());
  save_checkpoint(l.model, (dir / "b.ckpt").string(), l.meta);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  std::vector<std::size_t> tokens{1, 2, 3, 4};
  EXPECT_EQ(m.lm()->forward(tokens).logits.values(), l.model.lm()->forward(tokens).logits.values());
  std::filesystem::remove_all(dir);
}

// Rewrites the JSON header of a checkpoint and returns the new byte string.
std::string edit_header(const std::string& bytes, const std::function<void(json&)>& edit,
                        bool drop_last_tensor_payload = false) {
  std::size_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::size_t>(static_cast<unsigned char>(bytes[12 + i])) << (8 * i);
  json header = json::parse(bytes.substr(20, len));
  std::size_t payload_drop = 0;
  if (drop_last_tensor_payload) payload_drop = 8 * header["tensors"].back()["length"].get<std::size_t>();
  edit(header);
  const std::string text = header.dump();
  std::string out = bytes.substr(0, 12);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
  out += text;
  out += bytes.substr(20 + len, bytes.size() - 20 - len - payload_drop);
  return out;
}

TEST(Checkpoint, DistinctStructuredErrors) {
  const std::string bytes = serialize_checkpoint(trained_toy(1), {1, 0});

  std::string wrong_version = bytes;
  wrong_version[8] = 2;
  EXPECT_THROW(deserialize_checkpoint(wrong_version), CheckpointVersionError);

  std::string corrupted;
  try {
    deserialize_checkpoint(edit_header(bytes, [&](json& h) {
      corrupted = h["tensors"][3]["name"].get<std::string>();
      h["tensors"][3]["length"] = h["tensors"][3]["length"].get<std::size_t>() + 1;
    }));
    FAIL();
  } catch (const TensorShapeError& e) {
    EXPECT_EQ(e.tensor(), corrupted);
  }

  try {
    deserialize_checkpoint(edit_header(
        bytes, [](json& h) { h["tensors"].erase(h["tensors"].size() - 1); }, true));
    FAIL();
  } catch (const MissingTensorError& e) {
    EXPECT_EQ(e.tensor(), "classifier.bias");
  }

  try {
    deserialize_checkpoint(
        edit_header(bytes, [](json& h) { h["tensors"][0]["name"] = "stem.kernel"; }));
    FAIL();
  } catch (const ExtraTensorError& e) {
    EXPECT_EQ(e.tensor(), "stem.kernel");
  }

  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), CheckpointError);
}

}  // namespace
}  // namespace paramaug::models
