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

#include "paramaug/models/descriptor.hpp"

#include "json_fields.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

namespace paramaug::models {

using detail::Fields;
using detail::index_path;
using detail::join;
using detail::read;

namespace {

constexpr std::array<std::pair<ConvRole, std::string_view>, 7> kRoles{{
    {ConvRole::Stem, "stem"},
    {ConvRole::Expand, "expand"},
    {ConvRole::Cheap, "cheap"},
    {ConvRole::Downsample, "downsample"},
    {ConvRole::Project, "project"},
    {ConvRole::Shortcut, "shortcut"},
    {ConvRole::Head, "head"},
}};

void require_positive(std::size_t v, const std::string& field) {
  if (v == 0) throw ValidationError(field, "must be positive");
}

layers::ConvSpec conv_from(Fields& f) {
  layers::ConvSpec s;
  f.require("c_in", s.c_in);
  f.require("c_out", s.c_out);
  f.require("k", s.k);
  f.optional("stride", s.stride);
  f.optional("padding", s.padding);
  f.optional("groups", s.groups);
  f.optional("bias", s.has_bias);
  return s;
}

}  // namespace

std::string_view to_string(ConvRole role) {
  for (const auto& [r, name] : kRoles)
    if (r == role) return name;
  return "?";
}

ConvRole parse_conv_role(std::string_view s) {
  for (const auto& [r, name] : kRoles)
    if (name == s) return r;
  throw ValidationError("", "unknown conv role '" + std::string(s) +
                                "' (stem, expand, cheap, downsample, project, "
                                "shortcut, head)");
}

std::size_t CnnDescriptor::block_count() const {
  std::size_t n = 0;
  for (const auto& stage : stages) n += stage.size();
  return n;
}

std::size_t hidden_channels(const BlockDesc& block, std::size_t c_in) {
  return static_cast<std::size_t>(
      std::llround(block.expansion * static_cast<double>(c_in)));
}

void CnnDescriptor::validate() const {
  require_positive(in_channels, "in_channels");
  require_positive(input_h, "input_h");
  require_positive(input_w, "input_w");
  require_positive(stem.c_out, "stem.c_out");
  require_positive(stem.kernel, "stem.kernel");
  require_positive(stem.stride, "stem.stride");
  require_positive(head_channels, "head_channels");
  require_positive(num_classes, "num_classes");
  if (stages.empty()) throw ValidationError("stages", "need at least one stage");

  std::size_t c = stem.c_out;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string sp = index_path("stages", s);
    if (stages[s].empty()) throw ValidationError(sp, "stage has no blocks");
    for (std::size_t b = 0; b < stages[s].size(); ++b) {
      const BlockDesc& blk = stages[s][b];
      const std::string bp = index_path(sp, b);
      if (blk.c_in && *blk.c_in != c) {
        throw ValidationError(bp + ".c_in",
                              "block " + std::to_string(s) + "." + std::to_string(b) +
                                  " declares " + std::to_string(*blk.c_in) +
                                  " input channels but receives " + std::to_string(c));
      }
      require_positive(blk.c_out, bp + ".c_out");
      require_positive(blk.stride, bp + ".stride");
      if (blk.kernel % 2 == 0)
        throw ValidationError(bp + ".kernel", "must be odd");
      if (blk.c_out % 2 != 0)
        throw ValidationError(bp + ".c_out", "ghost modules need an even width");
      const double exact = blk.expansion * static_cast<double>(c);
      const std::size_t hidden = hidden_channels(blk, c);
      if (!(blk.expansion > 0.0) || std::abs(exact - static_cast<double>(hidden)) > 1e-9 ||
          hidden == 0 || hidden % 2 != 0) {
        throw ValidationError(bp + ".expansion",
                              "expansion x input width " + std::to_string(c) +
                                  " must be a positive even integer");
      }
      c = blk.c_out;
    }
  }

  if (dynamic) {
    require_positive(dynamic->m, "dynamic.m");
    if (dynamic->roles.count(ConvRole::Cheap))
      throw ValidationError("dynamic.roles", "cheap depthwise convs cannot be dynamic");
    for (std::size_t i = 0; i < dynamic->blocks.size(); ++i) {
      if (dynamic->blocks[i] >= block_count()) {
        throw ValidationError(index_path("dynamic.blocks", i),
                              "block index out of range (" +
                                  std::to_string(block_count()) + " blocks)");
      }
    }
  }
  // Geometry: every conv must produce at least one output pixel.
  try {
    (void)layout(*this);
  } catch (const GeometryError& e) {
    throw ValidationError("input_h", e.what());
  }
}

std::size_t dynamic_m(const CnnDescriptor& desc, ConvRole role,
                      std::optional<std::size_t> block) {
  if (role == ConvRole::Cheap || !desc.dynamic || !desc.dynamic->roles.count(role))
    return 0;
  const auto& sel = desc.dynamic->blocks;
  if (block && !sel.empty() && std::find(sel.begin(), sel.end(), *block) == sel.end())
    return 0;
  return desc.dynamic->m;
}

CnnLayout layout(const CnnDescriptor& desc) {
  using layers::ConvSpec;
  CnnLayout out;
  std::size_t h = desc.input_h, w = desc.input_w;
  auto add = [&](std::string name, ConvRole role, ConvSpec spec,
                 std::optional<std::size_t> block) {
    const std::size_t oh = spec.out_extent(h), ow = spec.out_extent(w);
    const std::size_t m = dynamic_m(desc, role, block);
    out.convs.push_back({std::move(name), role, spec, m, oh, ow, block});
  };

  const StemDesc& st = desc.stem;
  add("stem", ConvRole::Stem,
      ConvSpec{desc.in_channels, st.c_out, st.kernel, st.stride, st.kernel / 2, 1, true},
      std::nullopt);
  h = out.convs.back().out_h;
  w = out.convs.back().out_w;

  std::size_t c = st.c_out, index = 0;
  for (std::size_t s = 0; s < desc.stages.size(); ++s) {
    for (std::size_t b = 0; b < desc.stages[s].size(); ++b, ++index) {
      const BlockDesc& blk = desc.stages[s][b];
      const std::string p = "stages." + std::to_string(s) + "." + std::to_string(b) + ".";
      const std::size_t hidden = hidden_channels(blk, c);
      const std::size_t in_h = h, in_w = w;

      add(p + "expand.primary", ConvRole::Expand,
          ConvSpec{c, hidden / 2, 1, 1, 0, 1, true}, index);
      add(p + "expand.cheap", ConvRole::Cheap,
          ConvSpec{hidden / 2, hidden / 2, 3, 1, 1, hidden / 2, true}, index);
      if (blk.stride > 1) {
        add(p + "downsample", ConvRole::Downsample,
            ConvSpec{hidden, hidden, blk.kernel, blk.stride, blk.kernel / 2, hidden, true},
            index);
        h = out.convs.back().out_h;
        w = out.convs.back().out_w;
      }
      add(p + "project.primary", ConvRole::Project,
          ConvSpec{hidden, blk.c_out / 2, 1, 1, 0, 1, true}, index);
      add(p + "project.cheap", ConvRole::Cheap,
          ConvSpec{blk.c_out / 2, blk.c_out / 2, 3, 1, 1, blk.c_out / 2, true}, index);
      if (blk.stride > 1 || c != blk.c_out) {
        const std::size_t save_h = h, save_w = w;
        h = in_h;
        w = in_w;
        add(p + "shortcut", ConvRole::Shortcut,
            ConvSpec{c, blk.c_out, 1, blk.stride, 0, 1, true}, index);
        h = save_h;
        w = save_w;
      }
      c = blk.c_out;
    }
  }
  add("head", ConvRole::Head, ConvSpec{c, desc.head_channels, 1, 1, 0, 1, true},
      std::nullopt);
  out.classifier_in = desc.head_channels;
  out.num_classes = desc.num_classes;
  return out;
}

layers::MoeConfig MoeDesc::config() const {
  layers::MoeConfig c;
  c.n_experts = n_experts;
  c.k = 1;
  c.capacity_factor = capacity_factor;
  c.aux_loss_weight = aux_loss_weight;
  c.placement = placement;
  return c;
}

void LlamaDescriptor::validate() const {
  require_positive(d_model, "d_model");
  require_positive(d_ff, "d_ff");
  require_positive(n_heads, "n_heads");
  require_positive(n_layers, "n_layers");
  require_positive(vocab_size, "vocab_size");
  require_positive(max_seq_len, "max_seq_len");
  if (d_model % n_heads != 0) {
    throw ValidationError("n_heads", "d_model " + std::to_string(d_model) +
                                         " not divisible by n_heads " +
                                         std::to_string(n_heads));
  }
  if (moe) {
    require_positive(moe->n_experts, "moe.n_experts");
    if (!(moe->capacity_factor > 0.0))
      throw ValidationError("moe.capacity_factor", "must be positive");
    if (!(moe->aux_loss_weight >= 0.0))
      throw ValidationError("moe.aux_loss_weight", "must be non-negative");
  }
}

LlamaDescriptor llama_1b(std::optional<MoeDesc> moe) {
  LlamaDescriptor d;
  d.d_model = 2048;
  d.d_ff = 8191;
  d.n_heads = 16;
  d.n_layers = 12;
  d.vocab_size = 32000;
  d.max_seq_len = 2048;
  d.moe = std::move(moe);
  return d;
}

void ConvDescriptor::validate() const {
  spec.validate();
  require_positive(m, "m");
  require_positive(input_h, "input_h");
  require_positive(input_w, "input_w");
  try {
    (void)spec.out_extent(input_h);
    (void)spec.out_extent(input_w);
  } catch (const GeometryError& e) {
    throw ValidationError("input_h", e.what());
  }
}

json to_json(const CnnDescriptor& d) {
  json stages = json::array();
  for (const auto& stage : d.stages) {
    json blocks = json::array();
    for (const auto& b : stage) {
      blocks.push_back({{"expansion", b.expansion},
                        {"c_out", b.c_out},
                        {"stride", b.stride},
                        {"kernel", b.kernel}});
      if (b.c_in) blocks.back()["c_in"] = *b.c_in;
    }
    stages.push_back(std::move(blocks));
  }
  json j = {{"type", "cnn"},
            {"in_channels", d.in_channels},
            {"input_h", d.input_h},
            {"input_w", d.input_w},
            {"stem", {{"c_out", d.stem.c_out}, {"kernel", d.stem.kernel}, {"stride", d.stem.stride}}},
            {"stages", std::move(stages)},
            {"head_channels", d.head_channels},
            {"num_classes", d.num_classes}};
  if (d.dynamic) {
    json roles = json::array();
    for (ConvRole r : d.dynamic->roles) roles.push_back(to_string(r));
    j["dynamic"] = {{"m", d.dynamic->m}, {"roles", roles}, {"blocks", d.dynamic->blocks}};
  }
  return j;
}

json to_json(const LlamaDescriptor& d) {
  json j = {{"type", "llama"},
            {"d_model", d.d_model},
            {"d_ff", d.d_ff},
            {"n_heads", d.n_heads},
            {"n_layers", d.n_layers},
            {"vocab_size", d.vocab_size},
            {"max_seq_len", d.max_seq_len}};
  if (d.moe) {
    j["moe"] = {{"n_experts", d.moe->n_experts},
                {"placement", layers::to_string(d.moe->placement)},
                {"capacity_factor", d.moe->capacity_factor},
                {"aux_loss_weight", d.moe->aux_loss_weight}};
  }
  return j;
}

json to_json(const ConvDescriptor& d) {
  return {{"type", "conv"},
          {"c_in", d.spec.c_in},
          {"c_out", d.spec.c_out},
          {"k", d.spec.k},
          {"stride", d.spec.stride},
          {"padding", d.spec.padding},
          {"groups", d.spec.groups},
          {"bias", d.spec.has_bias},
          {"m", d.m},
          {"input_h", d.input_h},
          {"input_w", d.input_w}};
}

json to_json(const Descriptor& d) {
  return std::visit([](const auto& x) { return to_json(x); }, d);
}

CnnDescriptor cnn_from_json(const json& j) {
  Fields f(j, "");
  std::string type = "cnn";
  f.optional("type", type);
  CnnDescriptor d;
  f.optional("in_channels", d.in_channels);
  f.optional("input_h", d.input_h);
  f.optional("input_w", d.input_w);
  if (const json* s = f.child("stem")) {
    Fields sf(*s, "stem");
    sf.optional("c_out", d.stem.c_out);
    sf.optional("kernel", d.stem.kernel);
    sf.optional("stride", d.stem.stride);
    sf.finish();
  }
  const json* stages = f.child("stages");
  if (!stages) throw ValidationError("stages", "missing required field");
  if (!stages->is_array()) throw ValidationError("stages", "expected an array of stages");
  for (std::size_t s = 0; s < stages->size(); ++s) {
    const std::string sp = index_path("stages", s);
    const json& stage = (*stages)[s];
    if (!stage.is_array()) throw ValidationError(sp, "expected an array of blocks");
    std::vector<BlockDesc> blocks;
    for (std::size_t b = 0; b < stage.size(); ++b) {
      Fields bf(stage[b], index_path(sp, b));
      BlockDesc blk;
      bf.optional("expansion", blk.expansion);
      bf.require("c_out", blk.c_out);
      if (bf.child("c_in")) {
        std::size_t v = 0;
        read(stage[b]["c_in"], bf.path("c_in"), v);
        blk.c_in = v;
      }
      bf.optional("stride", blk.stride);
      bf.optional("kernel", blk.kernel);
      bf.finish();
      blocks.push_back(blk);
    }
    d.stages.push_back(std::move(blocks));
  }
  f.optional("head_channels", d.head_channels);
  f.optional("num_classes", d.num_classes);
  if (const json* dj = f.child("dynamic")) {
    Fields df(*dj, "dynamic");
    DynamicDesc dyn;
    df.require("m", dyn.m);
    if (const json* roles = df.child("roles")) {
      if (!roles->is_array()) throw ValidationError("dynamic.roles", "expected an array");
      dyn.roles.clear();
      for (std::size_t i = 0; i < roles->size(); ++i) {
        std::string name;
        read((*roles)[i], index_path("dynamic.roles", i), name);
        try {
          dyn.roles.insert(parse_conv_role(name));
        } catch (const ValidationError& e) {
          throw ValidationError(index_path("dynamic.roles", i), e.message());
        }
      }
    }
    if (const json* blocks = df.child("blocks")) {
      if (!blocks->is_array()) throw ValidationError("dynamic.blocks", "expected an array");
      for (std::size_t i = 0; i < blocks->size(); ++i) {
        std::size_t v = 0;
        read((*blocks)[i], index_path("dynamic.blocks", i), v);
        dyn.blocks.push_back(v);
      }
    }
    df.finish();
    d.dynamic = dyn;
  }
  f.finish();
  if (type != "cnn") throw ValidationError("type", "expected \"cnn\"");
  d.validate();
  return d;
}

LlamaDescriptor llama_from_json(const json& j) {
  Fields f(j, "");
  std::string type = "llama";
  f.optional("type", type);
  LlamaDescriptor d;
  f.require("d_model", d.d_model);
  f.require("d_ff", d.d_ff);
  f.require("n_heads", d.n_heads);
  f.require("n_layers", d.n_layers);
  f.require("vocab_size", d.vocab_size);
  f.optional("max_seq_len", d.max_seq_len);
  if (const json* mj = f.child("moe")) {
    Fields mf(*mj, "moe");
    MoeDesc m;
    mf.require("n_experts", m.n_experts);
    std::string placement = std::string(layers::to_string(m.placement));
    mf.optional("placement", placement);
    try {
      m.placement = layers::parse_placement(placement);
    } catch (const ValidationError& e) {
      throw ValidationError("moe.placement", e.message());
    }
    mf.optional("capacity_factor", m.capacity_factor);
    mf.optional("aux_loss_weight", m.aux_loss_weight);
    std::size_t k = 1;
    mf.optional("k", k);
    if (k != 1) throw ValidationError("moe.k", "only top-1 routing is supported");
    mf.finish();
    d.moe = m;
  }
  f.finish();
  if (type != "llama") throw ValidationError("type", "expected \"llama\"");
  d.validate();
  return d;
}

namespace {

ConvDescriptor conv_desc_from_json(const json& j) {
  Fields f(j, "");
  std::string type;
  f.optional("type", type);
  ConvDescriptor d;
  d.spec = conv_from(f);
  f.optional("m", d.m);
  f.optional("input_h", d.input_h);
  f.optional("input_w", d.input_w);
  f.finish();
  d.validate();
  return d;
}

}  // namespace

Descriptor descriptor_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("", "descriptor must be a JSON object");
  auto it = j.find("type");
  if (it == j.end()) throw ValidationError("type", "missing required field");
  if (!it->is_string()) throw ValidationError("type", "expected a string");
  const std::string type = it->get<std::string>();
  if (type == "cnn") return cnn_from_json(j);
  if (type == "llama") return llama_from_json(j);
  if (type == "conv") return conv_desc_from_json(j);
  throw ValidationError("type", "unknown descriptor type '" + type +
                                    "' (cnn, llama, conv)");
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(col),
                          "JSON syntax error");
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

Descriptor load_descriptor(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return descriptor_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ":" + e.field(), e.message());
  }
}

}  // namespace paramaug::models
