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

#include "paramaug/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace paramaug::models {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'U', 'G', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw CheckpointError("checkpoint: truncated file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace

Descriptor Model::descriptor() const {
  return std::visit([](const auto& m) -> Descriptor { return m->descriptor(); }, net);
}

std::vector<layers::NamedTensor> Model::parameters() const {
  return std::visit([](const auto& m) { return m->parameters(); }, net);
}

std::size_t Model::parameter_count() const {
  return std::visit([](const auto& m) { return m->parameter_count(); }, net);
}

CnnModel* Model::cnn() const {
  auto* p = std::get_if<std::shared_ptr<CnnModel>>(&net);
  return p ? p->get() : nullptr;
}

LlamaModel* Model::lm() const {
  auto* p = std::get_if<std::shared_ptr<LlamaModel>>(&net);
  return p ? p->get() : nullptr;
}

Model build(const Descriptor& desc, Rng& rng) {
  if (const auto* cnn = std::get_if<CnnDescriptor>(&desc))
    return Model{std::make_shared<CnnModel>(*cnn, rng)};
  if (const auto* lm = std::get_if<LlamaDescriptor>(&desc))
    return Model{std::make_shared<LlamaModel>(*lm, rng)};
  throw ValidationError("type", "conv descriptors describe a single layer; build a cnn or llama");
}

std::string serialize_checkpoint(const Model& model, const CheckpointMeta& meta) {
  const auto params = model.parameters();
  json tensors = json::array();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.tensor.shape().dims()},
                       {"length", p.tensor.numel()}});
  }
  const json header = {{"descriptor", to_json(model.descriptor())},
                       {"seed", meta.seed},
                       {"step", meta.step},
                       {"tensors", std::move(tensors)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : params)
    for (double v : p.tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: bad magic");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) +
                                 ", this build reads " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw CheckpointError("checkpoint: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::parse_error&) {
    throw CheckpointError("checkpoint: header is not valid JSON");
  }
  pos += header_len;

  LoadedCheckpoint out;
  try {
    out.meta.seed = header.at("seed").get<std::uint64_t>();
    out.meta.step = header.at("step").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw CheckpointError("checkpoint: header lacks seed/step");
  }
  if (!header.contains("descriptor") || !header.contains("tensors") ||
      !header["tensors"].is_array())
    throw CheckpointError("checkpoint: header lacks descriptor/tensors");
  Rng rng(out.meta.seed);
  out.model = build(descriptor_from_json(header["descriptor"]), rng);

  std::map<std::string, Tensor> expected;
  for (const auto& p : out.model.parameters()) expected.emplace(p.name, p.tensor);

  std::map<std::string, bool> seen;
  for (const json& entry : header["tensors"]) {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t length = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<std::size_t>>();
      length = entry.at("length").get<std::size_t>();
    } catch (const json::exception&) {
      throw CheckpointError("checkpoint: malformed tensor directory entry");
    }
    auto it = expected.find(name);
    if (it == expected.end())
      throw ExtraTensorError(name, "not a parameter of the described model");
    if (seen[name]) throw CheckpointError("checkpoint: duplicate tensor " + name);
    seen[name] = true;
    Tensor t = it->second;
    if (Shape(shape) != t.shape() || length != t.numel()) {
      throw TensorShapeError(name, "file has shape " + Shape(shape).str() + " length " +
                                       std::to_string(length) + ", model expects " +
                                       t.shape().str());
    }
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < length; ++i)
      dst[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  }
  for (const auto& [name, t] : expected) {
    if (!seen.count(name)) throw MissingTensorError(name, "absent from checkpoint");
  }
  if (pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after payload");
  return out;
}

void save_checkpoint(const Model& model, const std::string& path,
                     const CheckpointMeta& meta) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("checkpoint: cannot write " + path);
  const std::string bytes = serialize_checkpoint(model, meta);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace paramaug::models
