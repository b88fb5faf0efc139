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

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "paramaug/models/cnn.hpp"
#include "paramaug/models/lm.hpp"

namespace paramaug::models {

/// A built network of either family.
struct Model {
  std::variant<std::shared_ptr<CnnModel>, std::shared_ptr<LlamaModel>> net;

  Descriptor descriptor() const;
  std::vector<layers::NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  CnnModel* cnn() const;
  LlamaModel* lm() const;
};

/// Conv descriptors describe a single layer and are not buildable.
Model build(const Descriptor& desc, Rng& rng);

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Carries the tensor name for the next three.
class CheckpointTensorError : public CheckpointError {
 public:
  CheckpointTensorError(const std::string& tensor, const std::string& what)
      : CheckpointError(tensor + ": " + what), tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};
class MissingTensorError : public CheckpointTensorError {
 public:
  using CheckpointTensorError::CheckpointTensorError;
};
class ExtraTensorError : public CheckpointTensorError {
 public:
  using CheckpointTensorError::CheckpointTensorError;
};
class TensorShapeError : public CheckpointTensorError {
 public:
  using CheckpointTensorError::CheckpointTensorError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

/// Layout: 8-byte magic "PAUGCKPT", u32 version, u64 header length, JSON
/// header {descriptor, seed, step, tensors: [{name, shape, length}]}, then
/// each tensor's values as little-endian IEEE-754 doubles in header order.
std::string serialize_checkpoint(const Model& model, const CheckpointMeta& meta);
LoadedCheckpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::string& path,
                     const CheckpointMeta& meta = {});
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace paramaug::models
