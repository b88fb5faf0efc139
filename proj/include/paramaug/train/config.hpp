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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "paramaug/train/optim.hpp"

namespace paramaug::train {

using json = nlohmann::json;

/// Gaussian blobs: one mean per (class, channel), constant over the image,
/// plus i.i.d. pixel noise.
struct BlobSpec {
  std::size_t size = 256;
  std::size_t num_classes = 2;
  std::size_t channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double separation = 3.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

/// Token stream from a seeded stochastic grammar over `vocab` symbols.
/// Token 0 ends a sentence.
struct GrammarSpec {
  std::size_t tokens = 8192;
  std::size_t vocab = 100;
  std::size_t branching = 4;
  std::size_t seq_len = 32;
  std::uint64_t seed = 0;
};

using DataSpec = std::variant<BlobSpec, GrammarSpec>;

/// Training hyper-parameters. Key names follow the usual hyper-parameter
/// table layout so published configs transcribe directly. Augmentation and
/// regularisation keys that have no effect at this scale are accepted and
/// kept verbatim in `inert`.
struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double start_lr = 1e-2;
  std::string lr_schedule = "cosine";
  double warmup_epochs = 0.0;
  double final_lr_fraction = 0.1;
  double weight_decay = 0.05;
  double label_smoothing = 0.0;
  std::string optimizer = "adamw";
  AdamWConfig adamw;
  std::uint64_t seed = 0;
  double aux_loss_weight = 0.01;
  std::optional<double> grad_clip;
  std::optional<std::size_t> max_steps;
  std::size_t log_every = 1;
  DataSpec data = BlobSpec{};
  json inert = json::object();

  /// Throws ValidationError naming the field.
  void validate() const;
};

/// Keys accepted for schema compatibility but ignored by the trainer.
inline constexpr const char* kInertKeys[] = {"layer_decay", "stochastic_path", "randaugment",
                                             "mixup",       "cutmix",          "random_erasing",
                                             "ema"};

json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const json& j);
TrainConfig load_config(const std::string& path);

/// FNV-1a 64 over the canonical JSON serialisation, as 16 hex digits.
std::string config_hash(const TrainConfig& cfg);

}  // namespace paramaug::train
