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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "paramaug/error.hpp"
#include "paramaug/models/cnn.hpp"
#include "paramaug/models/lm.hpp"
#include "paramaug/train/config.hpp"
#include "paramaug/train/data.hpp"

namespace paramaug::train {

/// Loss became NaN or infinite. `step()` is the 0-based update index.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // ce + aux_loss_weight * aux
  double ce = 0.0;
  double aux = 0.0;
  double grad_norm = 0.0;
  /// Smallest dynamic-conv coefficient seen in this step's forward pass.
  std::optional<double> alpha_min;
  /// Per MoE layer: argmax dispatch counts per expert, summed over the batch.
  std::vector<std::vector<std::size_t>> load;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> accuracy;    // classifier: full training set
  std::optional<double> load_ratio;  // MoE: see RunRecord::load_ratio
};

struct RunRecord {
  std::string task;  // "classifier" or "lm"
  std::string model;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  std::optional<long long> flops;
  json config;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  /// Mean loss and mean cross-entropy over the last epoch.
  double final_loss = 0.0;
  double final_ce = 0.0;
  std::optional<double> final_accuracy;
  std::optional<double> alpha_min;
  /// Max/min expert load over the last epoch, per layer (min floored at one
  /// token), averaged over layers.
  std::optional<double> load_ratio;
  std::optional<double> wall_clock_seconds;

  /// Headline number for reports: accuracy for classifiers, loss for LMs.
  std::string metric_name() const { return task == "classifier" ? "accuracy" : "final_loss"; }
  double metric() const { return final_accuracy ? *final_accuracy : final_loss; }
};

struct TrainOptions {
  /// Off by default so records of identical runs are byte-identical.
  bool record_wall_clock = false;
  std::function<void(const StepRecord&)> on_step;
};

/// Number of optimizer updates for a dataset with `examples` items.
struct StepPlan {
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;
};
StepPlan plan_steps(const TrainConfig& cfg, std::size_t examples);

/// Throws ShapeError when the dataset does not match the model input or
/// class count, DivergenceError on a non-finite loss and NonFiniteError on a
/// non-finite gradient.
RunRecord train_classifier(models::CnnModel& model, const BlobDataset& data,
                           const TrainConfig& cfg, const TrainOptions& options = {});

/// Loss per step is the batch mean of cross-entropy plus aux_loss_weight
/// times the layer-averaged balancing loss.
RunRecord train_lm(models::LlamaModel& model, const TokenStream& stream,
                   const TrainConfig& cfg, const TrainOptions& options = {});

/// Fraction of rows classified correctly.
double accuracy(const models::CnnModel& model, const BlobDataset& data);

json to_json(const StepRecord& r);
json to_json(const EpochRecord& r);
json summary_json(const RunRecord& r);

/// Writes `steps.jsonl` (every `log_every`-th step and the last) and
/// `summary.json` into `dir`, creating it if needed.
void write_run_record(const RunRecord& r, const std::filesystem::path& dir,
                      std::size_t log_every = 1);

/// Reads a summary.json back; errors name the file.
RunRecord read_run_summary(const std::filesystem::path& path);

}  // namespace paramaug::train
