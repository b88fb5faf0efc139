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

#include "paramaug/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "paramaug/ops.hpp"
#include "paramaug/rng.hpp"
#include "paramaug/train/optim.hpp"

namespace paramaug::train {

namespace {

// Batch order draws from its own stream so it never overlaps the streams
// used for parameter initialisation under the same seed.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).split(kShuffleStream).split(epoch);
  rng.shuffle(order);
  return order;
}

class Clock {
 public:
  explicit Clock(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  std::optional<double> seconds() const {
    if (!on_) return std::nullopt;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

// Shared loop bookkeeping: schedule, optimizer step, record keeping.
class Loop {
 public:
  Loop(const TrainConfig& cfg, std::vector<layers::NamedTensor> params, std::size_t examples)
      : cfg_(cfg), plan_(plan_steps(cfg, examples)), opt_(std::move(params), cfg.adamw) {}

  const StepPlan& plan() const { return plan_; }
  bool done() const { return step_ >= plan_.total_steps; }
  double lr() const {
    return cosine_lr(step_ + 1, plan_.total_steps, plan_.warmup_steps, cfg_.start_lr,
                     cfg_.final_lr_fraction);
  }

  // Runs backward on `loss` and applies one update.
  StepRecord update(const Tensor& loss, std::size_t epoch, double ce, double aux) {
    StepRecord rec;
    rec.step = step_;
    rec.epoch = epoch;
    rec.loss = loss.item();
    rec.ce = ce;
    rec.aux = aux;
    if (!std::isfinite(rec.loss))
      throw DivergenceError(step_, "loss is " + std::to_string(rec.loss));
    opt_.zero_grad();
    backward(loss);
    rec.grad_norm =
        cfg_.grad_clip ? clip_grad_norm(opt_.params(), *cfg_.grad_clip) : grad_norm(opt_.params());
    rec.lr = lr();
    opt_.step(rec.lr, cfg_.weight_decay);
    ++step_;
    return rec;
  }

 private:
  const TrainConfig& cfg_;
  StepPlan plan_;
  AdamW opt_;
  std::size_t step_ = 0;
};

void finish_record(RunRecord& run, const TrainConfig& cfg, std::size_t parameters) {
  run.config = to_json(cfg);
  run.config_hash = config_hash(cfg);
  run.seed = cfg.seed;
  run.parameters = parameters;
  if (!run.epochs.empty()) {
    const std::size_t last = run.epochs.back().epoch;
    double loss = 0.0, ce = 0.0;
    std::size_t n = 0;
    for (const auto& s : run.steps) {
      if (s.epoch == last) {
        loss += s.loss;
        ce += s.ce;
        ++n;
      }
    }
    run.final_loss = loss / static_cast<double>(n);
    run.final_ce = ce / static_cast<double>(n);
  }
}

double load_ratio(const std::vector<std::vector<std::size_t>>& per_layer) {
  double total = 0.0;
  for (const auto& counts : per_layer) {
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    total += static_cast<double>(*hi) / static_cast<double>(std::max<std::size_t>(*lo, 1));
  }
  return total / static_cast<double>(per_layer.size());
}

}  // namespace

StepPlan plan_steps(const TrainConfig& cfg, std::size_t examples) {
  cfg.validate();
  if (examples == 0) throw ContractError("train: empty dataset");
  StepPlan p;
  p.steps_per_epoch = (examples + cfg.batch_size - 1) / cfg.batch_size;
  p.total_steps = cfg.epochs * p.steps_per_epoch;
  if (cfg.max_steps) p.total_steps = std::min(p.total_steps, *cfg.max_steps);
  p.warmup_steps = static_cast<std::size_t>(
      std::floor(cfg.warmup_epochs * static_cast<double>(p.steps_per_epoch)));
  if (p.warmup_steps >= p.total_steps) {
    throw ValidationError("warmup_epochs", std::to_string(p.warmup_steps) +
                                               " warmup steps leave no room in " +
                                               std::to_string(p.total_steps) + " total steps");
  }
  return p;
}

double accuracy(const models::CnnModel& model, const BlobDataset& data) {
  NoGradGuard no_grad;
  const std::size_t n = data.labels.size();
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 64;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += kChunk) {
    rows.clear();
    for (std::size_t r = start; r < std::min(n, start + kChunk); ++r) rows.push_back(r);
    const Tensor logits = model.forward(data.batch(rows));
    const std::size_t k = logits.dim(1);
    const auto v = logits.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = v.subspan(i * k, k);
      const std::size_t pred =
          static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (pred == data.labels[rows[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

RunRecord train_classifier(models::CnnModel& model, const BlobDataset& data,
                           const TrainConfig& cfg, const TrainOptions& options) {
  const auto& desc = model.descriptor();
  const BlobSpec& s = data.spec;
  if (s.channels != desc.in_channels || s.height != desc.input_h || s.width != desc.input_w) {
    throw ShapeError("train: dataset images are [" + std::to_string(s.channels) + "," +
                         std::to_string(s.height) + "," + std::to_string(s.width) +
                         "] but the model expects [" + std::to_string(desc.in_channels) + "," +
                         std::to_string(desc.input_h) + "," + std::to_string(desc.input_w) + "]",
                     1);
  }
  if (s.num_classes != desc.num_classes) {
    throw ShapeError("train: dataset has " + std::to_string(s.num_classes) +
                     " classes but the model predicts " + std::to_string(desc.num_classes));
  }
  const Clock clock(options.record_wall_clock);
  const auto params = model.parameters();
  Loop loop(cfg, params, data.labels.size());
  RunRecord run;
  run.task = "classifier";
  const bool dynamic = desc.dynamic.has_value();
  for (std::size_t epoch = 0; !loop.done(); ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, data.labels.size());
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && !loop.done(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      std::vector<std::size_t> targets;
      for (std::size_t r : rows) targets.push_back(data.labels[r]);
      layers::ForwardTrace trace;
      const Tensor logits = model.forward(data.batch(rows), dynamic ? &trace : nullptr);
      const Tensor loss = cross_entropy(logits, targets, cfg.label_smoothing);
      StepRecord rec = loop.update(loss, epoch, loss.item(), 0.0);
      if (dynamic) {
        double lo = 1.0;
        for (const Tensor& a : trace.coefficients)
          for (double v : a.data()) lo = std::min(lo, v);
        rec.alpha_min = lo;
        run.alpha_min = std::min(run.alpha_min.value_or(1.0), lo);
      }
      epoch_loss += rec.loss;
      ++epoch_steps;
      if (options.on_step) options.on_step(rec);
      run.steps.push_back(std::move(rec));
    }
    EpochRecord er;
    er.epoch = epoch;
    er.mean_loss = epoch_loss / static_cast<double>(epoch_steps);
    er.accuracy = accuracy(model, data);
    run.epochs.push_back(er);
  }
  run.final_accuracy = run.epochs.back().accuracy;
  finish_record(run, cfg, model.parameter_count());
  run.wall_clock_seconds = clock.seconds();
  return run;
}

RunRecord train_lm(models::LlamaModel& model, const TokenStream& stream, const TrainConfig& cfg,
                   const TrainOptions& options) {
  const auto& desc = model.descriptor();
  if (stream.spec.vocab > desc.vocab_size) {
    throw ShapeError("train: stream vocabulary " + std::to_string(stream.spec.vocab) +
                     " exceeds model vocabulary " + std::to_string(desc.vocab_size));
  }
  if (stream.spec.seq_len > desc.max_seq_len) {
    throw ShapeError("train: seq_len " + std::to_string(stream.spec.seq_len) +
                     " exceeds max_seq_len " + std::to_string(desc.max_seq_len));
  }
  const Clock clock(options.record_wall_clock);
  const double aux_weight = desc.moe ? cfg.aux_loss_weight : 0.0;
  Loop loop(cfg, model.parameters(), stream.windows());
  RunRecord run;
  run.task = "lm";
  for (std::size_t epoch = 0; !loop.done(); ++epoch) {
    const auto order = epoch_order(cfg.seed, epoch, stream.windows());
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    std::vector<std::vector<std::size_t>> epoch_load;
    for (std::size_t start = 0; start < order.size() && !loop.done(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      std::optional<Tensor> ce_sum, aux_sum;
      std::vector<std::vector<std::size_t>> load;
      for (std::size_t b = start; b < end; ++b) {
        const auto win = stream.window(order[b]);
        const auto inputs = win.first(win.size() - 1);
        const auto targets = win.last(win.size() - 1);
        models::LmOutput out = model.forward(inputs);
        const Tensor ce = cross_entropy(out.logits, targets, cfg.label_smoothing);
        ce_sum = ce_sum ? add(*ce_sum, ce) : ce;
        aux_sum = aux_sum ? add(*aux_sum, out.aux_loss) : out.aux_loss;
        load.resize(out.routing.size());
        for (std::size_t l = 0; l < out.routing.size(); ++l) {
          const auto& d = out.routing[l].dispatched;
          load[l].resize(d.size(), 0);
          for (std::size_t e = 0; e < d.size(); ++e) load[l][e] += d[e];
        }
      }
      const Tensor ce = scale(*ce_sum, inv);
      const Tensor aux = scale(*aux_sum, inv);
      // With a zero weight the loss is the cross-entropy tensor itself.
      const Tensor loss = aux_weight > 0.0 ? add(ce, scale(aux, aux_weight)) : ce;
      StepRecord rec = loop.update(loss, epoch, ce.item(), aux.item());
      epoch_load.resize(load.size());
      for (std::size_t l = 0; l < load.size(); ++l) {
        epoch_load[l].resize(load[l].size(), 0);
        for (std::size_t e = 0; e < load[l].size(); ++e) epoch_load[l][e] += load[l][e];
      }
      rec.load = std::move(load);
      epoch_loss += rec.loss;
      ++epoch_steps;
      if (options.on_step) options.on_step(rec);
      run.steps.push_back(std::move(rec));
    }
    EpochRecord er;
    er.epoch = epoch;
    er.mean_loss = epoch_loss / static_cast<double>(epoch_steps);
    if (!epoch_load.empty()) er.load_ratio = load_ratio(epoch_load);
    run.epochs.push_back(er);
  }
  run.load_ratio = run.epochs.back().load_ratio;
  finish_record(run, cfg, model.parameter_count());
  run.wall_clock_seconds = clock.seconds();
  return run;
}

json to_json(const StepRecord& r) {
  json j = {{"step", r.step}, {"epoch", r.epoch}, {"lr", r.lr},   {"loss", r.loss},
            {"ce", r.ce},     {"aux", r.aux},     {"grad_norm", r.grad_norm}};
  if (r.alpha_min) j["alpha_min"] = *r.alpha_min;
  if (!r.load.empty()) j["load"] = r.load;
  return j;
}

json to_json(const EpochRecord& r) {
  json j = {{"epoch", r.epoch}, {"mean_loss", r.mean_loss}};
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  if (r.load_ratio) j["load_ratio"] = *r.load_ratio;
  return j;
}

json summary_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back(to_json(e));
  json j = {{"task", r.task},
            {"model", r.model},
            {"config_hash", r.config_hash},
            {"seed", r.seed},
            {"parameters", r.parameters},
            {"steps", r.steps.size()},
            {"epochs", std::move(epochs)},
            {"final_loss", r.final_loss},
            {"final_ce", r.final_ce},
            {"metric", {{"name", r.metric_name()}, {"value", r.metric()}}},
            {"config", r.config}};
  if (r.flops) j["flops"] = *r.flops;
  if (r.final_accuracy) j["final_accuracy"] = *r.final_accuracy;
  if (r.alpha_min) j["alpha_min"] = *r.alpha_min;
  if (r.load_ratio) j["load_ratio"] = *r.load_ratio;
  if (r.wall_clock_seconds) j["wall_clock_seconds"] = *r.wall_clock_seconds;
  return j;
}

void write_run_record(const RunRecord& r, const std::filesystem::path& dir,
                      std::size_t log_every) {
  if (log_every == 0) throw ContractError("write_run_record: log_every must be positive");
  std::filesystem::create_directories(dir);
  std::ofstream steps(dir / "steps.jsonl", std::ios::binary);
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    if (i % log_every == 0 || i + 1 == r.steps.size()) steps << to_json(r.steps[i]).dump() << '\n';
  }
  std::ofstream summary(dir / "summary.json", std::ios::binary);
  summary << summary_json(r).dump(2) << '\n';
  if (!steps || !summary) throw Error("cannot write run record to " + dir.string());
}

RunRecord read_run_summary(const std::filesystem::path& path) {
  const json j = models::read_json_file(path.string());
  RunRecord r;
  try {
    r.task = j.at("task").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.parameters = j.at("parameters").get<std::size_t>();
    r.final_loss = j.at("final_loss").get<double>();
    r.final_ce = j.at("final_ce").get<double>();
    if (j.contains("flops")) r.flops = j.at("flops").get<long long>();
    if (j.contains("final_accuracy")) r.final_accuracy = j.at("final_accuracy").get<double>();
    if (j.contains("alpha_min")) r.alpha_min = j.at("alpha_min").get<double>();
    if (j.contains("load_ratio")) r.load_ratio = j.at("load_ratio").get<double>();
    if (j.contains("config")) r.config = j.at("config");
    for (const auto& e : j.at("epochs")) {
      EpochRecord er;
      er.epoch = e.at("epoch").get<std::size_t>();
      er.mean_loss = e.at("mean_loss").get<double>();
      if (e.contains("accuracy")) er.accuracy = e.at("accuracy").get<double>();
      if (e.contains("load_ratio")) er.load_ratio = e.at("load_ratio").get<double>();
      r.epochs.push_back(er);
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string(), std::string("malformed run summary: ") + e.what());
  }
  if (r.task != "classifier" && r.task != "lm")
    throw ValidationError(path.string() + ":task", "expected \"classifier\" or \"lm\"");
  return r;
}

}  // namespace paramaug::train
