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

#include "paramaug/train/config.hpp"

#include <cmath>
#include <cctype>
#include <cstdio>

#include "json_fields.hpp"
#include "paramaug/models/descriptor.hpp"

namespace paramaug::train {

using detail::Fields;
using detail::read;

namespace {

template <typename T>
void read_optional(Fields& f, std::string_view key, std::optional<T>& out) {
  if (const json* j = f.child(key)) {
    T v{};
    read(*j, f.path(key), v);
    out = v;
  }
}

void read_seed(Fields& f, std::string_view key, std::uint64_t& out) {
  std::size_t v = out;
  f.optional(key, v);
  out = v;
}

DataSpec data_from_json(const json& j) {
  Fields f(j, "data");
  std::string kind;
  f.require("kind", kind);
  if (kind == "blobs") {
    BlobSpec s;
    f.optional("size", s.size);
    f.optional("num_classes", s.num_classes);
    f.optional("channels", s.channels);
    f.optional("height", s.height);
    f.optional("width", s.width);
    f.optional("separation", s.separation);
    f.optional("noise", s.noise);
    read_seed(f, "seed", s.seed);
    f.finish();
    return s;
  }
  if (kind == "grammar") {
    GrammarSpec s;
    f.optional("tokens", s.tokens);
    f.optional("vocab", s.vocab);
    f.optional("branching", s.branching);
    f.optional("seq_len", s.seq_len);
    read_seed(f, "seed", s.seed);
    f.finish();
    return s;
  }
  throw ValidationError("data.kind", "expected \"blobs\" or \"grammar\", got \"" + kind + "\"");
}

json data_to_json(const DataSpec& data) {
  if (const auto* b = std::get_if<BlobSpec>(&data)) {
    return {{"kind", "blobs"},        {"size", b->size},   {"num_classes", b->num_classes},
            {"channels", b->channels}, {"height", b->height}, {"width", b->width},
            {"separation", b->separation}, {"noise", b->noise}, {"seed", b->seed}};
  }
  const auto& g = std::get<GrammarSpec>(data);
  return {{"kind", "grammar"},       {"tokens", g.tokens},   {"vocab", g.vocab},
          {"branching", g.branching}, {"seq_len", g.seq_len}, {"seed", g.seed}};
}

void positive(std::size_t v, const char* field) {
  if (v == 0) throw ValidationError(field, "must be positive");
}

}  // namespace

void TrainConfig::validate() const {
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(log_every, "log_every");
  if (!(start_lr >= 0.0) || !std::isfinite(start_lr))
    throw ValidationError("start_lr", "must be a finite non-negative number");
  if (lr_schedule != "cosine")
    throw ValidationError("lr_schedule", "only \"cosine\" is supported");
  if (!(warmup_epochs >= 0.0) || warmup_epochs >= static_cast<double>(epochs))
    throw ValidationError("warmup_epochs", "must lie in [0, epochs)");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0))
    throw ValidationError("final_lr_fraction", "must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay", "must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ValidationError("label_smoothing", "must lie in [0, 1)");
  if (optimizer != "adamw") throw ValidationError("optimizer", "only \"adamw\" is supported");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0))
    throw ValidationError("optimizer.beta1", "must lie in [0, 1)");
  if (!(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0))
    throw ValidationError("optimizer.beta2", "must lie in [0, 1)");
  if (!(adamw.eps > 0.0)) throw ValidationError("optimizer.eps", "must be positive");
  if (!(aux_loss_weight >= 0.0))
    throw ValidationError("aux_loss_weight", "must be non-negative");
  if (grad_clip && !(*grad_clip > 0.0))
    throw ValidationError("grad_clip", "must be positive");
  if (max_steps && *max_steps == 0) throw ValidationError("max_steps", "must be positive");
  if (const auto* b = std::get_if<BlobSpec>(&data)) {
    positive(b->size, "data.size");
    if (b->num_classes < 2) throw ValidationError("data.num_classes", "need at least 2");
    positive(b->channels, "data.channels");
    positive(b->height, "data.height");
    positive(b->width, "data.width");
    if (!(b->noise >= 0.0)) throw ValidationError("data.noise", "must be non-negative");
  } else {
    const auto& g = std::get<GrammarSpec>(data);
    if (g.vocab < 3) throw ValidationError("data.vocab", "need at least 3 symbols");
    if (g.branching == 0 || g.branching >= g.vocab)
      throw ValidationError("data.branching", "must lie in [1, vocab)");
    positive(g.seq_len, "data.seq_len");
    if (g.tokens < g.seq_len + 1)
      throw ValidationError("data.tokens", "stream shorter than one training window");
  }
}

json to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"start_lr", c.start_lr},
            {"lr_schedule", c.lr_schedule},
            {"warmup_epochs", c.warmup_epochs},
            {"final_lr_fraction", c.final_lr_fraction},
            {"weight_decay", c.weight_decay},
            {"label_smoothing", c.label_smoothing},
            {"optimizer",
             {{"name", c.optimizer},
              {"beta1", c.adamw.beta1},
              {"beta2", c.adamw.beta2},
              {"eps", c.adamw.eps}}},
            {"seed", c.seed},
            {"aux_loss_weight", c.aux_loss_weight},
            {"log_every", c.log_every},
            {"data", data_to_json(c.data)}};
  if (c.grad_clip) j["grad_clip"] = *c.grad_clip;
  if (c.max_steps) j["max_steps"] = *c.max_steps;
  for (const auto& [k, v] : c.inert.items()) j[k] = v;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  Fields f(j, "");
  f.optional("epochs", c.epochs);
  f.optional("batch_size", c.batch_size);
  f.optional("start_lr", c.start_lr);
  f.optional("lr_schedule", c.lr_schedule);
  f.optional("warmup_epochs", c.warmup_epochs);
  f.optional("final_lr_fraction", c.final_lr_fraction);
  f.optional("weight_decay", c.weight_decay);
  f.optional("label_smoothing", c.label_smoothing);
  if (const json* opt = f.child("optimizer")) {
    if (opt->is_string()) {
      c.optimizer = opt->get<std::string>();
    } else {
      Fields of(*opt, "optimizer");
      of.optional("name", c.optimizer);
      of.optional("beta1", c.adamw.beta1);
      of.optional("beta2", c.adamw.beta2);
      of.optional("eps", c.adamw.eps);
      of.finish();
    }
    // Published tables spell it "AdamW".
    for (char& ch : c.optimizer) ch = static_cast<char>(std::tolower(ch));
  }
  read_seed(f, "seed", c.seed);
  f.optional("aux_loss_weight", c.aux_loss_weight);
  read_optional(f, "grad_clip", c.grad_clip);
  read_optional(f, "max_steps", c.max_steps);
  f.optional("log_every", c.log_every);
  if (const json* d = f.child("data")) c.data = data_from_json(*d);
  for (const char* key : kInertKeys) {
    if (const json* v = f.child(key)) c.inert[key] = *v;
  }
  f.finish();
  for (char& ch : c.lr_schedule) ch = static_cast<char>(std::tolower(ch));
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  const json j = models::read_json_file(path);
  try {
    return config_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ":" + e.field(), e.message());
  }
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace paramaug::train
