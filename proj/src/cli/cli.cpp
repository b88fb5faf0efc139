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

#include "paramaug/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "paramaug/complexity.hpp"
#include "paramaug/gradcheck.hpp"
#include "paramaug/layers/conv.hpp"
#include "paramaug/models/checkpoint.hpp"
#include "paramaug/train/trainer.hpp"

namespace paramaug::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ----------------------------------------------------------------------------
// Shared helpers

std::string num(double v) { return json(v).dump(); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path);
}

// Sends a document to --out when given, otherwise to stdout.
void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

std::string model_name(const std::string& descriptor_path) {
  return fs::path(descriptor_path).stem().string();
}

bool within(double actual, double expected, double tol) {
  return std::abs(actual - expected) <= tol * std::abs(expected);
}

// Forward FLOPs used in run records: per image for CNNs, per token for LMs.
long long record_flops(const models::Descriptor& desc, complexity::FlopConvention conv) {
  const complexity::ComplexityReport r = complexity::count(desc, conv);
  return r.flops_per_token ? *r.flops_per_token : r.total_flops;
}

// ----------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string descriptor;
  std::string format = "json";
  std::string flop_convention = "mac=1";
  std::size_t prompt_len = 1024;
  std::size_t response_len = 1;
  std::optional<double> expect_params;
  std::optional<double> expect_flops;
  double tol = 0.01;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const auto conv = complexity::FlopConvention::parse(a.flop_convention);
  const models::Descriptor desc = models::load_descriptor(a.descriptor);
  complexity::ComplexityReport report =
      complexity::count(desc, conv, {a.prompt_len, a.response_len});
  report.model = model_name(a.descriptor);

  json checks = json::array();
  bool ok = true;
  auto check = [&](const char* name, std::optional<double> expected, double actual) {
    if (!expected) return;
    const bool pass = within(actual, *expected, a.tol);
    ok = ok && pass;
    checks.push_back({{"name", name},
                      {"expected", *expected},
                      {"actual", actual},
                      {"rel_error", std::abs(actual - *expected) / std::abs(*expected)},
                      {"tol", a.tol},
                      {"passed", pass}});
  };
  check("total_params", a.expect_params, static_cast<double>(report.total_params));
  check("total_flops", a.expect_flops, static_cast<double>(report.total_flops));

  std::string text;
  if (a.format == "json") {
    json j = complexity::to_json(report);
    if (!checks.empty()) j["checks"] = checks;
    text = j.dump(2) + "\n";
  } else {
    text = a.format == "csv" ? complexity::to_csv(report) : complexity::to_text(report);
    for (const auto& c : checks) {
      err << "check " << c["name"].get<std::string>() << ": expected " << num(c["expected"])
          << " actual " << num(c["actual"]) << " tol " << num(a.tol) << " -> "
          << (c["passed"].get<bool>() ? "PASS" : "FAIL") << "\n";
    }
  }
  emit(text, a.out, out);
  return ok ? kOk : kCheckFailed;
}

// ----------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string descriptor;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  std::string inject_fault;
  double fault_factor = 1.5;
  std::size_t batch = 2;
  double scale_floor = 1e-6;
  std::string out;
};

// Maps a parameter name to the layer that owns it.
std::string owning_layer(const std::string& name) {
  static const std::vector<std::string> kStandalone{"embed", "final_norm", "lm_head"};
  if (std::find(kStandalone.begin(), kStandalone.end(), name) != kStandalone.end()) return name;
  const auto dot = name.rfind('.');
  if (dot == std::string::npos) return name;
  const std::string tail = name.substr(dot + 1);
  if (tail.find("norm") != std::string::npos) return name;
  if (name.rfind("layers.", 0) == 0) {
    // layers.<i>.attn.wq, layers.<i>.ffn.up_proj.expert0 -> layers.<i>.<part>
    const auto a = name.find('.', 7);
    const auto b = a == std::string::npos ? a : name.find('.', a + 1);
    return b == std::string::npos ? name : name.substr(0, b);
  }
  std::string layer = name.substr(0, dot);
  const auto dot2 = layer.rfind('.');
  if (dot2 != std::string::npos) {
    const std::string sub = layer.substr(dot2 + 1);
    if (sub == "router" || sub.rfind("expert", 0) == 0 || sub.rfind("branch", 0) == 0)
      layer = layer.substr(0, dot2);
  }
  return layer;
}

// Moves every bias off zero so that no ReLU input sits exactly on its kink,
// where central differences are meaningless.
void jitter_biases(const std::vector<layers::NamedTensor>& params, std::uint64_t seed) {
  Rng rng = Rng(seed).split(0xB1A5ULL);
  for (const auto& p : params) {
    const std::string& n = p.name;
    const bool bias = n.ends_with("bias") || n.ends_with(".b1") || n.ends_with(".b2");
    if (!bias) continue;
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v = rng.normal(0.0, 0.5);
  }
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  const models::Descriptor desc = models::load_descriptor(a.descriptor);
  Rng rng(a.seed);
  Rng input_rng = Rng(a.seed).split(0x1A9u);

  std::vector<layers::NamedTensor> params;
  std::function<Tensor()> f;
  // Keeps the network alive for the closure.
  std::shared_ptr<void> owner;

  if (const auto* cd = std::get_if<models::ConvDescriptor>(&desc)) {
    cd->validate();
    auto layer = std::shared_ptr<layers::Module>(layers::make_conv(cd->spec, cd->m, rng));
    params = layer->parameters("layer.");
    const Tensor x = Tensor::normal(
        Shape{a.batch, cd->spec.c_in, cd->input_h, cd->input_w}, input_rng, 1.0);
    f = [layer, x] { return layer->forward(x); };
    owner = layer;
  } else {
    models::Model m = models::build(desc, rng);
    params = m.parameters();
    if (auto* cnn = m.cnn()) {
      const auto& d = cnn->descriptor();
      const Tensor x =
          Tensor::normal(Shape{a.batch, d.in_channels, d.input_h, d.input_w}, input_rng, 1.0);
      f = [cnn, x] { return cnn->forward(x); };
    } else {
      auto* lm = m.lm();
      const auto& d = lm->descriptor();
      std::vector<std::size_t> tokens(std::min<std::size_t>(8, d.max_seq_len));
      for (auto& t : tokens) t = input_rng.uniform_int(d.vocab_size);
      f = [lm, tokens] { return lm->forward(tokens).logits; };
    }
    owner = std::make_shared<models::Model>(m);
  }
  jitter_biases(params, a.seed);

  std::vector<Tensor> tensors;
  for (const auto& p : params) tensors.push_back(p.tensor);
  std::vector<GradReport> reports;
  {
    std::optional<ScopedBackwardFault> fault;
    if (!a.inject_fault.empty()) fault.emplace(a.inject_fault, a.fault_factor);
    reports = check_gradients(f, tensors, 1e-5, a.seed, a.scale_floor);
  }

  std::vector<std::string> order;
  std::map<std::string, json> layers;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string layer = owning_layer(params[i].name);
    auto [it, fresh] = layers.try_emplace(layer, json{{"layer", layer},
                                                      {"max_rel_error", 0.0},
                                                      {"coordinates", 0},
                                                      {"parameters", json::array()}});
    if (fresh) order.push_back(layer);
    json& row = it->second;
    const GradReport& r = reports[i];
    row["max_rel_error"] = std::max(row["max_rel_error"].get<double>(), r.max_rel_error);
    row["coordinates"] = row["coordinates"].get<std::size_t>() + r.coordinates;
    row["parameters"].push_back({{"name", params[i].name},
                                 {"max_rel_error", r.max_rel_error},
                                 {"worst_index", r.worst_index}});
  }
  json rows = json::array();
  std::vector<std::string> failing;
  for (const auto& name : order) {
    json row = layers.at(name);
    const bool pass = row["max_rel_error"].get<double>() <= a.tol;
    row["passed"] = pass;
    if (!pass) failing.push_back(name);
    rows.push_back(std::move(row));
  }
  json doc = {{"model", model_name(a.descriptor)},
              {"seed", a.seed},
              {"tolerance", a.tol},
              {"step", 1e-5},
              {"relative_floor", reports.empty() ? 1e-8 : reports.front().floor},
              {"passed", failing.empty()},
              {"failing_layers", failing},
              {"layers", std::move(rows)}};
  if (!a.inject_fault.empty())
    doc["injected_fault"] = {{"op", a.inject_fault}, {"factor", a.fault_factor}};
  emit(doc.dump(2) + "\n", a.out, out);
  for (const auto& name : failing) err << "gradcheck: layer " << name << " exceeds tolerance\n";
  return failing.empty() ? kOk : kCheckFailed;
}

// ----------------------------------------------------------------------------
// train / sweep

struct TrainArgs {
  std::string descriptor;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string name;
  std::string flop_convention = "mac=1";
};

// Builds, trains and writes one run into `dir`.
train::RunRecord train_one(const models::Descriptor& desc, train::TrainConfig cfg,
                           const std::string& name, complexity::FlopConvention conv,
                           const fs::path& dir) {
  Rng rng(cfg.seed);
  models::Model model = models::build(desc, rng);
  train::RunRecord record;
  if (auto* cnn = model.cnn()) {
    const auto* spec = std::get_if<train::BlobSpec>(&cfg.data);
    if (!spec) throw ValidationError("data.kind", "a CNN descriptor trains on \"blobs\"");
    record = train::train_classifier(*cnn, train::make_blobs(*spec), cfg);
  } else {
    const auto* spec = std::get_if<train::GrammarSpec>(&cfg.data);
    if (!spec) throw ValidationError("data.kind", "a transformer descriptor trains on \"grammar\"");
    record = train::train_lm(*model.lm(), train::make_grammar(*spec), cfg);
  }
  record.model = name;
  record.flops = record_flops(desc, conv);
  train::write_run_record(record, dir, cfg.log_every);
  models::save_checkpoint(model, (dir / "model.ckpt").string(),
                          {cfg.seed, record.steps.size()});
  return record;
}

train::TrainConfig load_train_config(const std::string& path, std::optional<std::uint64_t> seed) {
  train::TrainConfig cfg = train::load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto conv = complexity::FlopConvention::parse(a.flop_convention);
  const models::Descriptor desc = models::load_descriptor(a.descriptor);
  if (std::holds_alternative<models::ConvDescriptor>(desc))
    throw ValidationError("type", "a single conv layer cannot be trained; use a cnn descriptor");
  const train::TrainConfig cfg = load_train_config(a.config, a.seed);
  const std::string name = a.name.empty() ? model_name(a.descriptor) : a.name;
  const train::RunRecord r = train_one(desc, cfg, name, conv, a.out);
  out << train::summary_json(r).dump(2) << "\n";
  return kOk;
}

std::string report_header() { return "model,params,flops,metric\n"; }

std::string report_row(const train::RunRecord& r, bool with_metric = true) {
  return r.model + "," + std::to_string(r.parameters) + "," +
         (r.flops ? std::to_string(*r.flops) : "") + "," + (with_metric ? num(r.metric()) : "") +
         "\n";
}

struct SweepArgs {
  std::string descriptor;
  std::string config;
  std::string out;
  std::vector<std::size_t> experts{1, 2, 4, 8};
  std::optional<std::uint64_t> seed;
  bool count_only = false;
  std::string flop_convention = "mac=1";
};

// The descriptor with M experts; M = 0 gives the plain model.
models::Descriptor with_experts(const models::Descriptor& base, std::size_t m) {
  if (auto cnn = std::get_if<models::CnnDescriptor>(&base)) {
    models::CnnDescriptor d = *cnn;
    if (m == 0) {
      d.dynamic.reset();
    } else {
      models::DynamicDesc dyn = d.dynamic.value_or(models::DynamicDesc{});
      dyn.m = m;
      d.dynamic = dyn;
    }
    d.validate();
    return d;
  }
  if (auto lm = std::get_if<models::LlamaDescriptor>(&base)) {
    models::LlamaDescriptor d = *lm;
    if (m == 0) {
      d.moe.reset();
    } else {
      models::MoeDesc moe = d.moe.value_or(models::MoeDesc{});
      moe.n_experts = m;
      d.moe = moe;
    }
    d.validate();
    return d;
  }
  throw ValidationError("type", "sweep needs a cnn or llama descriptor");
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto conv = complexity::FlopConvention::parse(a.flop_convention);
  const models::Descriptor base = models::load_descriptor(a.descriptor);
  std::optional<train::TrainConfig> cfg;
  if (!a.count_only) {
    if (a.config.empty()) throw ValidationError("config", "required unless --count-only");
    cfg = load_train_config(a.config, a.seed);
  }
  fs::create_directories(a.out);
  std::string csv = report_header();
  json members = json::array();
  std::vector<std::pair<std::size_t, long long>> params;
  std::vector<long long> flops;
  for (std::size_t m : a.experts) {
    const models::Descriptor desc = with_experts(base, m);
    const std::string name = model_name(a.descriptor) + "-m" + std::to_string(m);
    train::RunRecord r;
    if (cfg) {
      r = train_one(desc, *cfg, name, conv, fs::path(a.out) / name);
    } else {
      r.model = name;
      r.parameters = static_cast<std::size_t>(complexity::count(desc, conv).total_params);
      r.flops = record_flops(desc, conv);
    }
    csv += report_row(r, cfg.has_value());
    json member = {{"model", name}, {"experts", m}, {"params", r.parameters}, {"flops", *r.flops}};
    if (cfg) member["metric"] = {{"name", r.metric_name()}, {"value", r.metric()}};
    members.push_back(std::move(member));
    if (m > 0) params.emplace_back(m, static_cast<long long>(r.parameters));
    flops.push_back(*r.flops);
  }
  // Exact affine test over the members with at least one expert.
  bool affine = true;
  for (std::size_t i = 2; i < params.size(); ++i) {
    const auto [m0, p0] = params[0];
    const auto [m1, p1] = params[1];
    const auto [mi, pi] = params[i];
    affine = affine && (pi - p0) * static_cast<long long>(m1 - m0) ==
                           (p1 - p0) * static_cast<long long>(mi - m0);
  }
  const auto [lo, hi] = std::minmax_element(flops.begin(), flops.end());
  json doc = {{"descriptor", model_name(a.descriptor)},
              {"experts", a.experts},
              {"members", std::move(members)},
              {"params_affine_in_experts", affine},
              {"flops_spread", flops.empty() ? 0.0 : double(*hi - *lo) / double(*lo)}};
  write_text((fs::path(a.out) / "sweep.csv").string(), csv);
  write_text((fs::path(a.out) / "sweep.json").string(), doc.dump(2) + "\n");
  out << csv;
  return kOk;
}

// ----------------------------------------------------------------------------
// report

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path,
               std::ostream& out) {
  if (inputs.empty()) throw ValidationError("runs", "no run records given");
  std::string csv = report_header();
  for (const auto& in : inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) p /= "summary.json";
    csv += report_row(train::read_run_summary(p));
  }
  emit(csv, out_path, out);
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parameter and FLOPs accounting, gradient checks and toy training for "
               "dynamic-conv and mixture-of-experts models.",
               "paramaug"};
  app.require_subcommand(1);

  const std::vector<std::string> conventions{"mac=1", "mac=2"};

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Count parameters and FLOPs of a descriptor");
  analyze->add_option("descriptor", an.descriptor, "Descriptor JSON")->required();
  analyze->add_option("--format", an.format)->check(CLI::IsMember({"json", "csv", "text"}));
  analyze->add_option("--flop-convention", an.flop_convention)->check(CLI::IsMember(conventions));
  analyze->add_option("--prompt-len", an.prompt_len, "Transformer prompt tokens");
  analyze->add_option("--response-len", an.response_len, "Transformer generated tokens");
  analyze->add_option("--expect-params", an.expect_params, "Expected total parameters");
  analyze->add_option("--expect-flops", an.expect_flops, "Expected total FLOPs");
  analyze->add_option("--tol", an.tol, "Relative tolerance for expectations");
  analyze->add_option("--out", an.out, "Write the document here instead of stdout");

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  gradcheck->add_option("descriptor", gc.descriptor, "Descriptor JSON")->required();
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--tol", gc.tol, "Max relative error per layer");
  gradcheck->add_option("--batch", gc.batch, "Images per check (CNN and conv)");
  gradcheck->add_option("--inject-fault", gc.inject_fault,
                        "Scale the backward rule of this op (negative control)");
  gradcheck->add_option("--fault-factor", gc.fault_factor);
  gradcheck->add_option("--scale-floor", gc.scale_floor,
                        "Relative-error floor as a fraction of 1 + |objective|; 0 for 1e-8");
  gradcheck->add_option("--out", gc.out);

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train on synthetic data and write a run record");
  trainc->add_option("descriptor", tr.descriptor)->required();
  trainc->add_option("config", tr.config)->required();
  trainc->add_option("--out", tr.out, "Run directory")->required();
  trainc->add_option("--seed", tr.seed, "Override the config seed");
  trainc->add_option("--name", tr.name, "Model name in the record");
  trainc->add_option("--flop-convention", tr.flop_convention)->check(CLI::IsMember(conventions));

  std::vector<std::string> runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "CSV of model,params,flops,metric from runs");
  report->add_option("runs", runs, "Run directories or summary.json files")->required();
  report->add_option("--out", report_out);

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "Train one member per expert count");
  sweep->add_option("descriptor", sw.descriptor)->required();
  sweep->add_option("config", sw.config);
  sweep->add_option("--out", sw.out, "Sweep directory")->required();
  sweep->add_option("--experts", sw.experts, "Expert counts; 0 is the plain model")
      ->delimiter(',');
  sweep->add_option("--seed", sw.seed);
  sweep->add_flag("--count-only", sw.count_only, "Only count, do not train");
  sweep->add_option("--flop-convention", sw.flop_convention)->check(CLI::IsMember(conventions));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "paramaug: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(an, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(gc, out, err);
    if (trainc->parsed()) return cmd_train(tr, out);
    if (report->parsed()) return cmd_report(runs, report_out, out);
    if (sweep->parsed()) return cmd_sweep(sw, out);
  } catch (const ValidationError& e) {
    err << "paramaug: " << e.what() << "\n";
    return kUsageError;
  } catch (const ShapeError& e) {
    err << "paramaug: " << e.what() << "\n";
    return kUsageError;
  } catch (const train::DivergenceError& e) {
    err << "paramaug: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const Error& e) {
    err << "paramaug: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "paramaug: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace paramaug::cli
