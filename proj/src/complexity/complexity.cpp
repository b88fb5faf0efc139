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

#include "paramaug/complexity.hpp"

#include <iomanip>
#include <sstream>

namespace paramaug::complexity {

namespace {

Count c(std::size_t v) { return static_cast<Count>(v); }

void apply(FlopConvention convention, LayerCost& cost) {
  cost.flops *= convention.mac_factor;
  cost.flops_biases *= convention.mac_factor;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

nlohmann::json rational_json(const Rational& r) {
  return {{"num", r.numerator()}, {"den", r.denominator()}, {"value", to_double(r)}};
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::DynamicConv: return "dynamic_conv";
    case LayerKind::Linear: return "linear";
    case LayerKind::Embedding: return "embedding";
    case LayerKind::Norm: return "norm";
    case LayerKind::Attention: return "attention";
    case LayerKind::Ffn: return "ffn";
    case LayerKind::MoeFfn: return "moe_ffn";
    case LayerKind::Router: return "router";
  }
  return "?";
}

FlopConvention FlopConvention::parse(std::string_view s) {
  if (s == "mac=1") return {1};
  if (s == "mac=2") return {2};
  throw ValidationError("flop-convention",
                        "expected mac=1 or mac=2, got '" + std::string(s) + "'");
}

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

LayerCost count_conv(const layers::ConvSpec& spec, std::size_t out_h,
                     std::size_t out_w, std::string name) {
  const Count area = c(out_h) * c(out_w);
  const Count per_pixel = c(spec.c_out) * c(spec.c_in / spec.groups) * c(spec.k * spec.k);
  LayerCost cost;
  cost.layer = std::move(name);
  cost.kind = LayerKind::Conv;
  cost.params_weights = per_pixel;
  cost.flops = area * per_pixel;
  if (spec.has_bias) {
    cost.params_biases = c(spec.c_out);
    cost.flops_biases = area * c(spec.c_out);
  }
  cost.conv = ConvShape{c(spec.c_in), c(spec.c_out), c(spec.k), c(spec.groups), 0, area};
  return cost;
}

LayerCost count_dynamic_conv(const layers::ConvSpec& spec, std::size_t m,
                             std::size_t out_h, std::size_t out_w,
                             std::string name) {
  const Count area = c(out_h) * c(out_w);
  const Count kernel = c(spec.c_out) * c(spec.c_in / spec.groups) * c(spec.k * spec.k);
  const Count cin = c(spec.c_in), mm = c(m);
  const Count router = cin * cin + cin * mm;  // coefficient generation
  const Count fusion = mm * kernel;           // weighted sum of the bank
  LayerCost cost;
  cost.layer = std::move(name);
  cost.kind = LayerKind::DynamicConv;
  cost.params_weights = router + mm * kernel;
  cost.flops = router + fusion + area * kernel;
  // Router biases always exist; expert biases only with has_bias.
  cost.params_biases = cin + mm;
  cost.flops_biases = cin + mm;
  if (spec.has_bias) {
    cost.params_biases += mm * c(spec.c_out);
    cost.flops_biases += mm * c(spec.c_out) + area * c(spec.c_out);
  }
  cost.notes = "M=" + std::to_string(m);
  cost.conv = ConvShape{cin, c(spec.c_out), c(spec.k), c(spec.groups), mm, area};
  return cost;
}

Ratios ratios(const LayerCost& standard, const LayerCost& dynamic) {
  if (standard.params_weights <= 0 || standard.flops <= 0)
    throw ContractError("ratios: standard layer has zero params or flops");
  if (!dynamic.conv) throw ContractError("ratios: dynamic cost lacks conv geometry");
  const ConvShape& g = *dynamic.conv;
  Ratios r;
  r.r_param = Rational(dynamic.params_weights, standard.params_weights);
  r.r_flops = Rational(dynamic.flops, standard.flops);
  r.r_param_approx = 1.0 / static_cast<double>(g.k * g.k) + static_cast<double>(g.m);
  r.r_flops_approx = 1.0;
  r.m_much_less_than_ckk = g.m * kParamRegimeFactor <= g.c_out * g.k * g.k;
  r.channels_balanced = 2 * g.c_in >= g.c_out && 2 * g.c_out >= g.c_in;
  r.m_above_one = g.m > 1;
  r.m_much_less_than_hw = g.m * kFlopsRegimeFactor <= g.out_area;
  return r;
}

void ComplexityReport::add(LayerCost cost) {
  total_params += cost.params();
  total_params_biases += cost.params_biases;
  total_flops += cost.flops;
  total_flops_biases += cost.flops_biases;
  per_layer.push_back(std::move(cost));
}

ComplexityReport count_conv_descriptor(const models::ConvDescriptor& desc,
                                       FlopConvention convention) {
  desc.validate();
  const std::size_t oh = desc.spec.out_extent(desc.input_h);
  const std::size_t ow = desc.spec.out_extent(desc.input_w);
  LayerCost standard = count_conv(desc.spec, oh, ow, "standard");
  LayerCost dynamic = count_dynamic_conv(desc.spec, desc.m, oh, ow, "dynamic");
  ComplexityReport report;
  report.model = "conv";
  report.convention = convention;
  report.ratios = ratios(standard, dynamic);
  apply(convention, standard);
  apply(convention, dynamic);
  report.baseline_params = standard.params();
  report.baseline_flops = standard.flops;
  report.add(std::move(dynamic));
  // The standard layer is the reference, not part of the total.
  report.per_layer.insert(report.per_layer.begin(), std::move(standard));
  return report;
}

ComplexityReport count_cnn(const models::CnnDescriptor& desc,
                           FlopConvention convention) {
  desc.validate();
  const models::CnnLayout lay = models::layout(desc);
  ComplexityReport report;
  report.model = "cnn";
  report.convention = convention;
  Count base_params = 0, base_flops = 0;
  for (const auto& site : lay.convs) {
    LayerCost standard = count_conv(site.spec, site.out_h, site.out_w, site.name);
    apply(convention, standard);
    base_params += standard.params();
    base_flops += standard.flops;
    if (site.dynamic_m == 0) {
      standard.notes = std::string(models::to_string(site.role));
      report.add(std::move(standard));
      continue;
    }
    LayerCost dyn = count_dynamic_conv(site.spec, site.dynamic_m, site.out_h,
                                       site.out_w, site.name);
    apply(convention, dyn);
    dyn.notes = std::string(models::to_string(site.role)) + " " + dyn.notes;
    report.add(std::move(dyn));
  }
  LayerCost fc;
  fc.layer = "classifier";
  fc.kind = LayerKind::Linear;
  fc.params_weights = c(lay.classifier_in) * c(lay.num_classes);
  fc.params_biases = c(lay.num_classes);
  fc.flops = fc.params_weights;
  fc.flops_biases = fc.params_biases;
  apply(convention, fc);
  base_params += fc.params();
  base_flops += fc.flops;
  report.add(std::move(fc));
  report.baseline_params = base_params;
  report.baseline_flops = base_flops;
  return report;
}

ComplexityReport count_transformer(const models::LlamaDescriptor& desc,
                                   SequenceOptions seq, FlopConvention convention) {
  desc.validate();
  if (seq.prompt_len == 0) throw ValidationError("prompt_len", "must be positive");
  if (seq.response_len == 0) throw ValidationError("response_len", "must be positive");
  const Count d = c(desc.d_model), ff = c(desc.d_ff), vocab = c(desc.vocab_size);
  const Count s = c(seq.tokens());
  const Count n = desc.moe ? c(desc.moe->n_experts) : 1;

  ComplexityReport report;
  report.model = "llama";
  report.convention = convention;
  Count per_token = 0;
  auto push = [&](LayerCost cost, Count token_macs) {
    apply(convention, cost);
    per_token += token_macs;
    report.add(std::move(cost));
  };

  push({"embed", LayerKind::Embedding, vocab * d, 0, 0, 0, "lookup", {}}, 0);
  for (std::size_t i = 0; i < desc.n_layers; ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    push({p + "attn_norm", LayerKind::Norm, 0, d, 0, 0, "rmsnorm gain", {}}, 0);
    push({p + "attn", LayerKind::Attention, 4 * d * d, 0, s * 4 * d * d + s * (s + 1) * d, 0,
          "q,k,v,o projections + causal scores/values", {}},
         4 * d * d);
    push({p + "ffn_norm", LayerKind::Norm, 0, d, 0, 0, "rmsnorm gain", {}}, 0);
    if (desc.moe) {
      const std::string where(layers::to_string(desc.moe->placement));
      push({p + "ffn", LayerKind::MoeFfn, 3 * d * ff + (n - 1) * d * ff, 0, s * 3 * d * ff, 0,
            "swiglu, " + where + " x" + std::to_string(n) + ", top-1", {}},
           3 * d * ff);
      push({p + "router", LayerKind::Router, d * n, 0, s * d * n, 0, "", {}}, d * n);
    } else {
      push({p + "ffn", LayerKind::Ffn, 3 * d * ff, 0, s * 3 * d * ff, 0, "swiglu", {}},
           3 * d * ff);
    }
  }
  push({"final_norm", LayerKind::Norm, 0, d, 0, 0, "rmsnorm gain", {}}, 0);
  push({"lm_head", LayerKind::Linear, d * vocab, 0, s * d * vocab, 0, "untied", {}},
       d * vocab);
  report.flops_per_token = per_token * convention.mac_factor;
  return report;
}

ComplexityReport count(const models::Descriptor& desc, FlopConvention convention,
                       SequenceOptions seq) {
  if (const auto* cnn = std::get_if<models::CnnDescriptor>(&desc))
    return count_cnn(*cnn, convention);
  if (const auto* lm = std::get_if<models::LlamaDescriptor>(&desc))
    return count_transformer(*lm, seq, convention);
  return count_conv_descriptor(std::get<models::ConvDescriptor>(desc), convention);
}

nlohmann::json to_json(const LayerCost& cost) {
  return {{"layer", cost.layer},
          {"kind", to_string(cost.kind)},
          {"params_weights", cost.params_weights},
          {"params_biases", cost.params_biases},
          {"flops", cost.flops},
          {"flops_biases", cost.flops_biases},
          {"notes", cost.notes}};
}

nlohmann::json to_json(const Ratios& r) {
  return {{"r_param", rational_json(r.r_param)},
          {"r_flops", rational_json(r.r_flops)},
          {"r_param_approx", r.r_param_approx},
          {"r_flops_approx", r.r_flops_approx},
          {"conditions",
           {{"m_much_less_than_cout_k2", r.m_much_less_than_ckk},
            {"cin_close_to_cout", r.channels_balanced},
            {"m_above_one", r.m_above_one},
            {"m_much_less_than_hw", r.m_much_less_than_hw}}},
          {"param_approximation_holds", r.param_regime()},
          {"flops_approximation_holds", r.flops_regime()}};
}

nlohmann::json to_json(const ComplexityReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : report.per_layer) layers.push_back(to_json(l));
  nlohmann::json j = {{"model", report.model},
                      {"flop_convention", report.convention.str()},
                      {"layers", std::move(layers)},
                      {"totals",
                       {{"params", report.total_params},
                        {"params_biases", report.total_params_biases},
                        {"flops", report.total_flops},
                        {"flops_biases", report.total_flops_biases}}}};
  if (report.flops_per_token) j["flops_per_token"] = *report.flops_per_token;
  if (report.ratios) j["ratios"] = to_json(*report.ratios);
  if (report.baseline_params) {
    j["baseline"] = {{"params", *report.baseline_params},
                     {"flops", *report.baseline_flops}};
  }
  return j;
}

std::string to_csv(const ComplexityReport& report) {
  std::ostringstream out;
  out << "layer,kind,params_weights,params_biases,flops,notes\n";
  for (const auto& l : report.per_layer) {
    out << csv_field(l.layer) << ',' << to_string(l.kind) << ',' << l.params_weights
        << ',' << l.params_biases << ',' << l.flops << ',' << csv_field(l.notes) << '\n';
  }
  out << "total,," << report.total_params - report.total_params_biases << ','
      << report.total_params_biases << ',' << report.total_flops << ",\n";
  return out.str();
}

std::string to_text(const ComplexityReport& report) {
  std::ostringstream out;
  out << report.model << " (" << report.convention.str() << ")\n";
  out << std::left << std::setw(36) << "layer" << std::setw(14) << "kind" << std::right
      << std::setw(16) << "params" << std::setw(20) << "flops" << '\n';
  for (const auto& l : report.per_layer) {
    out << std::left << std::setw(36) << l.layer << std::setw(14) << to_string(l.kind)
        << std::right << std::setw(16) << l.params() << std::setw(20) << l.flops << '\n';
  }
  out << "total params " << report.total_params << ", flops " << report.total_flops << '\n';
  if (report.flops_per_token) out << "flops per token " << *report.flops_per_token << '\n';
  if (report.ratios) {
    const Ratios& r = *report.ratios;
    out << std::setprecision(6) << "r_param " << r.r_param << " = " << to_double(r.r_param)
        << " (approx " << r.r_param_approx << (r.param_regime() ? "" : ", outside regime")
        << ")\n"
        << "r_flops " << r.r_flops << " = " << to_double(r.r_flops) << " (approx "
        << r.r_flops_approx << (r.flops_regime() ? "" : ", outside regime") << ")\n";
  }
  return out.str();
}

}  // namespace paramaug::complexity
