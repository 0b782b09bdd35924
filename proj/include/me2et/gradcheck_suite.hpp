#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "me2et/model.hpp"
#include "me2et/numerics/grad_check.hpp"

namespace me2et {

struct GradCheckRow {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0;
  bool passed = false;
};

struct GradCheckCase {
  std::string name;
  num::ScalarFn<double> fn;
  std::vector<num::Tensor<double>> inputs;
};

namespace detail {

// Identity forward, backward scaled by 1.5: a deliberately wrong gradient.
inline num::Tensor<double> faulty_identity(const num::Tensor<double>& x) {
  const std::size_t n = x.numel();
  num::Buffer<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i];
  return num::detail::finish<double>("faulty_identity", x.shape(), std::move(out), {x}, 0, [n](num::Node<double>& self) {
    const double* g = self.grad.data();
    double* gx = num::detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) gx[i] += 1.5 * g[i];
  });
}

inline num::Tensor<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  return normal_tensor<double>({r, c}, 1.0, rng);
}

}  // namespace detail

// The tiny end-to-end geometry: d=8, K=2, one layer, four tokens per modality.
inline ModelConfig tiny_gradcheck_model(Variant variant = Variant::full) {
  ModelConfig m;
  m.d = 8;
  m.heads = 2;
  m.head_dim = 4;
  m.layers = 1;
  m.pool_tokens = 2;
  m.classes = 2;
  m.vocab = 10;
  m.text_tokens = 4;
  m.visual_tokens = 4;
  m.acoustic_tokens = 4;
  m.visual_patch_dim = 6;
  m.acoustic_patch_dim = 5;
  m.variant = variant;
  return m;
}

// Every differentiable primitive, each module, and the tiny model end to end.
inline std::vector<GradCheckCase> gradcheck_cases(std::uint64_t seed = 0) {
  using Td = num::Tensor<double>;
  auto rng = make_rng(seed, "gradcheck");
  auto rand = [&](std::size_t r, std::size_t c) { return detail::random_matrix(r, c, rng); };
  const Td mix = rand(3, 4);
  // Fixed projection so every output coordinate reaches the loss with its own weight.
  auto weigh = [mix](const Td& t) { return num::sum(num::matmul(t, num::transpose(mix))); };
  auto squash = [](const Td& t) { return num::sum(num::gelu(t)); };

  std::vector<GradCheckCase> cases;
  cases.push_back({"matmul", [squash](auto in) { return squash(num::matmul(in[0], in[1])); }, {rand(3, 4), rand(4, 2)}});
  cases.push_back({"transpose", [squash](auto in) { return squash(num::transpose(in[0])); }, {rand(3, 4)}});
  cases.push_back({"add", [squash](auto in) { return squash(num::add(in[0], in[1])); }, {rand(3, 4), rand(3, 4)}});
  cases.push_back({"add_bias", [squash](auto in) { return squash(num::add_bias(in[0], in[1])); }, {rand(3, 4), rand(1, 4)}});
  cases.push_back({"mul_row", [squash](auto in) { return squash(num::mul_row(in[0], in[1])); }, {rand(3, 4), rand(1, 4)}});
  cases.push_back({"scale", [squash](auto in) { return squash(num::scale(in[0], 0.7)); }, {rand(3, 4)}});
  cases.push_back({"sum", [](auto in) { return num::sum(in[0]); }, {rand(3, 4)}});
  cases.push_back({"softmax_rows", [weigh](auto in) { return weigh(num::softmax(in[0], 0)); }, {rand(3, 4)}});
  cases.push_back({"softmax_cols", [weigh](auto in) { return weigh(num::softmax(in[0], 1)); }, {rand(3, 4)}});
  cases.push_back({"layer_norm", [weigh](auto in) { return weigh(num::layer_norm(in[0], in[1], in[2])); },
                   {rand(3, 4), rand(1, 4), rand(1, 4)}});
  cases.push_back({"gelu", [weigh](auto in) { return weigh(num::gelu(in[0])); }, {rand(3, 4)}});
  cases.push_back({"bce_with_logits", [](auto in) { return num::bce_with_logits(in[0], Td::from({1, 3}, {1, 0, 1})); },
                   {rand(1, 3)}});
  cases.push_back({"slice_concat",
                   [squash](auto in) {
                     auto a = num::slice_cols(in[0], 1, 2), b = num::slice_rows(in[0], 0, 2);
                     return squash(num::concat_cols<double>({num::concat_rows<double>({a, num::repeat_rows(num::slice_rows(a, 0, 1), 2)}),
                                                             num::concat_rows<double>({num::transpose(b), num::slice_rows(a, 0, 2)})}));
                   },
                   {rand(4, 4)}});
  cases.push_back({"gather_rows",
                   [squash](auto in) {
                     std::vector<std::size_t> ids{2, 0, 2};
                     return squash(num::gather_rows(in[0], ids));
                   },
                   {rand(3, 2)}});

  // Modules at d=8.
  TransformerConfig enc{8, 2, 4, 1, 4, 4};
  {
    auto r = make_rng(seed, "gradcheck/encoder");
    auto p = EncoderParams<double>::init(enc, r);
    for (auto* t : {&p.layers[0].w_qkv, &p.layers[0].w_msa}) *t = normal_tensor<double>(t->shape(), 0.4, r);
    cases.push_back({"msa", [p, enc](auto in) { return num::sum(num::gelu(msa(in[0], p.layers[0], enc))); },
                     {rand(3, 8)}});
    ParamList<double> named;
    p.collect(named, "enc");
    std::vector<Td> inputs{rand(3, 8)};
    for (auto& [name, t] : named) inputs.push_back(t);
    cases.push_back({"encoder",
                     [p](auto in) { return num::sum(num::gelu(encode(TokenSequence<double>{in[0], Modality::visual}, p).summary.values)); },
                     inputs});
  }
  {
    auto r = make_rng(seed, "gradcheck/pool");
    auto p = PoolParams<double>::init(8, 2, 2, r);
    p.w = normal_tensor<double>(p.w.shape(), 0.5, r);
    cases.push_back({"attend_pool",
                     [p](auto in) {
                       SummaryVector<double> ctx[] = {{in[1], Modality::acoustic}, {in[2], Modality::textual}};
                       auto out = attend_pool<double>({in[0], Modality::visual}, ctx, p, Pass::visual_pass2);
                       return num::sum(num::gelu(out.pooled));
                     },
                     {rand(5, 8), rand(1, 8), rand(1, 8), p.w, p.b}});
  }
  {
    auto r = make_rng(seed, "gradcheck/fuse");
    auto p = FusionParams<double>::init(8, 2, true, false, r);
    cases.push_back({"fuse",
                     [p](auto in) {
                       auto out = fuse<double>({in[0], Modality::visual}, {in[1], Modality::acoustic}, {in[2], Modality::textual}, p);
                       return num::bce_with_logits(out.p, Td::from({1, 2}, {1, 0}));
                     },
                     {rand(1, 8), rand(1, 8), rand(1, 8), p.w_v, p.w_fusion.value(), p.w_decision}});
  }
  {
    const auto cfg = tiny_gradcheck_model();
    auto model = std::make_shared<Me2etModel<double>>(cfg, seed);
    auto r = make_rng(seed, "gradcheck/model");
    FeaturizedSample<double> s;
    s.visual_patches = normal_tensor<double>({cfg.visual_tokens, cfg.visual_patch_dim}, 1.0, r);
    s.acoustic_patches = normal_tensor<double>({cfg.acoustic_tokens, cfg.acoustic_patch_dim}, 1.0, r);
    s.text_ids = {1, 7, 3, 7};
    s.label = {1, 0};
    // Larger-than-init pool weights so the maps are far from uniform.
    for (auto* pool : {&model->core.visual_pool, &model->core.acoustic_pool, &model->core.refine_pool}) {
      auto& w = (*pool)->w;
      for (auto& v : w.mutable_data()) v = std::normal_distribution<double>(0.0, 0.5)(r);
    }
    std::vector<Td> inputs{s.visual_patches, s.acoustic_patches};
    for (auto& t : tensors_of(model->parameters())) inputs.push_back(t);
    // Parameters and patches are shared handles: perturbing inputs perturbs the model.
    cases.push_back({"model_end_to_end",
                     [model, s](auto) {
                       return num::bce_with_logits(model->forward(s).predictions.p, label_tensor<double>(s.label));
                     },
                     inputs});
  }
  return cases;
}

// Runs every case; `fault` names a case whose loss is routed through an op
// with a wrong backward (used to prove the check can fail).
inline std::vector<GradCheckRow> run_gradcheck_suite(double tolerance = 1e-4, const std::optional<std::string>& fault = {},
                                                     std::uint64_t seed = 0) {
  auto cases = gradcheck_cases(seed);
  if (fault) {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const auto& c) { return c.name == *fault; });
    if (it == cases.end()) throw ValidationError("gradcheck: no case named '" + *fault + "'");
    it->fn = [inner = it->fn](std::span<const num::Tensor<double>> in) { return detail::faulty_identity(inner(in)); };
  }
  std::vector<GradCheckRow> rows;
  for (auto& c : cases) {
    const auto report = num::grad_check<double>(c.fn, c.inputs, tolerance);
    rows.push_back({c.name, report.coordinates, report.max_rel_error, report.passed()});
  }
  return rows;
}

}  // namespace me2et
