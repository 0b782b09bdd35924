#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "me2et/numerics/ops.hpp"
#include "me2et/rng.hpp"
#include "me2et/types.hpp"

namespace me2et {

// Per-modality heads, tri-modal fusion layer and decision fusion. Without
// feature fusion the decision layer combines three heads instead of four.
template <class T>
struct FusionParams {
  std::optional<num::Tensor<T>> w_fusion;  // 3d x C
  std::optional<num::Tensor<T>> b_fusion;  // C
  num::Tensor<T> w_v, b_v;                 // d x C, C
  num::Tensor<T> w_a, b_a;
  num::Tensor<T> w_l, b_l;
  num::Tensor<T> w_decision;  // heads x 1

  // Head matrices are N(0, 0.02) unless zero_heads; the decision layer starts
  // as a plain average of the heads.
  static FusionParams init(std::size_t d, std::size_t classes, bool feature_fusion, bool zero_heads, Rng& rng) {
    if (classes < 2) throw ValidationError("fusion: at least 2 classes required");
    auto matrix = [&](std::size_t rows) {
      auto t = zero_heads ? num::Tensor<T>::zeros({rows, classes}) : normal_tensor<T>({rows, classes}, 0.02, rng);
      return t.set_requires_grad();
    };
    auto bias = [&] { return num::Tensor<T>::zeros({classes}).set_requires_grad(); };
    FusionParams p;
    if (feature_fusion) {
      p.w_fusion = matrix(3 * d);
      p.b_fusion = bias();
    }
    p.w_v = matrix(d);
    p.b_v = bias();
    p.w_a = matrix(d);
    p.b_a = bias();
    p.w_l = matrix(d);
    p.b_l = bias();
    const std::size_t heads = feature_fusion ? 4 : 3;
    p.w_decision = num::Tensor<T>::filled({heads, 1}, T(1) / T(heads)).set_requires_grad();
    return p;
  }

  bool feature_fusion() const { return w_fusion.has_value(); }
  std::size_t classes() const { return w_v.cols(); }
  std::size_t width() const { return w_v.rows(); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    if (w_fusion) {
      out.push_back({prefix + ".w_fusion", *w_fusion});
      out.push_back({prefix + ".b_fusion", *b_fusion});
    }
    out.push_back({prefix + ".w_v", w_v});
    out.push_back({prefix + ".b_v", b_v});
    out.push_back({prefix + ".w_a", w_a});
    out.push_back({prefix + ".b_a", b_a});
    out.push_back({prefix + ".w_l", w_l});
    out.push_back({prefix + ".b_l", b_l});
    out.push_back({prefix + ".w_decision", w_decision});
  }
};

// All logits are 1 x C rows. p_fusion is undefined without feature fusion.
template <class T>
struct Predictions {
  num::Tensor<T> p_v, p_a, p_l, p_fusion;
  num::Tensor<T> p;
};

template <class T>
Predictions<T> fuse(const SummaryVector<T>& v, const SummaryVector<T>& a, const SummaryVector<T>& v_l,
                    const FusionParams<T>& params) {
  const std::size_t d = params.width(), c = params.classes();
  for (const auto* s : {&v, &a, &v_l}) {
    if (s->size() != d) {
      throw ValidationError("fuse: " + std::string(to_string(s->modality)) + " summary has length " +
                            std::to_string(s->size()) + ", heads expect " + std::to_string(d));
    }
  }
  Predictions<T> out;
  out.p_v = num::add_bias(num::matmul(v.values, params.w_v), params.b_v);
  out.p_a = num::add_bias(num::matmul(a.values, params.w_a), params.b_a);
  out.p_l = num::add_bias(num::matmul(v_l.values, params.w_l), params.b_l);
  std::vector<num::Tensor<T>> stacked{out.p_v, out.p_a, out.p_l};
  if (params.feature_fusion()) {
    auto joint = num::concat_cols<T>({v.values, a.values, v_l.values});
    out.p_fusion = num::add_bias(num::matmul(joint, *params.w_fusion), *params.b_fusion);
    stacked.push_back(out.p_fusion);
  }
  // ([p_v; p_a; p_l; p_fusion]^T W_decision)^T
  auto decision = num::matmul(num::transpose(num::concat_rows(stacked)), params.w_decision);
  out.p = num::reshape(decision, {1, c});
  return out;
}

// label_c = 1 iff sigmoid(p_c) >= threshold (ties are positive).
template <class T>
std::vector<int> predict_labels(std::span<const T> logits, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("predict_labels: threshold must lie in (0, 1)");
  std::vector<int> out;
  out.reserve(logits.size());
  for (auto z : logits) out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(z))) >= threshold ? 1 : 0);
  return out;
}

struct ClassMetrics {
  double accuracy = 0;
  double weighted_accuracy = 0;
  double f1 = 0;
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics average;
};

using LabelMatrix = std::vector<std::vector<int>>;

// Per-class binary accuracy, balanced accuracy (TP/P + TN/N)/2 and F1, plus
// macro averages. When a class has no positives (or no negatives) its
// balanced accuracy uses the one defined rate alone. F1 with no predicted
// and no actual positives is 0.
inline MetricsReport metrics(const LabelMatrix& preds, const LabelMatrix& targets) {
  if (preds.size() != targets.size()) throw ValidationError("metrics: prediction and target sample counts differ");
  MetricsReport report;
  if (preds.empty()) return report;
  const std::size_t classes = targets.front().size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != classes || targets[i].size() != classes) {
      throw ValidationError("metrics: sample " + std::to_string(i) + " has the wrong class count");
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const int p = preds[i][c], t = targets[i][c];
      if ((p != 0 && p != 1) || (t != 0 && t != 1)) throw ValidationError("metrics: labels must be binary");
      if (p && t) ++tp;
      else if (!p && !t) ++tn;
      else if (p) ++fp;
      else ++fn;
    }
    ClassMetrics m;
    m.accuracy = (tp + tn) / static_cast<double>(preds.size());
    const double pos = tp + fn, neg = tn + fp;
    if (pos > 0 && neg > 0) m.weighted_accuracy = (tp / pos + tn / neg) / 2.0;
    else m.weighted_accuracy = pos > 0 ? tp / pos : tn / neg;
    const double denom = 2 * tp + fp + fn;
    m.f1 = denom > 0 ? 2 * tp / denom : 0.0;
    report.per_class.push_back(m);
    report.average.accuracy += m.accuracy / static_cast<double>(classes);
    report.average.weighted_accuracy += m.weighted_accuracy / static_cast<double>(classes);
    report.average.f1 += m.f1 / static_cast<double>(classes);
  }
  return report;
}

inline std::string metrics_csv(const MetricsReport& report) {
  auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return std::string(buf);
  };
  std::string out = "class,accuracy,weighted_accuracy,f1\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    out += std::to_string(c) + "," + fmt(m.accuracy) + "," + fmt(m.weighted_accuracy) + "," + fmt(m.f1) + "\n";
  }
  out += "average," + fmt(report.average.accuracy) + "," + fmt(report.average.weighted_accuracy) + "," +
         fmt(report.average.f1) + "\n";
  return out;
}

}  // namespace me2et
