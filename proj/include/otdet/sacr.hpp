/*
 * Copyright 2026 The otdet Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Semantic-aware content refinement over precomputed view embeddings.
//
// For one sample: predict the label of the original image, keep the views
// whose own prediction agrees, rank the survivors by a confidence function,
// take the top k and fuse them into one unit vector weighted by each view's
// logit margin. Samples with no surviving view keep their original feature.

#ifndef OTDET_SACR_HPP_
#define OTDET_SACR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/numeric.hpp"
#include "otdet/parallel.hpp"

namespace otdet {

enum class ConfidenceFunction { kMaxMargin, kMinMargin, kMinEntropy };

inline const char* ToString(ConfidenceFunction c) {
  switch (c) {
    case ConfidenceFunction::kMaxMargin: return "max-margin";
    case ConfidenceFunction::kMinMargin: return "min-margin";
    case ConfidenceFunction::kMinEntropy: return "min-entropy";
  }
  return "unknown";
}

inline ConfidenceFunction ParseConfidenceFunction(std::string_view s) {
  if (s == "max-margin") return ConfidenceFunction::kMaxMargin;
  if (s == "min-margin") return ConfidenceFunction::kMinMargin;
  if (s == "min-entropy") return ConfidenceFunction::kMinEntropy;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown confidence function '" + std::string(s) + "'");
}

struct SacrConfig {
  std::size_t k = 20;
  ConfidenceFunction confidence = ConfidenceFunction::kMaxMargin;
  bool require_label_consistency = true;

  void Validate() const {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  }
};

// Largest minus second-largest logit. A single logit is its own margin.
inline double Margin(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::kInvalidArgument, "empty logits");
  if (logits.size() == 1) return logits[0];
  double first = std::max(logits[0], logits[1]);
  double second = std::min(logits[0], logits[1]);
  for (std::size_t j = 2; j < logits.size(); ++j) {
    if (logits[j] > first) {
      second = first;
      first = logits[j];
    } else if (logits[j] > second) {
      second = logits[j];
    }
  }
  return first - second;
}

// Shannon entropy of softmax(logits) at temperature 1.
inline double SoftmaxEntropy(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::kInvalidArgument, "empty logits");
  const double lse = LogSumExp(logits);
  double h = 0.0;
  for (double x : logits) {
    const double log_p = x - lse;
    h -= std::exp(log_p) * log_p;
  }
  return h;
}

// Ranking value for top-k selection; larger is preferred.
inline double Confidence(std::span<const double> logits, ConfidenceFunction fn) {
  switch (fn) {
    case ConfidenceFunction::kMaxMargin: return Margin(logits);
    case ConfidenceFunction::kMinMargin: return -Margin(logits);
    case ConfidenceFunction::kMinEntropy: return -SoftmaxEntropy(logits);
  }
  return 0.0;
}

struct SelectedView {
  std::size_t view = 0;     // index within the sample's bundle
  double confidence = 0.0;  // ranking value
  double weight = 0.0;      // fusion weight (the view's margin)
};

struct ViewDecision {
  std::string sample_id;
  std::size_t predicted_label = 0;
  std::vector<std::size_t> kept_views;
  std::vector<SelectedView> selected_views;
  bool fallback_used = false;
};

// One sample's original feature and its contiguous block of view features.
struct ViewBundle {
  std::span<const float> original;
  std::span<const float> views;  // count() * dim values, row-major
  std::size_t dim = 0;

  std::size_t count() const noexcept { return dim == 0 ? 0 : views.size() / dim; }
  std::span<const float> view(std::size_t v) const noexcept {
    return views.subspan(v * dim, dim);
  }
};

// Raw cosine similarities of `feature` against every label row.
inline std::vector<double> LabelLogits(std::span<const float> feature,
                                       const FeatureMatrix& text) {
  std::vector<double> logits(text.rows());
  for (std::size_t j = 0; j < text.rows(); ++j) logits[j] = Dot(feature, text.row(j));
  return logits;
}

// Label filtering and top-k selection for one bundle.
inline ViewDecision FilterViews(const ViewBundle& bundle, const FeatureMatrix& text,
                                const SacrConfig& cfg, std::string sample_id = {}) {
  cfg.Validate();
  if (bundle.dim != text.dim() || bundle.original.size() != text.dim() ||
      bundle.views.size() % text.dim() != 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                "view bundle dim does not match label dim " +
                    std::to_string(text.dim()));
  }
  if (bundle.count() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "view bundle has no views");
  }
  ViewDecision d;
  d.sample_id = std::move(sample_id);
  d.predicted_label = ArgMax(LabelLogits(bundle.original, text));

  struct Candidate {
    std::size_t view;
    double confidence;
    double margin;
  };
  std::vector<Candidate> kept;
  for (std::size_t v = 0; v < bundle.count(); ++v) {
    const auto logits = LabelLogits(bundle.view(v), text);
    if (cfg.require_label_consistency && ArgMax(logits) != d.predicted_label) {
      continue;
    }
    d.kept_views.push_back(v);
    kept.push_back({v, Confidence(logits, cfg.confidence), Margin(logits)});
  }
  if (kept.empty()) {
    d.fallback_used = true;
    return d;
  }
  const std::size_t take = std::min(cfg.k, kept.size());
  std::partial_sort(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(take),
                    kept.end(), [](const Candidate& a, const Candidate& b) {
                      if (a.confidence != b.confidence) return a.confidence > b.confidence;
                      return a.view < b.view;
                    });
  for (std::size_t s = 0; s < take; ++s) {
    d.selected_views.push_back({kept[s].view, kept[s].confidence, kept[s].margin});
  }
  return d;
}

// normalize(sum_j weights_j * features_j).
inline std::vector<float> Fuse(std::span<const std::span<const float>> features,
                               std::span<const double> weights) {
  if (features.empty() || features.size() != weights.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "fusion needs one weight per selected view");
  }
  const std::size_t dim = features.front().size();
  bool any_positive = false;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "fusion weights must be finite and >= 0");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) {
    throw Error(ErrorCode::kDegenerate, "all fusion weights are zero");
  }
  std::vector<double> acc(dim, 0.0);
  for (std::size_t s = 0; s < features.size(); ++s) {
    if (features[s].size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "selected views differ in dim");
    }
    for (std::size_t c = 0; c < dim; ++c) acc[c] += weights[s] * features[s][c];
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error(ErrorCode::kDegenerate, "fused feature has zero norm");
  std::vector<float> out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(acc[c] / norm);
  return out;
}

struct RefineResult {
  FeatureMatrix refined;
  std::vector<ViewDecision> decisions;
};

// Refines every manifest sample. `originals` holds the original-image rows
// the manifest's original_row indexes; when absent those rows are looked up
// in `views`.
inline RefineResult RefineAll(const FeatureMatrix& views,
                              const ViewBundleManifest& manifest,
                              const FeatureMatrix& text, const SacrConfig& cfg,
                              const FeatureMatrix* originals = nullptr) {
  cfg.Validate();
  const FeatureMatrix& source = originals ? *originals : views;
  if (views.dim() != text.dim() || source.dim() != text.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "views/originals/labels must share one dim");
  }
  if (manifest.samples.empty()) {
    throw Error(ErrorCode::kManifest, "manifest lists no samples");
  }
  manifest.Validate(views.rows(), source.rows());

  const std::size_t dim = text.dim();
  const std::size_t n = manifest.samples.size();
  std::vector<float> refined(n * dim);
  std::vector<ViewDecision> decisions(n);
  ParallelFor(n, [&](std::size_t s) {
    const auto& entry = manifest.samples[s];
    ViewBundle bundle{source.row(entry.original_row),
                      views.data().subspan(entry.view_start * dim, entry.size() * dim),
                      dim};
    decisions[s] = FilterViews(bundle, text, cfg, entry.id);
    const auto& d = decisions[s];
    float* dst = refined.data() + s * dim;
    if (d.fallback_used) {
      std::copy(bundle.original.begin(), bundle.original.end(), dst);
      return;
    }
    std::vector<std::span<const float>> feats;
    std::vector<double> weights;
    for (const auto& sel : d.selected_views) {
      feats.push_back(bundle.view(sel.view));
      weights.push_back(sel.weight);
    }
    try {
      const auto fused = Fuse(feats, weights);
      std::copy(fused.begin(), fused.end(), dst);
    } catch (const Error& e) {
      throw Error(e.code(), "sample '" + entry.id + "': " + e.what());
    }
  });
  return {FeatureMatrix(n, dim, std::move(refined), source.normalized()),
          std::move(decisions)};
}

// One JSON object per line: id, predicted label, kept count, selected
// bundle-local view indices, fallback flag.
inline std::string DecisionsToJsonl(std::span<const ViewDecision> decisions) {
  std::string out;
  for (const auto& d : decisions) {
    nlohmann::ordered_json j;
    j["id"] = d.sample_id;
    j["predicted_label"] = d.predicted_label;
    j["kept"] = d.kept_views.size();
    auto sel = nlohmann::ordered_json::array();
    for (const auto& s : d.selected_views) sel.push_back(s.view);
    j["selected"] = std::move(sel);
    j["fallback"] = d.fallback_used;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace otdet

#endif  // OTDET_SACR_HPP_
