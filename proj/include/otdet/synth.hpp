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

// Seeded synthetic embeddings: label directions on the unit sphere, ID
// samples clustered around them, OOD samples clustered around centres kept
// at a minimum angle from every label, and optional per-sample view bundles.

#ifndef OTDET_SYNTH_HPP_
#define OTDET_SYNTH_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/numeric.hpp"

namespace otdet {

struct SyntheticSpec {
  std::size_t n_labels = 10;
  std::size_t n_id = 500;
  std::size_t n_ood = 500;
  std::size_t dim = 64;
  double noise_sigma = 0.1;
  double ood_offset = 1.2;  // radians
  std::size_t ood_clusters = 10;
  std::uint64_t seed = 0;
  // View bundles are generated when n_views > 0.
  std::size_t n_views = 0;
  double view_sigma = 0.1;
  double distractor_fraction = 0.25;
  double distractor_pull = 1.0;

  void Validate() const {
    if (n_labels == 0 || n_id == 0 || n_ood == 0 || ood_clusters == 0) {
      throw Error(ErrorCode::kInvalidArgument, "synthetic counts must be >= 1");
    }
    if (dim < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic dim must be >= 2");
    if (!(noise_sigma >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
    }
    if (!(ood_offset >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "ood offset must be >= 0");
    }
    if (n_views > 0 && (!(view_sigma >= 0.0) || !(distractor_fraction >= 0.0) ||
                        distractor_fraction > 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid view settings");
    }
  }
};

struct SyntheticViews {
  FeatureMatrix views;
  ViewBundleManifest manifest;
};

struct SyntheticData {
  FeatureMatrix text;
  FeatureMatrix id;
  FeatureMatrix ood;
  std::vector<std::size_t> id_labels;
  std::vector<std::string> label_names;
  std::vector<std::string> id_ids;
  std::vector<std::string> ood_ids;
  std::optional<SyntheticViews> id_views;
  std::optional<SyntheticViews> ood_views;
};

inline constexpr std::size_t kMaxRejectionAttempts = 10000;

namespace detail {

class SphereSampler {
 public:
  SphereSampler(std::uint64_t seed, std::size_t dim) : rng_(seed), dim_(dim) {}

  std::vector<double> Gaussian() {
    std::vector<double> v(dim_);
    for (double& x : v) x = normal_(rng_);
    return v;
  }

  std::vector<double> Direction() {
    for (;;) {
      auto v = Gaussian();
      if (Normalize(v)) return v;
    }
  }

  // normalize(base + sigma * gaussian)
  std::vector<double> Around(const std::vector<double>& base, double sigma) {
    for (;;) {
      auto g = Gaussian();
      for (std::size_t c = 0; c < dim_; ++c) g[c] = base[c] + sigma * g[c];
      if (Normalize(g)) return g;
    }
  }

  std::mt19937_64& rng() { return rng_; }

  static bool Normalize(std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    if (s == 0.0) return false;
    for (double& x : v) x /= s;
    return true;
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::size_t dim_;
};

inline double Angle(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) d += a[c] * b[c];
  return std::acos(std::clamp(d, -1.0, 1.0));
}

inline FeatureMatrix ToMatrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t dim = rows.front().size();
  std::vector<float> data;
  data.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    for (double x : r) data.push_back(static_cast<float>(x));
  }
  return L2Normalize(FeatureMatrix(rows.size(), dim, std::move(data), false));
}

inline std::string PaddedId(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + "_" + digits;
}

inline SyntheticViews MakeViews(SphereSampler& sampler,
                                const std::vector<std::vector<double>>& samples,
                                const std::vector<std::vector<double>>& labels,
                                const std::vector<std::size_t>& anchor_label,
                                const std::vector<std::string>& ids,
                                const SyntheticSpec& spec) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size() * spec.n_views);
  ViewBundleManifest manifest;
  manifest.n_views = spec.n_views;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const std::size_t start = rows.size();
    for (std::size_t v = 0; v < spec.n_views; ++v) {
      auto base = samples[s];
      if (labels.size() > 1 && unit(sampler.rng()) < spec.distractor_fraction) {
        std::size_t wrong = pick(sampler.rng());
        while (wrong == anchor_label[s]) wrong = pick(sampler.rng());
        for (std::size_t c = 0; c < base.size(); ++c) {
          base[c] += spec.distractor_pull * labels[wrong][c];
        }
      }
      rows.push_back(sampler.Around(base, spec.view_sigma));
    }
    manifest.samples.push_back({ids[s], s, start, rows.size()});
  }
  return {ToMatrix(rows), std::move(manifest)};
}

inline std::size_t Nearest(const std::vector<double>& x,
                           const std::vector<std::vector<double>>& labels) {
  std::vector<double> sims(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) d += x[c] * labels[j][c];
    sims[j] = d;
  }
  return ArgMax(sims);
}

}  // namespace detail

inline SyntheticData GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  detail::SphereSampler sampler(spec.seed, spec.dim);

  std::vector<std::vector<double>> labels;
  for (std::size_t j = 0; j < spec.n_labels; ++j) labels.push_back(sampler.Direction());

  std::vector<std::vector<double>> centres;
  for (std::size_t c = 0; c < spec.ood_clusters; ++c) {
    std::size_t attempts = 0;
    for (;;) {
      if (++attempts > kMaxRejectionAttempts) {
        throw Error(ErrorCode::kInvalidArgument,
                    "could not place an OOD centre " + std::to_string(spec.ood_offset) +
                        " rad from every label in " +
                        std::to_string(kMaxRejectionAttempts) + " attempts");
      }
      auto centre = sampler.Direction();
      bool far = true;
      for (const auto& l : labels) far = far && detail::Angle(centre, l) > spec.ood_offset;
      if (far) {
        centres.push_back(std::move(centre));
        break;
      }
    }
  }

  std::uniform_int_distribution<std::size_t> pick_label(0, spec.n_labels - 1);
  std::uniform_int_distribution<std::size_t> pick_centre(0, spec.ood_clusters - 1);
  std::vector<std::vector<double>> id_rows, ood_rows;
  std::vector<std::size_t> id_labels;
  for (std::size_t i = 0; i < spec.n_id; ++i) {
    const std::size_t c = pick_label(sampler.rng());
    id_labels.push_back(c);
    id_rows.push_back(sampler.Around(labels[c], spec.noise_sigma));
  }
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    const std::size_t c = pick_centre(sampler.rng());
    ood_rows.push_back(sampler.Around(centres[c], spec.noise_sigma));
  }

  SyntheticData out{detail::ToMatrix(labels), detail::ToMatrix(id_rows),
                    detail::ToMatrix(ood_rows), id_labels, {}, {}, {}, {}, {}};
  for (std::size_t j = 0; j < spec.n_labels; ++j) {
    out.label_names.push_back(detail::PaddedId("label", j));
  }
  for (std::size_t i = 0; i < spec.n_id; ++i) out.id_ids.push_back(detail::PaddedId("id", i));
  for (std::size_t i = 0; i < spec.n_ood; ++i) {
    out.ood_ids.push_back(detail::PaddedId("ood", i));
  }

  if (spec.n_views > 0) {
    // Distractors pull toward a label other than the sample's own nearest one.
    std::vector<std::size_t> ood_anchor;
    for (const auto& r : ood_rows) ood_anchor.push_back(detail::Nearest(r, labels));
    std::vector<std::size_t> id_anchor;
    for (const auto& r : id_rows) id_anchor.push_back(detail::Nearest(r, labels));
    out.id_views = detail::MakeViews(sampler, id_rows, labels, id_anchor, out.id_ids, spec);
    out.ood_views =
        detail::MakeViews(sampler, ood_rows, labels, ood_anchor, out.ood_ids, spec);
  }
  return out;
}

}  // namespace otdet

#endif  // OTDET_SYNTH_HPP_
