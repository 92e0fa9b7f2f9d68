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

// Detection metrics over ID/OOD score vectors (higher score = more ID):
// FPR at a target TPR, AUROC, and binned score densities.

#ifndef OTDET_METRICS_HPP_
#define OTDET_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "otdet/error.hpp"

namespace otdet {

namespace detail {

inline void CheckScores(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "ID and OOD score sets must be nonempty");
  }
  for (auto set : {id, ood}) {
    for (double v : set) {
      if (std::isnan(v)) throw Error(ErrorCode::kInvalidArgument, "NaN score");
    }
  }
}

}  // namespace detail

struct ThresholdResult {
  double fpr = 0.0;
  double threshold = 0.0;
};

// lambda is the largest score with |{id >= lambda}| / n_id >= tpr_target;
// fpr = |{ood >= lambda}| / n_ood. No interpolation between scores.
inline ThresholdResult FprAtTpr(std::span<const double> id_scores,
                                std::span<const double> ood_scores,
                                double tpr_target = 0.95) {
  detail::CheckScores(id_scores, ood_scores);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "TPR target must lie in (0, 1]");
  }
  std::vector<double> id(id_scores.begin(), id_scores.end());
  std::sort(id.begin(), id.end(), std::greater<>());
  const double n_id = static_cast<double>(id.size());
  double lambda = id.back();
  for (std::size_t i = 0; i < id.size();) {
    std::size_t j = i;
    while (j < id.size() && id[j] == id[i]) ++j;
    if (static_cast<double>(j) / n_id >= tpr_target) {
      lambda = id[i];
      break;
    }
    i = j;
  }
  std::size_t false_pos = 0;
  for (double v : ood_scores) false_pos += v >= lambda ? 1 : 0;
  return {static_cast<double>(false_pos) / static_cast<double>(ood_scores.size()),
          lambda};
}

// Mann-Whitney pair counts in half units: twice_wins = 2 * #(id > ood) +
// #(id == ood). AUROC = twice_wins / (2 * pairs).
struct PairCounts {
  std::uint64_t twice_wins = 0;
  std::uint64_t pairs = 0;
  double auroc() const noexcept {
    return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pairs));
  }
};

inline PairCounts AurocPairCounts(std::span<const double> id_scores,
                                  std::span<const double> ood_scores) {
  detail::CheckScores(id_scores, ood_scores);
  std::vector<double> ood(ood_scores.begin(), ood_scores.end());
  std::sort(ood.begin(), ood.end());
  PairCounts c;
  c.pairs = static_cast<std::uint64_t>(id_scores.size()) * ood.size();
  for (double v : id_scores) {
    const auto lo = std::lower_bound(ood.begin(), ood.end(), v);
    const auto hi = std::upper_bound(lo, ood.end(), v);
    c.twice_wins += 2 * static_cast<std::uint64_t>(lo - ood.begin()) +
                    static_cast<std::uint64_t>(hi - lo);
  }
  return c;
}

inline double Auroc(std::span<const double> id_scores,
                    std::span<const double> ood_scores) {
  return AurocPairCounts(id_scores, ood_scores).auroc();
}

struct DetectionReport {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double threshold = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

inline DetectionReport Evaluate(std::span<const double> id_scores,
                                std::span<const double> ood_scores,
                                double tpr_target = 0.95) {
  const auto t = FprAtTpr(id_scores, ood_scores, tpr_target);
  return {t.fpr, Auroc(id_scores, ood_scores), t.threshold, id_scores.size(),
          ood_scores.size()};
}

struct DensityExport {
  std::vector<double> bin_edges;  // bins + 1 values
  std::vector<std::size_t> id_counts;
  std::vector<std::size_t> ood_counts;
};

inline constexpr std::size_t kDefaultDensityBins = 50;

// Equal-width histogram over [min, max] of both sets. Bins are half-open
// except the last, which also holds the maximum. A zero-width range yields
// one bin of width 1 centred on the common value.
inline DensityExport Density(std::span<const double> id_scores,
                             std::span<const double> ood_scores,
                             std::size_t bins = kDefaultDensityBins) {
  detail::CheckScores(id_scores, ood_scores);
  if (bins == 0) throw Error(ErrorCode::kInvalidArgument, "bins must be >= 1");
  double lo = id_scores[0];
  double hi = id_scores[0];
  for (auto set : {id_scores, ood_scores}) {
    for (double v : set) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  DensityExport d;
  if (lo == hi) {
    d.bin_edges = {lo - 0.5, lo + 0.5};
  } else {
    const double width = (hi - lo) / static_cast<double>(bins);
    d.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b < bins; ++b) {
      d.bin_edges[b] = lo + static_cast<double>(b) * width;
    }
    d.bin_edges[bins] = hi;
  }
  const std::size_t n_bins = d.bin_edges.size() - 1;
  d.id_counts.assign(n_bins, 0);
  d.ood_counts.assign(n_bins, 0);
  auto bin_of = [&](double v) {
    const auto it = std::upper_bound(d.bin_edges.begin(), d.bin_edges.end(), v);
    const auto idx = static_cast<std::size_t>(it - d.bin_edges.begin());
    return std::min(idx == 0 ? 0 : idx - 1, n_bins - 1);
  };
  for (double v : id_scores) ++d.id_counts[bin_of(v)];
  for (double v : ood_scores) ++d.ood_counts[bin_of(v)];
  return d;
}

}  // namespace otdet

#endif  // OTDET_METRICS_HPP_
