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

// Per-sample OOD scores derived from an entropic transport plan between a
// batch of test features and the ID label features, plus the MCM baseline
// and the threshold classifier.

#ifndef OTDET_SCORING_HPP_
#define OTDET_SCORING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/numeric.hpp"
#include "otdet/otplan.hpp"
#include "otdet/parallel.hpp"

namespace otdet {

struct ScoreRecord {
  std::string sample_id;
  double s_sem = 0.0;
  double s_dist = 0.0;
  double s_ot = 0.0;
  std::optional<double> s_mcm;
  std::size_t predicted_label = 0;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct ScoreConfig {
  double alpha = 0.5;
  double epsilon = 90.0;
  std::optional<std::size_t> batch_size;  // nullopt: one batch of everything
  double baseline_tau = 1.0;
  bool compute_mcm = false;
  CostMetric metric = CostMetric::kCosine;
  double tol = 1e-6;
  std::size_t max_iter = 100000;
  // When set, rows are assigned to batches after a seeded shuffle; records
  // still come back in input order.
  std::optional<std::uint64_t> shuffle_seed;

  void Validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (!(epsilon > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "epsilon must be > 0");
    }
    if (batch_size && *batch_size == 0) {
      throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 1");
    }
    if (!(baseline_tau > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "tau must be > 0");
    }
  }
};

// S_sem(x_i) = max_j P_ij.
inline std::vector<double> SemanticScore(const TransportPlan& plan) {
  return PlanRowMax(plan);
}

// S_dist(x_i) = 1 - sum_j P_ij C_ij.
inline std::vector<double> DistributionScore(const TransportPlan& plan,
                                             const CostMatrix& cost) {
  auto out = PlanRowCosts(plan, cost);
  for (double& v : out) v = 1.0 - v;
  return out;
}

inline std::vector<double> CombinedScore(std::span<const double> s_sem,
                                         std::span<const double> s_dist,
                                         double alpha) {
  if (s_sem.size() != s_dist.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "score vectors have lengths " + std::to_string(s_sem.size()) +
                    " and " + std::to_string(s_dist.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  std::vector<double> out(s_sem.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = alpha * s_sem[i] + (1.0 - alpha) * s_dist[i];
  }
  return out;
}

// Maximum softmax probability over cos(f, t_j) / tau.
inline std::vector<double> McmScore(const FeatureMatrix& test,
                                    const FeatureMatrix& text, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tau must be > 0");
  const auto sims = SimilarityMatrix(test, text);
  const std::size_t k = text.rows();
  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    std::span<const double> row(sims.data() + i * k, k);
    const double top = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double s : row) z += std::exp((s - top) / tau);
    out[i] = 1.0 / z;
  }
  return out;
}

// Zero-shot label: the most similar label row, lowest index on ties.
inline std::vector<std::size_t> PredictLabels(const FeatureMatrix& test,
                                              const FeatureMatrix& text) {
  const auto sims = SimilarityMatrix(test, text);
  const std::size_t k = text.rows();
  std::vector<std::size_t> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    out[i] = ArgMax({sims.data() + i * k, k});
  }
  return out;
}

enum class Verdict { kId, kOod };

// ID iff score >= lambda.
inline std::vector<Verdict> Classify(std::span<const double> scores, double lambda) {
  std::vector<Verdict> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= lambda ? Verdict::kId : Verdict::kOod);
  return out;
}

// Row order used to cut batches: identity, or a seeded permutation.
inline std::vector<std::size_t> BatchOrder(std::size_t n,
                                           std::optional<std::uint64_t> seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

// Scores every test row. Rows are cut into consecutive batches (the last may
// be short); each batch is its own transport problem with uniform measures,
// so the scores depend on the batch a row lands in.
inline std::vector<ScoreRecord> ScorePipeline(const FeatureMatrix& test,
                                              const FeatureMatrix& text,
                                              const ScoreConfig& cfg,
                                              std::span<const std::string> ids = {}) {
  cfg.Validate();
  if (test.dim() != text.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "test dim " + std::to_string(test.dim()) + " vs label dim " +
                    std::to_string(text.dim()));
  }
  if (!ids.empty() && ids.size() != test.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "one sample id per test row required");
  }
  const std::size_t n = test.rows();
  const std::size_t batch = cfg.batch_size ? std::min(*cfg.batch_size, n) : n;
  const std::size_t n_batches = (n + batch - 1) / batch;
  const auto order = BatchOrder(n, cfg.shuffle_seed);

  std::vector<ScoreRecord> records(n);
  const auto labels = PredictLabels(test, text);
  std::vector<double> mcm;
  if (cfg.compute_mcm) mcm = McmScore(test, text, cfg.baseline_tau);
  for (std::size_t i = 0; i < n; ++i) {
    records[i].sample_id = ids.empty() ? std::to_string(i) : ids[i];
    records[i].predicted_label = labels[i];
    if (cfg.compute_mcm) records[i].s_mcm = mcm[i];
  }

  const auto nu = DiscreteMeasure::Uniform(text.rows());
  ParallelFor(n_batches, [&](std::size_t b) {
    const std::size_t lo = b * batch;
    const std::size_t hi = std::min(n, lo + batch);
    std::span<const std::size_t> rows(order.data() + lo, hi - lo);
    const auto sub = SelectRows(test, rows);
    const auto cost = BuildCost(sub, text, cfg.metric);
    const auto mu = DiscreteMeasure::Uniform(rows.size());
    TransportPlan plan = [&] {
      try {
        return Sinkhorn(cost, mu, nu, {cfg.epsilon, cfg.tol, cfg.max_iter});
      } catch (const NonConvergenceError& e) {
        throw NonConvergenceError(e.marginal_error(), e.iterations(),
                                  "batch " + std::to_string(b));
      }
    }();
    const auto sem = SemanticScore(plan);
    const auto dist = DistributionScore(plan, cost);
    const auto ot = CombinedScore(sem, dist, cfg.alpha);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto& rec = records[rows[r]];
      rec.s_sem = sem[r];
      rec.s_dist = dist[r];
      rec.s_ot = ot[r];
    }
  });
  return records;
}

// Re-mixes stored semantic and distribution scores at a new alpha without
// re-solving.
inline std::vector<ScoreRecord> Reweight(std::vector<ScoreRecord> records,
                                         double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  for (auto& r : records) r.s_ot = alpha * r.s_sem + (1.0 - alpha) * r.s_dist;
  return records;
}

}  // namespace otdet

#endif  // OTDET_SCORING_HPP_
