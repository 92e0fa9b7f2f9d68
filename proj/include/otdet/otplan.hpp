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

// Entropic optimal transport between test features and label features.
//
// The regularized problem is
//
//   min_{P in U(mu, nu)}  <C, P> - (1 / epsilon) H(P),   H(P) = -sum P log P
//
// whose solution has the scaling form P = Diag(a) exp(-epsilon C) Diag(b).
// Larger epsilon therefore means a sharper plan. With epsilon = 90 and
// cosine costs in [0, 2] the kernel reaches exp(-180), so the solver works
// on log a and log b and never forms the kernel.

#ifndef OTDET_OTPLAN_HPP_
#define OTDET_OTPLAN_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "otdet/error.hpp"
#include "otdet/featstore.hpp"
#include "otdet/numeric.hpp"

namespace otdet {

// Probability vector with strictly positive entries.
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(std::vector<double> weights)
      : weights_(std::move(weights)) {
    if (weights_.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "measure has no support");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "measure weights must be finite and > 0");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument,
                  "measure weights sum to " + std::to_string(total));
    }
  }

  static DiscreteMeasure Uniform(std::size_t n) {
    if (n == 0) throw Error(ErrorCode::kInvalidArgument, "measure has no support");
    return DiscreteMeasure(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const noexcept { return weights_[i]; }

 private:
  std::vector<double> weights_;
};

enum class CostMetric { kCosine, kL2, kCustom };

inline const char* ToString(CostMetric m) {
  switch (m) {
    case CostMetric::kCosine: return "cosine";
    case CostMetric::kL2: return "l2";
    case CostMetric::kCustom: return "custom";
  }
  return "unknown";
}

// Dense rows x cols cost matrix in double precision.
class CostMatrix {
 public:
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
             CostMetric metric = CostMetric::kCustom)
      : rows_(rows), cols_(cols), values_(std::move(values)), metric_(metric) {
    if (rows_ == 0 || cols_ == 0 || values_.size() != rows_ * cols_) {
      throw Error(ErrorCode::kInvalidArgument, "cost matrix shape mismatch");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kInvalidArgument, "cost matrix has non-finite entry");
      }
      if (metric_ == CostMetric::kCosine && (v < 0.0 || v > 2.0)) {
        throw Error(ErrorCode::kInvariantViolation,
                    "cosine cost " + std::to_string(v) + " outside [0, 2]");
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  CostMetric metric() const noexcept { return metric_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return values_[i * cols_ + j];
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values_.data() + i * cols_, cols_};
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
  CostMetric metric_;
};

namespace detail {

inline void CheckSameDim(const FeatureMatrix& a, const FeatureMatrix& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature dim " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
  }
}

}  // namespace detail

// Cosine similarities test_i . text_j for unit-normalized rows.
inline std::vector<double> SimilarityMatrix(const FeatureMatrix& test,
                                            const FeatureMatrix& text) {
  detail::CheckSameDim(test, text);
  std::vector<double> sims(test.rows() * text.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    for (std::size_t j = 0; j < text.rows(); ++j) {
      sims[i * text.rows() + j] = Dot(test.row(i), text.row(j));
    }
  }
  return sims;
}

// C = 1 - test . text^T. Entries are clamped to [0, 2] to absorb the float32
// storage error in unit norms.
inline CostMatrix CosineCost(const FeatureMatrix& test, const FeatureMatrix& text) {
  auto values = SimilarityMatrix(test, text);
  for (double& v : values) v = std::clamp(1.0 - v, 0.0, 2.0);
  return CostMatrix(test.rows(), text.rows(), std::move(values),
                    CostMetric::kCosine);
}

// C_ij = ||test_i - text_j||_2.
inline CostMatrix L2Cost(const FeatureMatrix& test, const FeatureMatrix& text) {
  detail::CheckSameDim(test, text);
  std::vector<double> values(test.rows() * text.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    for (std::size_t j = 0; j < text.rows(); ++j) {
      double s = 0.0;
      auto a = test.row(i);
      auto b = text.row(j);
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        s += d * d;
      }
      values[i * text.rows() + j] = std::sqrt(s);
    }
  }
  return CostMatrix(test.rows(), text.rows(), std::move(values), CostMetric::kL2);
}

inline CostMatrix BuildCost(const FeatureMatrix& test, const FeatureMatrix& text,
                            CostMetric metric) {
  switch (metric) {
    case CostMetric::kCosine: return CosineCost(test, text);
    case CostMetric::kL2: return L2Cost(test, text);
    case CostMetric::kCustom: break;
  }
  throw Error(ErrorCode::kInvalidArgument, "no builder for custom cost metric");
}

// Optimal coupling together with the dual scalings that produced it.
class TransportPlan {
 public:
  TransportPlan(std::size_t rows, std::size_t cols, std::vector<double> coupling,
                double epsilon = 0.0, std::size_t iterations = 0,
                double marginal_error = 0.0, std::vector<double> log_a = {},
                std::vector<double> log_b = {})
      : rows_(rows),
        cols_(cols),
        coupling_(std::move(coupling)),
        epsilon_(epsilon),
        iterations_(iterations),
        marginal_error_(marginal_error),
        log_a_(std::move(log_a)),
        log_b_(std::move(log_b)) {
    if (rows_ == 0 || cols_ == 0 || coupling_.size() != rows_ * cols_) {
      throw Error(ErrorCode::kInvalidArgument, "transport plan shape mismatch");
    }
    for (double v : coupling_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::kInvariantViolation,
                    "transport plan entries must be finite and >= 0");
      }
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> coupling() const noexcept { return coupling_; }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return coupling_[i * cols_ + j];
  }
  std::span<const double> row(std::size_t i) const noexcept {
    return {coupling_.data() + i * cols_, cols_};
  }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t iterations() const noexcept { return iterations_; }
  double marginal_error() const noexcept { return marginal_error_; }
  std::span<const double> log_a() const noexcept { return log_a_; }
  std::span<const double> log_b() const noexcept { return log_b_; }

  std::vector<double> RowSums() const {
    std::vector<double> s(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (double v : row(i)) s[i] += v;
    }
    return s;
  }

  std::vector<double> ColSums() const {
    std::vector<double> s(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) s[j] += (*this)(i, j);
    }
    return s;
  }

  double TotalMass() const {
    double s = 0.0;
    for (double v : coupling_) s += v;
    return s;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> coupling_;
  double epsilon_;
  std::size_t iterations_;
  double marginal_error_;
  std::vector<double> log_a_;
  std::vector<double> log_b_;
};

// ||P 1 - mu||_1 and ||P^T 1 - nu||_1.
struct MarginalErrors {
  double rows = 0.0;
  double cols = 0.0;
  double total() const noexcept { return rows + cols; }
};

inline MarginalErrors ComputeMarginalErrors(const TransportPlan& plan,
                                            const DiscreteMeasure& mu,
                                            const DiscreteMeasure& nu) {
  MarginalErrors e;
  const auto rs = plan.RowSums();
  const auto cs = plan.ColSums();
  for (std::size_t i = 0; i < rs.size(); ++i) e.rows += std::abs(rs[i] - mu[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) e.cols += std::abs(cs[j] - nu[j]);
  return e;
}

struct SinkhornOptions {
  double epsilon = 90.0;
  double tol = 1e-6;
  std::size_t max_iter = 100000;
};

namespace detail {

// log sum_k exp(x_k - shift_k).
inline double LogSumExpDiff(std::span<const double> x,
                            std::span<const double> shift) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, x[k] - shift[k]);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += std::exp(x[k] - shift[k] - m);
  return m + std::log(s);
}

}  // namespace detail

// Log-domain Sinkhorn. Works on f = log a and g = log b so that
// P_ij = exp(f_i + g_j - epsilon C_ij). Alternates exact row and column
// projections; the column marginal is exact after every column update up to
// rounding, so convergence is judged on the L1 row-marginal error, which must
// drop below `tol` within `max_iter` projections.
inline TransportPlan Sinkhorn(const CostMatrix& cost, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu,
                              const SinkhornOptions& opts = {}) {
  if (!(opts.epsilon > 0.0) || !std::isfinite(opts.epsilon)) {
    throw Error(ErrorCode::kInvalidArgument,
                "epsilon must be > 0, got " + std::to_string(opts.epsilon));
  }
  if (!(opts.tol > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tolerance must be > 0");
  }
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (mu.size() != n || nu.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch,
                "cost is " + std::to_string(n) + "x" + std::to_string(m) +
                    " but measures have " + std::to_string(mu.size()) + " and " +
                    std::to_string(nu.size()) + " atoms");
  }

  std::vector<double> scaled(n * m);    // epsilon * C, row-major
  std::vector<double> scaled_t(m * n);  // its transpose
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = opts.epsilon * cost(i, j);
      scaled[i * m + j] = v;
      scaled_t[j * n + i] = v;
    }
  }
  std::vector<double> log_mu(n), log_nu(m);
  for (std::size_t i = 0; i < n; ++i) log_mu[i] = std::log(mu[i]);
  for (std::size_t j = 0; j < m; ++j) log_nu[j] = std::log(nu[j]);

  std::vector<double> f(n, 0.0), g(m, 0.0), lse(n);
  std::size_t iter = 0;
  double row_error = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (;; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      lse[i] = detail::LogSumExpDiff(g, {scaled.data() + i * m, m});
    }
    if (iter > 0) {
      row_error = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        row_error += std::abs(std::exp(f[i] + lse[i]) - mu[i]);
      }
      if (row_error < opts.tol) {
        converged = true;
        break;
      }
    }
    if (iter == opts.max_iter) break;
    for (std::size_t i = 0; i < n; ++i) f[i] = log_mu[i] - lse[i];
    for (std::size_t j = 0; j < m; ++j) {
      g[j] = log_nu[j] - detail::LogSumExpDiff(f, {scaled_t.data() + j * n, n});
    }
  }
  if (!converged) throw NonConvergenceError(row_error, iter);

  std::vector<double> coupling(n * m);
  double err = 0.0;
  std::vector<double> col_sums(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp(f[i] + g[j] - scaled[i * m + j]);
      coupling[i * m + j] = p;
      row_sum += p;
      col_sums[j] += p;
    }
    err += std::abs(row_sum - mu[i]);
  }
  for (std::size_t j = 0; j < m; ++j) err += std::abs(col_sums[j] - nu[j]);
  return TransportPlan(n, m, std::move(coupling), opts.epsilon, iter, err,
                       std::move(f), std::move(g));
}

namespace detail {

inline void CheckPlanCost(const TransportPlan& plan, const CostMatrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "plan " + std::to_string(plan.rows()) + "x" +
                    std::to_string(plan.cols()) + " vs cost " +
                    std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()));
  }
}

}  // namespace detail

// Per-row transported cost sum_j P_ij C_ij.
inline std::vector<double> PlanRowCosts(const TransportPlan& plan,
                                        const CostMatrix& cost) {
  detail::CheckPlanCost(plan, cost);
  std::vector<double> out(plan.rows(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    for (std::size_t j = 0; j < plan.cols(); ++j) out[i] += plan(i, j) * cost(i, j);
  }
  return out;
}

// Largest transport mass per row.
inline std::vector<double> PlanRowMax(const TransportPlan& plan) {
  std::vector<double> out(plan.rows());
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    auto r = plan.row(i);
    out[i] = *std::max_element(r.begin(), r.end());
  }
  return out;
}

// <C, P>.
inline double TransportCost(const TransportPlan& plan, const CostMatrix& cost) {
  detail::CheckPlanCost(plan, cost);
  double s = 0.0;
  for (std::size_t k = 0; k < plan.coupling().size(); ++k) {
    s += plan.coupling()[k] * cost.values()[k];
  }
  return s;
}

// <C, P> - H(P) / epsilon.
inline double EntropicObjective(const TransportPlan& plan, const CostMatrix& cost,
                                double epsilon) {
  double entropy = 0.0;
  for (double p : plan.coupling()) {
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return TransportCost(plan, cost) - entropy / epsilon;
}

}  // namespace otdet

#endif  // OTDET_OTPLAN_HPP_
