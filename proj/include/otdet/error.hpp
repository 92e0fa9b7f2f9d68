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

#ifndef OTDET_ERROR_HPP_
#define OTDET_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace otdet {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kInvariantViolation,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kUnsupportedDtype,
  kTruncated,
  kZeroNorm,
  kManifest,
  kNonConvergence,
  kDegenerate,
};

inline const char* ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kInvariantViolation: return "invariant violation";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported version";
    case ErrorCode::kUnsupportedDtype: return "unsupported dtype";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kZeroNorm: return "zero-norm row";
    case ErrorCode::kManifest: return "manifest error";
    case ErrorCode::kNonConvergence: return "non-convergence";
    case ErrorCode::kDegenerate: return "degenerate input";
  }
  return "unknown";
}

// Base error for the whole library. The code lets callers (the CLI) map
// failures onto exit statuses without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ToString(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a zero-norm row is met; carries the offending row.
class ZeroNormError : public Error {
 public:
  explicit ZeroNormError(std::size_t row)
      : Error(ErrorCode::kZeroNorm, "row " + std::to_string(row)), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Sinkhorn did not reach the requested marginal tolerance.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(double marginal_error, std::size_t iterations,
                      const std::string& context = {})
      : Error(ErrorCode::kNonConvergence,
              (context.empty() ? std::string() : context + ": ") +
                  "marginal error " + std::to_string(marginal_error) +
                  " after " + std::to_string(iterations) + " iterations"),
        marginal_error_(marginal_error),
        iterations_(iterations) {}

  double marginal_error() const noexcept { return marginal_error_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double marginal_error_;
  std::size_t iterations_;
};

}  // namespace otdet

#endif  // OTDET_ERROR_HPP_
