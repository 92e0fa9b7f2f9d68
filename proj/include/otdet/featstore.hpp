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

// Embedding storage: feature matrices, label vocabularies and view-bundle
// manifests, plus the OTDF binary format and its text sidecars.
//
// OTDF layout (little-endian):
//   [0, 4)    magic "OTDF"
//   [4, 8)    version, u32 = 1
//   [8, 16)   rows, u64
//   [16, 24)  dim, u64
//   [24]      dtype code, 1 = float32
//   [25, 31)  reserved, zero
//   [31, ...) rows * dim float32 values, row-major

#ifndef OTDET_FEATSTORE_HPP_
#define OTDET_FEATSTORE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "otdet/error.hpp"

namespace otdet {

inline constexpr std::array<char, 4> kOtdfMagic = {'O', 'T', 'D', 'F'};
inline constexpr std::uint32_t kOtdfVersion = 1;
inline constexpr std::uint8_t kOtdfDtypeFloat32 = 1;
inline constexpr std::size_t kOtdfHeaderSize = 31;
inline constexpr double kUnitNormTolerance = 1e-4;

// Immutable rows x dim matrix of float32 embeddings.
class FeatureMatrix {
 public:
  // Validates shape and finiteness. When `normalized` is set every row must
  // have unit L2 norm within kUnitNormTolerance.
  FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data,
                bool normalized)
      : rows_(rows), dim_(dim), data_(std::move(data)), normalized_(normalized) {
    if (rows_ == 0 || dim_ == 0) {
      throw Error(ErrorCode::kInvariantViolation,
                  "feature matrix needs rows >= 1 and dim >= 1");
    }
    if (data_.size() != rows_ * dim_) {
      throw Error(ErrorCode::kInvariantViolation,
                  "payload holds " + std::to_string(data_.size()) +
                      " values, expected " + std::to_string(rows_ * dim_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw Error(ErrorCode::kInvariantViolation,
                    "non-finite entry at row " + std::to_string(i / dim_) +
                        ", col " + std::to_string(i % dim_));
      }
    }
    if (normalized_) {
      for (std::size_t r = 0; r < rows_; ++r) {
        const double n = RowNorm(r);
        if (std::abs(n - 1.0) > kUnitNormTolerance) {
          throw Error(ErrorCode::kInvariantViolation,
                      "row " + std::to_string(r) + " has norm " +
                          std::to_string(n) + " but matrix is flagged normalized");
        }
      }
    }
  }

  // Builds a matrix and flags it normalized iff every row is unit-norm.
  static FeatureMatrix Detect(std::size_t rows, std::size_t dim,
                              std::vector<float> data) {
    FeatureMatrix m(rows, dim, std::move(data), false);
    m.normalized_ = m.AllRowsUnit();
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * dim_, dim_};
  }
  float at(std::size_t r, std::size_t c) const noexcept {
    return data_[r * dim_ + c];
  }

  double RowNorm(std::size_t r) const noexcept {
    double s = 0.0;
    for (float v : row(r)) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }

  bool AllRowsUnit() const noexcept {
    for (std::size_t r = 0; r < rows_; ++r) {
      if (std::abs(RowNorm(r) - 1.0) > kUnitNormTolerance) return false;
    }
    return true;
  }

  // Bitwise equality of shape and payload.
  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.rows_ == b.rows_ && a.dim_ == b.dim_ &&
           std::memcmp(a.data_.data(), b.data_.data(),
                       a.data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t rows_;
  std::size_t dim_;
  std::vector<float> data_;
  bool normalized_;
};

// Selects `indices` rows into a new matrix, preserving order.
inline FeatureMatrix SelectRows(const FeatureMatrix& m,
                                std::span<const std::size_t> indices) {
  std::vector<float> out;
  out.reserve(indices.size() * m.dim());
  for (std::size_t r : indices) {
    if (r >= m.rows()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "row " + std::to_string(r) + " out of range");
    }
    auto src = m.row(r);
    out.insert(out.end(), src.begin(), src.end());
  }
  return FeatureMatrix(indices.size(), m.dim(), std::move(out),
                       m.normalized());
}

// Stacks matrices of equal dim vertically.
inline FeatureMatrix ConcatRows(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "nothing to concatenate");
  }
  const std::size_t dim = parts.front().dim();
  std::size_t rows = 0;
  bool normalized = true;
  std::vector<float> out;
  for (const auto& p : parts) {
    if (p.dim() != dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "cannot stack dim " + std::to_string(p.dim()) + " onto dim " +
                      std::to_string(dim));
    }
    rows += p.rows();
    normalized = normalized && p.normalized();
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return FeatureMatrix(rows, dim, std::move(out), normalized);
}

// Rescales every row to unit L2 norm, accumulating in double.
inline FeatureMatrix L2Normalize(const FeatureMatrix& m) {
  std::vector<float> out(m.data().begin(), m.data().end());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = m.RowNorm(r);
    if (n == 0.0) throw ZeroNormError(r);
    for (std::size_t c = 0; c < m.dim(); ++c) {
      out[r * m.dim() + c] =
          static_cast<float>(static_cast<double>(m.at(r, c)) / n);
    }
  }
  return FeatureMatrix(m.rows(), m.dim(), std::move(out), true);
}

namespace detail {

template <typename T>
T GetLe(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(p[i]) << (8 * i);
  }
  return v;
}

inline std::vector<char> SlurpFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void DumpFile(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace detail

inline std::vector<char> EncodeOtdf(const FeatureMatrix& m) {
  std::vector<char> buf(kOtdfHeaderSize + m.data().size() * 4, '\0');
  char* out = buf.data();
  auto put = [&out](auto v) {
    for (std::size_t i = 0; i < sizeof v; ++i) {
      *out++ = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
  };
  out = std::copy(kOtdfMagic.begin(), kOtdfMagic.end(), out);
  put(static_cast<std::uint32_t>(kOtdfVersion));
  put(static_cast<std::uint64_t>(m.rows()));
  put(static_cast<std::uint64_t>(m.dim()));
  *out = static_cast<char>(kOtdfDtypeFloat32);
  out = buf.data() + kOtdfHeaderSize;  // 6 reserved zero bytes
  for (float v : m.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits);
  }
  return buf;
}

inline FeatureMatrix DecodeOtdf(std::span<const char> bytes,
                                const std::string& source = "<buffer>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || !std::equal(kOtdfMagic.begin(), kOtdfMagic.end(),
                                      bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, source);
  }
  if (bytes.size() < kOtdfHeaderSize) {
    throw Error(ErrorCode::kTruncated, source + ": header shorter than 31 bytes");
  }
  const auto version = detail::GetLe<std::uint32_t>(p + 4);
  if (version != kOtdfVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                source + ": version " + std::to_string(version));
  }
  const auto rows = detail::GetLe<std::uint64_t>(p + 8);
  const auto dim = detail::GetLe<std::uint64_t>(p + 16);
  if (p[24] != kOtdfDtypeFloat32) {
    throw Error(ErrorCode::kUnsupportedDtype,
                source + ": dtype code " + std::to_string(p[24]));
  }
  if (rows == 0 || dim == 0) {
    throw Error(ErrorCode::kInvariantViolation, source + ": empty shape");
  }
  // Compare in value units so a hostile header cannot overflow rows * dim.
  const std::size_t available = (bytes.size() - kOtdfHeaderSize) / 4;
  if (dim > available || rows > available / dim) {
    throw Error(ErrorCode::kTruncated,
                source + ": payload has " +
                    std::to_string(bytes.size() - kOtdfHeaderSize) +
                    " bytes for a " + std::to_string(rows) + "x" +
                    std::to_string(dim) + " matrix");
  }
  const std::size_t count = rows * dim;
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto bits =
        detail::GetLe<std::uint32_t>(p + kOtdfHeaderSize + 4 * i);
    std::memcpy(&data[i], &bits, sizeof bits);
  }
  return FeatureMatrix::Detect(rows, dim, std::move(data));
}

inline void WriteFeatures(const FeatureMatrix& m,
                          const std::filesystem::path& path) {
  const auto buf = EncodeOtdf(m);
  detail::DumpFile(path, {buf.data(), buf.size()});
}

inline FeatureMatrix ReadFeatures(const std::filesystem::path& path) {
  const auto bytes = detail::SlurpFile(path);
  return DecodeOtdf(bytes, path.string());
}

// `dir/stem.otdf` -> `dir/stem<suffix>`.
inline std::filesystem::path SidecarPath(const std::filesystem::path& otdf,
                                         std::string_view suffix) {
  auto p = otdf;
  p.replace_extension();
  p += std::string(suffix);
  return p;
}

inline std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void WriteLines(const std::filesystem::path& path,
                       std::span<const std::string> lines) {
  std::string body;
  for (const auto& l : lines) {
    body += l;
    body += '\n';
  }
  detail::DumpFile(path, body);
}

inline constexpr std::string_view kClassPlaceholder = "[CLASS]";
inline constexpr std::string_view kDefaultPromptTemplate = "a photo of a [CLASS]";

// Ordered ID label vocabulary and the prompt used to embed it.
class LabelSet {
 public:
  explicit LabelSet(std::vector<std::string> names,
                    std::string prompt_template = std::string(kDefaultPromptTemplate))
      : names_(std::move(names)), template_(std::move(prompt_template)) {
    if (names_.empty()) {
      throw Error(ErrorCode::kInvariantViolation, "label set is empty");
    }
    std::set<std::string_view> seen;
    for (const auto& n : names_) {
      if (!seen.insert(n).second) {
        throw Error(ErrorCode::kInvariantViolation, "duplicate label '" + n + "'");
      }
    }
    const auto first = template_.find(kClassPlaceholder);
    if (first == std::string::npos ||
        template_.find(kClassPlaceholder, first + 1) != std::string::npos) {
      throw Error(ErrorCode::kInvariantViolation,
                  "template must contain exactly one [CLASS]: '" + template_ + "'");
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& prompt_template() const noexcept { return template_; }

  std::string Prompt(std::size_t i) const {
    std::string out = template_;
    out.replace(out.find(kClassPlaceholder), kClassPlaceholder.size(),
                names_.at(i));
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::string template_;
};

inline LabelSet ReadLabels(const std::filesystem::path& path) {
  auto lines = ReadLines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return LabelSet(std::move(lines));
}

inline void WriteLabels(const LabelSet& labels,
                        const std::filesystem::path& path) {
  WriteLines(path, labels.names());
}

struct ViewBundleEntry {
  std::string id;
  std::size_t original_row = 0;
  std::size_t view_start = 0;
  std::size_t view_end = 0;  // exclusive

  std::size_t size() const noexcept { return view_end - view_start; }
  friend bool operator==(const ViewBundleEntry&, const ViewBundleEntry&) = default;
};

// Maps each sample to its original-image row and its block of view rows.
struct ViewBundleManifest {
  std::size_t n_views = 0;
  std::vector<ViewBundleEntry> samples;

  friend bool operator==(const ViewBundleManifest&,
                         const ViewBundleManifest&) = default;

  // Checks ranges against the matrices they index. `original_rows` is the
  // row count of the matrix holding the original-image features.
  void Validate(std::size_t view_rows, std::size_t original_rows) const {
    if (n_views == 0) throw Error(ErrorCode::kManifest, "n_views must be >= 1");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    ranges.reserve(samples.size());
    for (const auto& s : samples) {
      if (s.view_end < s.view_start || s.size() != n_views) {
        throw Error(ErrorCode::kManifest,
                    "sample '" + s.id + "' has " +
                        std::to_string(s.view_end - std::min(s.view_end, s.view_start)) +
                        " views, expected " + std::to_string(n_views));
      }
      if (s.view_end > view_rows) {
        throw Error(ErrorCode::kManifest,
                    "sample '" + s.id + "' views end at " +
                        std::to_string(s.view_end) + " but matrix has " +
                        std::to_string(view_rows) + " rows");
      }
      if (s.original_row >= original_rows) {
        throw Error(ErrorCode::kManifest,
                    "sample '" + s.id + "' original row " +
                        std::to_string(s.original_row) + " out of range");
      }
      ranges.emplace_back(s.view_start, s.view_end);
    }
    std::sort(ranges.begin(), ranges.end());
    for (std::size_t i = 1; i < ranges.size(); ++i) {
      if (ranges[i].first < ranges[i - 1].second) {
        throw Error(ErrorCode::kManifest,
                    "view ranges overlap at row " + std::to_string(ranges[i].first));
      }
    }
  }
};

inline std::string ManifestToJson(const ViewBundleManifest& m) {
  nlohmann::ordered_json j;
  j["n_views"] = m.n_views;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["original_row"] = s.original_row;
    e["view_start"] = s.view_start;
    e["view_end"] = s.view_end;
    j["samples"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

inline ViewBundleManifest ManifestFromJson(std::string_view text,
                                           const std::string& source = "<manifest>") {
  try {
    const auto j = nlohmann::json::parse(text);
    ViewBundleManifest m;
    m.n_views = j.at("n_views").get<std::size_t>();
    for (const auto& e : j.at("samples")) {
      m.samples.push_back({e.at("id").get<std::string>(),
                           e.at("original_row").get<std::size_t>(),
                           e.at("view_start").get<std::size_t>(),
                           e.at("view_end").get<std::size_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kManifest, source + ": " + e.what());
  }
}

inline void WriteManifest(const ViewBundleManifest& m,
                          const std::filesystem::path& path) {
  detail::DumpFile(path, ManifestToJson(m));
}

inline ViewBundleManifest ReadManifest(const std::filesystem::path& path) {
  const auto bytes = detail::SlurpFile(path);
  return ManifestFromJson({bytes.data(), bytes.size()}, path.string());
}

// Sample ids for a feature file: the `<stem>.ids.txt` sidecar when present,
// otherwise `<stem>_<row>`.
inline std::vector<std::string> SampleIdsFor(const std::filesystem::path& otdf,
                                             std::size_t rows) {
  const auto ids_path = SidecarPath(otdf, ".ids.txt");
  if (std::filesystem::exists(ids_path)) {
    auto ids = ReadLines(ids_path);
    while (!ids.empty() && ids.back().empty()) ids.pop_back();
    if (ids.size() != rows) {
      throw Error(ErrorCode::kInvalidArgument,
                  ids_path.string() + " lists " + std::to_string(ids.size()) +
                      " ids for " + std::to_string(rows) + " rows");
    }
    return ids;
  }
  const auto stem = otdf.stem().string();
  std::vector<std::string> ids;
  ids.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) ids.push_back(stem + "_" + std::to_string(r));
  return ids;
}

}  // namespace otdet

#endif  // OTDET_FEATSTORE_HPP_
