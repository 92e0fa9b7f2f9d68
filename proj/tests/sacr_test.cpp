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

#include "otdet/sacr.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

namespace otdet {
namespace {

using testing::MatrixFromRows;
using testing::RandomUnitMatrix;

FeatureMatrix Text3of4() {
  return MatrixFromRows({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
}

struct Fixture {
  std::vector<float> original;
  std::vector<std::vector<float>> views;
  std::size_t label;
  std::vector<std::size_t> kept;
  std::vector<std::size_t> selected;
  std::vector<float> refined;
};

// Expected outcomes from tests/oracles/reference_oracles.py with k = 2.
const std::vector<Fixture>& Fixtures() {
  static const std::vector<Fixture> f = {
      {{0.9f, 0.3f, 0.1f, 0.2f},
       {{0.8f, 0.5f, 0.1f, 0.1f}, {0.95f, 0.1f, 0.05f, 0.3f}, {0.3f, 0.9f, 0.1f, 0.1f},
        {0.7f, 0.1f, 0.6f, 0.2f}, {0.6f, 0.2f, 0.2f, 0.9f}},
       0,
       {0, 1, 3, 4},
       {1, 4},
       {0.867169201f, 0.129426166f, 0.0925884247f, 0.471904516f}},
      {{0.2f, 0.3f, 0.9f, 0.1f},
       {{0.1f, 0.2f, 0.8f, 0.4f}, {0.5f, 0.1f, 0.45f, 0.2f}, {0.05f, 0.6f, 0.7f, 0.1f},
        {0.3f, 0.3f, 0.9f, 0.0f}, {0.0f, 0.1f, 1.0f, 0.5f}},
       2,
       {0, 2, 3, 4},
       {4, 0},
       {0.048769094f, 0.146887869f, 0.883649468f, 0.441824734f}},
      {{0.1f, 0.8f, 0.3f, 0.5f},
       {{0.9f, 0.1f, 0.1f, 0.1f}, {0.1f, 0.1f, 0.9f, 0.2f}, {0.7f, 0.2f, 0.3f, 0.4f},
        {0.2f, 0.1f, 0.8f, 0.1f}, {0.8f, 0.3f, 0.2f, 0.0f}},
       1,
       {},
       {},
       {0.10050378f, 0.80403024f, 0.301511347f, 0.502518892f}},
  };
  return f;
}

TEST(Margin, Cases) {
  EXPECT_DOUBLE_EQ(Margin(std::vector<double>{0.9, 0.2, 0.1}), 0.7);
  EXPECT_EQ(Margin(std::vector<double>{0.5, 0.5}), 0.0);
  EXPECT_EQ(Margin(std::vector<double>{0.42}), 0.42);
  EXPECT_DOUBLE_EQ(Margin(std::vector<double>{0.1, 0.3, 0.9, 0.3}), 0.6);
  EXPECT_THROW(Margin(std::vector<double>{}), Error);
}

TEST(Margin, AgreesWithSortOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> len(1, 30);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> x(len(rng));
    for (auto& v : x) v = u(rng);
    if (t % 7 == 0 && x.size() > 2) x[1] = x[0];  // force ties
    EXPECT_EQ(Margin(x), oracle::MarginBySort(x));
  }
}

TEST(SoftmaxEntropy, UniformAndPeaked) {
  EXPECT_NEAR(SoftmaxEntropy(std::vector<double>{0.3, 0.3, 0.3, 0.3}), std::log(4.0), 1e-15);
  EXPECT_LT(SoftmaxEntropy(std::vector<double>{50.0, 0.0}), 1e-18);
}

TEST(ParseConfidenceFunction, RoundTrip) {
  for (auto c : {ConfidenceFunction::kMaxMargin, ConfidenceFunction::kMinMargin,
                 ConfidenceFunction::kMinEntropy}) {
    EXPECT_EQ(ParseConfidenceFunction(ToString(c)), c);
  }
  EXPECT_THROW(ParseConfidenceFunction("max-entropy"), Error);
}

ViewBundle BundleOf(const FeatureMatrix& orig, const FeatureMatrix& views) {
  return {orig.row(0), views.data(), views.dim()};
}

TEST(FilterViews, KeepsAgreeingViewsAndTakesTopK) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0.1f}});
  const auto views = MatrixFromRows({{1, 0.05f}, {0.2f, 1}, {1, 0.5f}, {1, 0}});
  SacrConfig cfg;
  cfg.k = 2;
  const auto d = FilterViews(BundleOf(orig, views), text, cfg, "s");
  EXPECT_EQ(d.sample_id, "s");
  EXPECT_EQ(d.predicted_label, 0u);
  EXPECT_EQ(d.kept_views, (std::vector<std::size_t>{0, 2, 3}));
  ASSERT_EQ(d.selected_views.size(), 2u);
  EXPECT_EQ(d.selected_views[0].view, 3u);
  EXPECT_EQ(d.selected_views[1].view, 0u);
  EXPECT_FALSE(d.fallback_used);
}

TEST(FilterViews, FewerSurvivorsThanKKeepsAll) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto views = MatrixFromRows({{1, 0.2f}, {0, 1}});
  SacrConfig cfg;
  cfg.k = 20;
  const auto d = FilterViews(BundleOf(orig, views), text, cfg);
  ASSERT_EQ(d.selected_views.size(), 1u);
  EXPECT_EQ(d.selected_views[0].view, 0u);
}

TEST(FilterViews, NoSurvivorsFallsBack) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto views = MatrixFromRows({{0, 1}, {0.1f, 1}});
  const auto d = FilterViews(BundleOf(orig, views), text, SacrConfig{});
  EXPECT_TRUE(d.fallback_used);
  EXPECT_TRUE(d.selected_views.empty());
}

TEST(FilterViews, ConsistencyCanBeDisabled) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto views = MatrixFromRows({{0, 1}, {0.6f, 0.8f}});
  SacrConfig cfg;
  cfg.require_label_consistency = false;
  const auto d = FilterViews(BundleOf(orig, views), text, cfg);
  EXPECT_EQ(d.kept_views.size(), 2u);
  EXPECT_EQ(d.selected_views[0].view, 0u);
}

TEST(FilterViews, TiesGoToLowerIndex) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto views = MatrixFromRows({{1, 0.3f}, {1, 0.1f}, {1, 0.3f}, {1, 0.1f}});
  SacrConfig cfg;
  cfg.k = 3;
  const auto d = FilterViews(BundleOf(orig, views), text, cfg);
  ASSERT_EQ(d.selected_views.size(), 3u);
  EXPECT_EQ(d.selected_views[0].view, 1u);
  EXPECT_EQ(d.selected_views[1].view, 3u);
  EXPECT_EQ(d.selected_views[2].view, 0u);
}

TEST(FilterViews, MinMarginPrefersAmbiguousViews) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto views = MatrixFromRows({{1, 0}, {1, 0.9f}, {1, 0.5f}});
  SacrConfig cfg;
  cfg.k = 1;
  cfg.confidence = ConfidenceFunction::kMinMargin;
  const auto d = FilterViews(BundleOf(orig, views), text, cfg);
  EXPECT_EQ(d.selected_views[0].view, 1u);
  EXPECT_GT(d.selected_views[0].weight, 0.0);
  EXPECT_DOUBLE_EQ(d.selected_views[0].confidence, -d.selected_views[0].weight);
}

TEST(FilterViews, MinEntropyMatchesMaxMarginForTwoLabels) {
  // With two labels, entropy is monotone decreasing in the margin.
  std::mt19937_64 rng(12);
  const auto text = RandomUnitMatrix(rng, 2, 8);
  for (int t = 0; t < 50; ++t) {
    const auto orig = RandomUnitMatrix(rng, 1, 8);
    const auto views = RandomUnitMatrix(rng, 9, 8);
    SacrConfig a, b;
    a.k = b.k = 3;
    b.confidence = ConfidenceFunction::kMinEntropy;
    const auto da = FilterViews(BundleOf(orig, views), text, a);
    const auto db = FilterViews(BundleOf(orig, views), text, b);
    ASSERT_EQ(da.selected_views.size(), db.selected_views.size());
    for (std::size_t s = 0; s < da.selected_views.size(); ++s) {
      EXPECT_EQ(da.selected_views[s].view, db.selected_views[s].view);
    }
  }
}

TEST(FilterViews, SelectionMaximisesTotalConfidence) {
  // Six views, every subset of size k enumerated.
  std::mt19937_64 rng(31);
  const auto text = RandomUnitMatrix(rng, 4, 6);
  for (int t = 0; t < 100; ++t) {
    const auto orig = RandomUnitMatrix(rng, 1, 6);
    const auto views = RandomUnitMatrix(rng, 6, 6);
    SacrConfig cfg;
    cfg.k = 1 + t % 6;
    cfg.require_label_consistency = false;
    const auto d = FilterViews(BundleOf(orig, views), text, cfg);
    std::vector<double> conf;
    for (std::size_t v = 0; v < 6; ++v) conf.push_back(Margin(LabelLogits(views.row(v), text)));
    const auto best = oracle::BestSubsetByEnumeration(conf, cfg.k);
    double got = 0.0, want = 0.0;
    for (const auto& s : d.selected_views) got += conf[s.view];
    for (auto v : best) want += conf[v];
    EXPECT_NEAR(got, want, 1e-15);
  }
}

TEST(FilterViews, RejectsBadInput) {
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto orig = MatrixFromRows({{1, 0}});
  const auto wrong = MatrixFromRows({{1, 0, 0}});
  EXPECT_THROW(FilterViews({orig.row(0), wrong.data(), 3}, text, SacrConfig{}), Error);
  EXPECT_THROW(FilterViews({orig.row(0), {}, 2}, text, SacrConfig{}), Error);
  SacrConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(FilterViews(BundleOf(orig, orig), text, cfg), Error);
}

TEST(Fuse, WeightedDirection) {
  const std::vector<float> a{1, 0}, b{0, 1};
  const std::vector<std::span<const float>> feats{a, b};
  const auto f = Fuse(feats, std::vector<double>{3.0, 1.0});
  EXPECT_NEAR(f[0], 0.9486833, 1e-6);
  EXPECT_NEAR(f[1], 0.3162278, 1e-6);
}

TEST(Fuse, SingleViewIsNormalised) {
  const std::vector<float> a{3, 4};
  const std::vector<std::span<const float>> feats{a};
  const auto f = Fuse(feats, std::vector<double>{0.25});
  EXPECT_FLOAT_EQ(f[0], 0.6f);
  EXPECT_FLOAT_EQ(f[1], 0.8f);
}

TEST(Fuse, ScaleInvariantInWeights) {
  std::mt19937_64 rng(9);
  const auto m = RandomUnitMatrix(rng, 5, 12);
  std::vector<std::span<const float>> feats;
  for (std::size_t r = 0; r < 5; ++r) feats.push_back(m.row(r));
  const std::vector<double> w{0.1, 0.5, 0.2, 0.05, 0.9};
  std::vector<double> w7(w);
  for (auto& x : w7) x *= 7.0;
  const auto a = Fuse(feats, w);
  const auto b = Fuse(feats, w7);
  for (std::size_t c = 0; c < 12; ++c) EXPECT_NEAR(a[c], b[c], 1e-6);
}

TEST(Fuse, DegenerateCases) {
  const std::vector<float> a{1, 0}, b{-1, 0};
  const std::vector<std::span<const float>> one{a}, two{a, b};
  try {
    Fuse(one, std::vector<double>{0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
  try {
    Fuse(two, std::vector<double>{1.0, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerate);
  }
  EXPECT_THROW(Fuse(one, std::vector<double>{-1.0}), Error);
  EXPECT_THROW(Fuse(two, std::vector<double>{1.0}), Error);
}

struct FixtureInputs {
  FeatureMatrix originals;
  FeatureMatrix views;
  ViewBundleManifest manifest;
};

FixtureInputs BuildFixtureInputs() {
  std::vector<std::vector<float>> orig, views;
  ViewBundleManifest manifest;
  manifest.n_views = 5;
  for (std::size_t s = 0; s < Fixtures().size(); ++s) {
    const auto& f = Fixtures()[s];
    orig.push_back(f.original);
    manifest.samples.push_back({std::string(1, char('a' + s)), s, views.size(),
                                views.size() + f.views.size()});
    views.insert(views.end(), f.views.begin(), f.views.end());
  }
  return {MatrixFromRows(orig), MatrixFromRows(views), manifest};
}

TEST(RefineAll, HandWorkedFixtures) {
  const auto in = BuildFixtureInputs();
  SacrConfig cfg;
  cfg.k = 2;
  const auto result = RefineAll(in.views, in.manifest, Text3of4(), cfg, &in.originals);
  ASSERT_EQ(result.refined.rows(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& f = Fixtures()[s];
    const auto& d = result.decisions[s];
    EXPECT_EQ(d.predicted_label, f.label) << s;
    EXPECT_EQ(d.kept_views, f.kept) << s;
    std::vector<std::size_t> sel;
    for (const auto& v : d.selected_views) sel.push_back(v.view);
    EXPECT_EQ(sel, f.selected) << s;
    EXPECT_EQ(d.fallback_used, f.kept.empty());
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(result.refined.at(s, c), f.refined[c], 1e-6);
  }
  for (std::size_t s = 0; s < 3; ++s) EXPECT_NEAR(result.refined.RowNorm(s), 1.0, 1e-6);
}

TEST(RefineAll, FallbackCopiesOriginalBitwise) {
  const auto in = BuildFixtureInputs();
  SacrConfig cfg;
  cfg.k = 2;
  const auto result = RefineAll(in.views, in.manifest, Text3of4(), cfg, &in.originals);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(result.refined.at(2, c), in.originals.at(2, c));
}

TEST(RefineAll, OriginalsDefaultToViewRows) {
  // Without a separate originals matrix, original_row indexes the view file.
  const auto text = MatrixFromRows({{1, 0}, {0, 1}});
  const auto views = MatrixFromRows({{1, 0}, {1, 0.2f}, {0.2f, 1}});
  ViewBundleManifest m{3, {{"x", 0, 0, 3}}};
  const auto r = RefineAll(views, m, text, SacrConfig{});
  EXPECT_EQ(r.decisions[0].kept_views, (std::vector<std::size_t>{0, 1}));
}

TEST(RefineAll, RejectsMismatches) {
  const auto in = BuildFixtureInputs();
  const auto text2 = MatrixFromRows({{1, 0}, {0, 1}});
  EXPECT_THROW(RefineAll(in.views, in.manifest, text2, SacrConfig{}, &in.originals), Error);
  auto bad = in.manifest;
  bad.samples[2].view_end = 16;
  EXPECT_THROW(RefineAll(in.views, bad, Text3of4(), SacrConfig{}, &in.originals), Error);
  EXPECT_THROW(RefineAll(in.views, ViewBundleManifest{5, {}}, Text3of4(), SacrConfig{},
                         &in.originals),
               Error);
}

TEST(RefineAll, PropertiesOnRandomBundles) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> nviews(1, 12), nk(1, 6);
  const auto text = RandomUnitMatrix(rng, 5, 16);
  for (int t = 0; t < 200; ++t) {
    const std::size_t v = nviews(rng);
    const auto orig = RandomUnitMatrix(rng, 1, 16);
    const auto views = RandomUnitMatrix(rng, v, 16);
    SacrConfig cfg;
    cfg.k = nk(rng);
    ViewBundleManifest m{v, {{"s", 0, 0, v}}};
    const auto r = RefineAll(views, m, text, cfg, &orig);
    const auto& d = r.decisions[0];
    EXPECT_LE(d.selected_views.size(), std::min(cfg.k, v));
    for (std::size_t kv : d.kept_views) {
      EXPECT_EQ(ArgMax(LabelLogits(views.row(kv), text)), d.predicted_label);
    }
    for (const auto& s : d.selected_views) {
      EXPECT_NE(std::find(d.kept_views.begin(), d.kept_views.end(), s.view),
                d.kept_views.end());
    }
    for (std::size_t s = 1; s < d.selected_views.size(); ++s) {
      EXPECT_GE(d.selected_views[s - 1].confidence, d.selected_views[s].confidence);
    }
    EXPECT_NEAR(r.refined.RowNorm(0), 1.0, 1e-6);
    EXPECT_EQ(d.fallback_used, d.kept_views.empty());
  }
}

TEST(DecisionsToJsonl, OneObjectPerLine) {
  const auto in = BuildFixtureInputs();
  SacrConfig cfg;
  cfg.k = 2;
  const auto r = RefineAll(in.views, in.manifest, Text3of4(), cfg, &in.originals);
  EXPECT_EQ(DecisionsToJsonl(r.decisions),
            "{\"id\":\"a\",\"predicted_label\":0,\"kept\":4,\"selected\":[1,4],"
            "\"fallback\":false}\n"
            "{\"id\":\"b\",\"predicted_label\":2,\"kept\":4,\"selected\":[4,0],"
            "\"fallback\":false}\n"
            "{\"id\":\"c\",\"predicted_label\":1,\"kept\":0,\"selected\":[],"
            "\"fallback\":true}\n");
}

}  // namespace
}  // namespace otdet
