#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "support.hpp"

using namespace seeco;
using namespace seeco::test_support;

namespace {

// Rotation by angle theta about the array centre, computed in floating point
// and rounded: output (i, j) reads input (r, c) where (r, c) is (i, j)
// rotated back. Independent of the library's integer tables.
Tensor rotate_by_angle(const Tensor& x, double theta) {
  const std::size_t n = x.dim(0), t = x.size() / (n * n);
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      // Quarter turn: output (i, j) reads input (j, n-1-i).
      const double y = static_cast<double>(i) - mid, xx = static_cast<double>(j) - mid;
      const double src_r = std::round(mid + y * std::cos(theta) + xx * std::sin(theta));
      const double src_c = std::round(mid - y * std::sin(theta) + xx * std::cos(theta));
      const auto r = static_cast<std::size_t>(src_r), c = static_cast<std::size_t>(src_c);
      std::copy_n(x.data().begin() + (r * n + c) * t, t, out.data().begin() + (i * n + j) * t);
    }
  return out;
}

std::vector<double> sorted_values(const Tensor& t) {
  std::vector<double> v(t.data().begin(), t.data().end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Rotate, QuarterTurnExample) {
  const Tensor x({2, 2}, {1, 2, 3, 4});
  const Tensor r = gcl::rotate(x, 1, 4);
  EXPECT_TRUE(bit_equal(r, Tensor({2, 2}, {2, 4, 1, 3})));
}

TEST(Rotate, MatchesAngleOracle) {
  RandomStream rng(1);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u}) {
    const Tensor x = random_tensor(rng, {n, n, 2});
    for (std::size_t views : {1u, 2u, 4u})
      for (std::size_t k = 1; k <= views; ++k) {
        const double theta = 2.0 * static_cast<double>(k) * std::numbers::pi / static_cast<double>(views);
        EXPECT_TRUE(bit_equal(gcl::rotate(x, k, views), rotate_by_angle(x, theta))) << n << " " << k << "/" << views;
      }
  }
}

TEST(Rotate, IdentityViewAndComposition) {
  RandomStream rng(2);
  const Tensor x = random_tensor(rng, {5, 5, 3});
  for (std::size_t views : {1u, 2u, 4u}) EXPECT_TRUE(bit_equal(gcl::rotate(x, views, views), x));
  EXPECT_TRUE(bit_equal(gcl::rotate(gcl::rotate(x, 1, 4), 1, 4), gcl::rotate(x, 2, 4)));
  EXPECT_TRUE(bit_equal(gcl::rotate(x, 1, 2), gcl::rotate(x, 2, 4)));
}

TEST(Rotate, InverseRoundTripAndGroupIdentity) {
  RandomStream rng(3);
  const Tensor x = random_tensor(rng, {14, 14, 5});
  for (std::size_t views : {1u, 2u, 4u})
    for (std::size_t k = 1; k <= views; ++k) {
      EXPECT_TRUE(bit_equal(gcl::inverse_rotate(gcl::rotate(x, k, views), k, views), x));
      EXPECT_EQ(sorted_values(gcl::rotate(x, k, views)), sorted_values(x));
    }
  EXPECT_TRUE(bit_equal(gcl::inverse_rotate(x, 1, 4), gcl::rotate(x, 3, 4)));
  EXPECT_TRUE(bit_equal(gcl::inverse_rotate(x, 4, 4), x));
}

TEST(Rotate, Errors) {
  try {
    gcl::rotate(Tensor({2, 3}), 1, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonSquareInput);
  }
  for (std::size_t views : {0u, 3u, 8u}) {
    try {
      gcl::rotate(Tensor({2, 2}), 1, views);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kUnsupportedViewCount);
    }
  }
  EXPECT_THROW(gcl::rotate(Tensor({2, 2}), 0, 4), Error);
  EXPECT_THROW(gcl::rotate(Tensor({2, 2}), 5, 4), Error);
}

TEST(ViewSet, AnglesEndAtFullTurn) {
  const auto a = gcl::ViewSet{4}.angles();
  ASSERT_EQ(a.size(), 4u);
  EXPECT_DOUBLE_EQ(a[0], std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(a[3], 2 * std::numbers::pi);
  EXPECT_THROW(gcl::ViewSet{3}.angles(), Error);
}

TEST(GclTarget, SingleViewIsPrediction) {
  const auto model = vlm::build_model(tiny_config());
  const auto text = vlm::encode_categories(model, {"water", "road"});
  RandomStream rng(4);
  const Tensor img = random_image(rng, 12);
  const auto geo = gcl::gcl_target(model, img, text, 1);
  EXPECT_TRUE(bit_equal(geo.target.scores, vlm::predict(model, img, text).scores));
}

TEST(GclTarget, TargetIsMeanOfViews) {
  const auto model = vlm::build_model(tiny_config());
  const auto text = vlm::encode_categories(model, {"water", "road", "forest"});
  RandomStream rng(5);
  const auto geo = gcl::gcl_target(model, random_image(rng, 12), text, 4);
  ASSERT_EQ(geo.per_view.size(), 4u);
  for (std::size_t i = 0; i < geo.target.scores.size(); ++i) {
    double s = 0.0;
    for (const auto& v : geo.per_view) s += v.scores[i];
    EXPECT_NEAR(geo.target.scores[i], s / 4.0, 1e-12);
  }
}

TEST(GclTarget, ViewsAgreeWithoutPositionsOnPatchConstantImages) {
  auto cfg = tiny_config(4, 4, 8, 2);
  cfg.positional_embeddings = false;
  const auto model = vlm::build_model(cfg);
  const auto text = vlm::encode_categories(model, {"water", "road", "forest"});
  RandomStream rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const auto geo = gcl::gcl_target(model, patch_constant_image(rng, cfg.image_size, cfg.patch_size), text, 4);
    for (const auto& v : geo.per_view) EXPECT_LE(max_abs_diff(v.scores, geo.target.scores), 1e-9);
  }
}

TEST(GclTarget, ConstantStubGivesConstantTarget) {
  const ProbMap stub{Tensor({6, 6, 2}, 0.25)};
  RandomStream rng(7);
  const auto geo = gcl::gcl_target(random_image(rng, 6), 4, [&](const Tensor&) { return stub; });
  EXPECT_TRUE(bit_equal(geo.target.scores, stub.scores));
}

TEST(GclTarget, MeanShiftsByDeltaOverK) {
  RandomStream rng(8);
  std::vector<ProbMap> views;
  for (int k = 0; k < 4; ++k) views.push_back(ProbMap{random_tensor(rng, {3, 3, 2})});
  const ProbMap base = gcl::mean_of(views);
  const Tensor delta = random_tensor(rng, {3, 3, 2});
  views[2].scores = add(views[2].scores, delta);
  const ProbMap shifted = gcl::mean_of(views);
  for (std::size_t i = 0; i < delta.size(); ++i) EXPECT_NEAR(shifted.scores[i] - base.scores[i], delta[i] / 4.0, 1e-14);
}

TEST(GclTarget, RotationEquivariance) {
  const auto model = vlm::build_model(tiny_config(4, 4, 8, 2));
  const auto text = vlm::encode_categories(model, {"water", "road"});
  RandomStream rng(9);
  const Tensor img = random_image(rng, 16);
  const auto geo = gcl::gcl_target(model, img, text, 4);
  const auto geo_rot = gcl::gcl_target(model, gcl::rotate(img, 1, 4), text, 4);
  EXPECT_LE(max_abs_diff(geo_rot.target.scores, gcl::rotate(geo.target.scores, 1, 4)), 1e-9);
}

TEST(GclTargetPl, MaxAggregation) {
  EXPECT_THROW(gcl::gcl_target_pl({}), Error);
  const ProbMap a{Tensor({1, 1, 1}, {0.2})}, b{Tensor({1, 1, 1}, {0.8})};
  EXPECT_EQ(gcl::gcl_target_pl({a, b}).scores[0], 0.8);
  EXPECT_TRUE(bit_equal(gcl::gcl_target_pl({a}).scores, a.scores));
  RandomStream rng(10);
  std::vector<ProbMap> views;
  for (int k = 0; k < 4; ++k) views.push_back(ProbMap{random_tensor(rng, {4, 4, 3})});
  const ProbMap mx = gcl::gcl_target_pl(views), mean = gcl::mean_of(views);
  for (std::size_t i = 0; i < mx.scores.size(); ++i) EXPECT_GE(mx.scores[i], mean.scores[i]);
}
